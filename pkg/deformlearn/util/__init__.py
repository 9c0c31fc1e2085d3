""" Non-domain-specific utility modules. These modules should not import
    anything from the domain packages. """
