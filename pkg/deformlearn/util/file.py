import os


def mkdirp(path):
    """ An equivalent to mkdir -p.

    Parameters
    ----------
    path : str
        Pathname to create.
    """
    if path:
        os.makedirs(path, exist_ok=True)
