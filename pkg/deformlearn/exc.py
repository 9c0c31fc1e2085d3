class DeformLearnError(Exception):
    pass


class ContractViolation(DeformLearnError, ValueError):
    """ Raised when an operation is called outside its preconditions. """
    pass


class DegenerateRotation(DeformLearnError):
    pass


class DegeneratePose(DeformLearnError):
    pass


class NonFiniteLoss(DeformLearnError):
    """ A loss or gradient stopped being finite during optimization. """
    def __init__(self, message, sample_id=None, iteration=None, terms=None):
        DeformLearnError.__init__(self, message)
        self.sample_id = sample_id
        self.iteration = iteration
        self.terms = terms or {}


class MalformedFileError(DeformLearnError):
    """ A structurally invalid input file.

    Parameters
    ----------
    path : str
    line : int or None
        1-based line (JSON lines files) or record index of the offending
        entry.
    field : str or None
        Name of the offending field.
    reason : str
    """
    def __init__(self, path, reason, line=None, field=None):
        self.path = path
        self.line = line
        self.field = field
        self.reason = reason
        location = path if line is None else '{}:{}'.format(path, line)
        if field is not None:
            location = '{}: {}'.format(location, field)
        DeformLearnError.__init__(self, '{}: {}'.format(location, reason))


class RoundFailed(DeformLearnError):
    def __init__(self, round_index, phase, cause):
        self.round_index = round_index
        self.phase = phase
        DeformLearnError.__init__(
            self, 'deform-learn round {} failed during {}: {}'.format(
                round_index, phase, cause))
