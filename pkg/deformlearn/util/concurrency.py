from concurrent.futures import ThreadPoolExecutor

from deformlearn.log import get_logger, log_uncaught_errors
log = get_logger()


class Outcome(object):
    """ Result of one task: exactly one of `value` and `error` is set. """
    __slots__ = ('value', 'error')

    def __init__(self, value=None, error=None):
        self.value = value
        self.error = error

    @property
    def ok(self):
        return self.error is None


def _guarded(func, item, logger, errmsg):
    try:
        return Outcome(value=func(item))
    except Exception as e:
        log_uncaught_errors(logger, message=errmsg)
        return Outcome(error=e)


def run_all(func, items, threads=1, logger=None, errmsg=None):
    """
    Call func on every item, on up to `threads` worker threads, and wait for
    all of them.

    Failures are logged and returned, never raised, so one bad item cannot
    take down the others.

    Returns
    -------
    list of Outcome
        In the order of `items`, whatever order the tasks finished in.
    """
    items = list(items)
    logger = logger or log
    errmsg = errmsg or 'task failed'
    if threads <= 1 or len(items) <= 1:
        return [_guarded(func, item, logger, errmsg) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_guarded, func, item, logger, errmsg)
                   for item in items]
        return [f.result() for f in futures]
