import numpy as np

from deformlearn.diffcore.tape import variable, backward

# Added to the denominator of the relative error.
RELATIVE_FLOOR = 1e-12


class GradientCheck(object):
    """ Outcome of `check_gradient`. """
    def __init__(self, max_error, nonfinite, analytic, numeric):
        self.max_error = max_error
        self.nonfinite = nonfinite
        self.analytic = analytic
        self.numeric = numeric

    @property
    def ok(self):
        return self.nonfinite == 0

    def __float__(self):
        return float(self.max_error)

    def __repr__(self):
        return 'GradientCheck(max_error={:.3g}, nonfinite={})'.format(
            self.max_error, self.nonfinite)


def check_gradient(f, x, step=1e-5):
    """
    Compare the reverse-mode gradient of f at x against central finite
    differences.

    Parameters
    ----------
    f : callable
        Maps a Value holding a float64 vector (any shape) to a scalar Value.
    x : array_like
    step : float

    Returns
    -------
    GradientCheck
        max_error is the max over coordinates of
        |analytic - numeric| / (|analytic| + |numeric| + 1e-12); coordinates
        where either side is not finite are left out of the max and counted
        in `nonfinite` instead.
    """
    x = np.array(x, dtype=np.float64)
    leaf = variable(x)
    root = f(leaf)
    if np.isfinite(root.data).all():
        analytic = backward(root)[leaf]
    else:
        analytic = np.full(x.shape, np.nan)

    numeric = np.empty(x.shape)
    flat = x.ravel()
    for i in range(flat.size):
        plus = flat.copy()
        minus = flat.copy()
        plus[i] += step
        minus[i] -= step
        hi = float(f(variable(plus.reshape(x.shape))).data)
        lo = float(f(variable(minus.reshape(x.shape))).data)
        numeric.flat[i] = (hi - lo) / (2.0 * step)

    finite = np.isfinite(analytic) & np.isfinite(numeric)
    error = np.abs(analytic - numeric) / (
        np.abs(analytic) + np.abs(numeric) + RELATIVE_FLOOR)
    max_error = float(error[finite].max()) if finite.any() else 0.0
    return GradientCheck(max_error, int((~finite).sum()), analytic, numeric)
