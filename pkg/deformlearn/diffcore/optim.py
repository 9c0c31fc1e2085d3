""" Adam, on flat float64 parameter vectors and on dicts of named arrays. """
from collections import OrderedDict

import numpy as np

from deformlearn.config import config
from deformlearn.exc import ContractViolation


class AdamState(object):
    """
    Moments and step count for one parameter vector.

    Parameters
    ----------
    size : int
        Length of the parameter vector.
    lr : float
    beta1, beta2, eps : float, optional
        Default to the ADAM_* config values.
    """
    def __init__(self, size, lr, beta1=None, beta2=None, eps=None):
        self.step = 0
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.lr = float(lr)
        self.beta1 = config['ADAM_BETA1'] if beta1 is None else beta1
        self.beta2 = config['ADAM_BETA2'] if beta2 is None else beta2
        self.eps = config['ADAM_EPS'] if eps is None else eps

    def copy(self):
        other = AdamState(len(self.m), self.lr, self.beta1, self.beta2,
                          self.eps)
        other.step = self.step
        other.m = self.m.copy()
        other.v = self.v.copy()
        return other

    def __repr__(self):
        return 'AdamState(step={}, size={}, lr={})'.format(
            self.step, len(self.m), self.lr)


def adam_step(state, params, grads):
    """
    One bias-corrected Adam update.

    The input state is left untouched; a new state is returned alongside the
    updated parameters.

    Returns
    -------
    tuple of (ndarray, AdamState)

    Raises
    ------
    ContractViolation
        If params, grads and the state's moments differ in length.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ContractViolation(
            'adam_step: params {}, grads {} and moments {} differ in shape'
            .format(params.shape, grads.shape, state.m.shape))
    new = state.copy()
    new.step += 1
    new.m = new.beta1 * state.m + (1.0 - new.beta1) * grads
    new.v = new.beta2 * state.v + (1.0 - new.beta2) * grads * grads
    m_hat = new.m / (1.0 - new.beta1 ** new.step)
    v_hat = new.v / (1.0 - new.beta2 ** new.step)
    updated = params - new.lr * m_hat / (np.sqrt(v_hat) + new.eps)
    return updated, new


class Adam(object):
    """
    Adam over a dict of named arrays, as produced by `Tape.gradients()`.

    Each name gets its own `AdamState`, shaped after the flattened array.

        opt = Adam(params, lr=0.1)
        for _ in range(n):
            params = opt.step(params, grads_for(params))
    """
    def __init__(self, params, lr, beta1=None, beta2=None, eps=None):
        self.states = OrderedDict(
            (name, AdamState(np.size(value), lr, beta1, beta2, eps))
            for name, value in params.items())

    @property
    def step_count(self):
        return max([s.step for s in self.states.values()] or [0])

    def step(self, params, grads):
        if set(params) != set(self.states):
            raise ContractViolation('Adam.step: parameter names {} do not '
                                    'match {}'.format(sorted(params),
                                                      sorted(self.states)))
        updated = OrderedDict()
        for name, value in params.items():
            value = np.asarray(value, dtype=np.float64)
            flat, self.states[name] = adam_step(
                self.states[name], value.ravel(),
                np.asarray(grads[name], dtype=np.float64).ravel())
            updated[name] = flat.reshape(value.shape)
        return updated
