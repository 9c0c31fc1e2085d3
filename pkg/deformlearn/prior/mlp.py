""" Fully connected networks with leaky-rectifier hidden layers. """
from collections import OrderedDict

import numpy as np

from deformlearn.diffcore import ops
from deformlearn.exc import ContractViolation, MalformedFileError


class Mlp(object):
    """
    Parameters
    ----------
    widths : list of int
        Input width, hidden widths, output width; len(widths) - 1 affine
        layers.
    rng : numpy.random.Generator, optional
        Weights are He-initialized from it; all zeros without one.
    slope : float
        Leaky-rectifier slope between layers. The last layer is affine.
    output : str
        'linear' or 'logit'. Logit networks are read through sigmoid.
    """
    def __init__(self, widths, rng=None, slope=0.2, output='linear'):
        if len(widths) < 2:
            raise ContractViolation('an Mlp needs at least one layer')
        if output not in ('linear', 'logit'):
            raise ContractViolation('unknown output {!r}'.format(output))
        self.widths = [int(w) for w in widths]
        self.slope = float(slope)
        self.output = output
        self.params = OrderedDict()
        for k, (n_in, n_out) in enumerate(zip(self.widths[:-1],
                                              self.widths[1:])):
            if rng is None:
                weight = np.zeros((n_in, n_out))
            else:
                weight = rng.standard_normal((n_in, n_out)) * \
                    np.sqrt(2.0 / ((1.0 + self.slope ** 2) * n_in))
            self.params['W{}'.format(k)] = weight
            self.params['b{}'.format(k)] = np.zeros(n_out)

    @property
    def num_layers(self):
        return len(self.widths) - 1

    @property
    def in_width(self):
        return self.widths[0]

    @property
    def out_width(self):
        return self.widths[-1]

    def register(self, tape, prefix):
        """ Put every weight on `tape` as `<prefix>.<name>` leaves. """
        return OrderedDict((name, tape.variable('{}.{}'.format(prefix, name),
                                                value))
                           for name, value in self.params.items())

    def forward(self, x, leaves=None):
        """ (B, in) -> (B, out); logits for 'logit' networks. """
        weights = leaves if leaves is not None else self.params
        h = ops.as_value(x)
        if h.shape[-1] != self.in_width:
            raise ContractViolation('Mlp expects {} inputs, got {}'.format(
                self.in_width, h.shape))
        for k in range(self.num_layers):
            h = ops.add(ops.matmul(h, weights['W{}'.format(k)]),
                        weights['b{}'.format(k)])
            if k < self.num_layers - 1:
                h = ops.leaky_relu(h, self.slope)
        return h

    def __call__(self, x, leaves=None):
        out = self.forward(x, leaves)
        if self.output == 'logit':
            out = ops.sigmoid(out)
        return out

    def predict(self, x):
        """ Plain-array evaluation. """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return self(x).data

    def update(self, params):
        for name, value in params.items():
            if name not in self.params:
                raise ContractViolation('unknown weight {!r}'.format(name))
            self.params[name] = np.asarray(value, dtype=np.float64)

    def copy(self):
        other = Mlp(self.widths, slope=self.slope, output=self.output)
        other.update({k: v.copy() for k, v in self.params.items()})
        return other

    def to_dict(self):
        return {'widths': self.widths, 'slope': self.slope,
                'output': self.output,
                'params': {name: value.tolist()
                           for name, value in self.params.items()}}

    @classmethod
    def from_dict(cls, data, path='<mlp>'):
        try:
            mlp = cls(data['widths'], slope=data['slope'],
                      output=data['output'])
            params = {name: np.asarray(value, dtype=np.float64)
                      for name, value in data['params'].items()}
        except (KeyError, TypeError, ValueError, ContractViolation) as e:
            raise MalformedFileError(path, 'bad network: {}'.format(e))
        for name, value in mlp.params.items():
            if name not in params or params[name].shape != value.shape:
                raise MalformedFileError(path, 'missing or misshapen weight',
                                         field=name)
        mlp.update(params)
        return mlp


def build_mlp(n_in, n_out, hidden, layers, rng, slope=0.2, output='linear'):
    return Mlp([n_in] + [hidden] * (layers - 1) + [n_out], rng, slope,
               output)
