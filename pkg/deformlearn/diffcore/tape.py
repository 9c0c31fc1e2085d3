""" Reverse-mode differentiation over small dense float64 arrays.

Every operation in `deformlearn.diffcore.ops` returns a new `Value` that
remembers its parents and a closure propagating the output gradient back to
them. The graph is rebuilt on every forward pass; `backward()` walks it once
in reverse topological order.
"""
import itertools
from collections import OrderedDict

import numpy as np

from deformlearn.exc import ContractViolation

_ids = itertools.count()


class Value(object):
    """
    A node of the computation graph.

    Parameters
    ----------
    data : array_like
        Payload, stored as a float64 ndarray (0-d for scalars).
    op : str
        Operation tag ('leaf' for inputs).
    parents : tuple of Value
    backward : callable, optional
        Called with the gradient of this node; accumulates into parents.
    requires_grad : bool, optional
        Defaults to True if any parent requires a gradient.
    """
    __slots__ = ('id', 'data', 'op', 'parents', 'grad', 'requires_grad',
                 '_backward')

    # Make numpy defer to our reflected operators (ndarray + Value).
    __array_ufunc__ = None

    def __init__(self, data, op='leaf', parents=(), backward=None,
                 requires_grad=None):
        self.id = next(_ids)
        self.data = np.asarray(data, dtype=np.float64)
        self.op = op
        self.parents = tuple(parents)
        self._backward = backward
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self.parents)
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        return 'Value(op={}, shape={}, id={})'.format(self.op, self.shape,
                                                      self.id)


def variable(data):
    """ A leaf the caller wants gradients for. """
    return Value(np.array(data, dtype=np.float64), requires_grad=True)


def constant(data):
    return Value(data, requires_grad=False)


def accumulate(node, grad):
    if not node.requires_grad:
        return
    if node.grad is None:
        node.grad = np.array(grad, dtype=np.float64)
    else:
        node.grad = node.grad + grad


def topological_order(root):
    """ Nodes reachable from root that require gradients, parents first. """
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.id in visited or not node.requires_grad:
            continue
        visited.add(node.id)
        stack.append((node, True))
        for parent in reversed(node.parents):
            if parent.id not in visited and parent.requires_grad:
                stack.append((parent, False))
    return order


class GradientMap(dict):
    """ Leaf -> gradient. Leaves that do not influence the root map to
    zeros. """
    def __missing__(self, leaf):
        return np.zeros_like(leaf.data)


def backward(root):
    """
    Gradient of a scalar root with respect to every leaf it depends on.

    Gradients stored on intermediate nodes are reset first, so calling
    backward() twice on the same graph yields identical results.

    Returns
    -------
    GradientMap

    Raises
    ------
    ContractViolation
        If root is not a scalar or its payload is not finite.
    """
    if root.data.size != 1:
        raise ContractViolation('backward() needs a scalar root, got shape {}'
                                .format(root.shape))
    if not np.isfinite(root.data).all():
        raise ContractViolation('backward() root payload is not finite')
    order = topological_order(root)
    for node in order:
        node.grad = None
    grads = GradientMap()
    if not order:
        return grads
    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        if node.grad is not None and node._backward is not None:
            node._backward(node.grad)
    for node in order:
        if not node.parents:
            grads[node] = node.grad if node.grad is not None else \
                np.zeros_like(node.data)
    return grads


class Tape(object):
    """
    Named leaves for one forward pass.

    Optimization loops keep their parameters as plain arrays and register
    them on a fresh Tape every iteration:

        tape = Tape()
        pose = tape.variable('pose', params['pose'])
        loss = some_loss(pose)
        grads = tape.gradients(loss)    # {'pose': ndarray}
    """
    def __init__(self):
        self.leaves = OrderedDict()

    def variable(self, name, data):
        if name in self.leaves:
            raise ContractViolation('leaf {!r} registered twice'.format(name))
        leaf = variable(data)
        self.leaves[name] = leaf
        return leaf

    def gradients(self, root):
        grads = backward(root)
        return OrderedDict((name, grads[leaf])
                           for name, leaf in self.leaves.items())
