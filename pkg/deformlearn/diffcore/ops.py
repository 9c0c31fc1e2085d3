""" Differentiable operations on `Value` nodes.

Elementwise operations broadcast the way numpy does; gradients are summed
back to each operand's shape. Importing this module also installs the
arithmetic operators on `Value`.
"""
import numpy as np

from deformlearn.diffcore.tape import Value, accumulate, constant  # noqa: F401
from deformlearn.exc import ContractViolation, DegenerateRotation

# Pivot norms below this make Gram-Schmidt ill-defined.
GRAM_SCHMIDT_MIN_NORM = 1e-10

# Below this rotation angle the Rodrigues coefficients use series forms.
_SMALL_ANGLE = 1e-3


def as_value(x):
    if isinstance(x, Value):
        return x
    return Value(x, requires_grad=False)


def unbroadcast(grad, shape):
    """ Sum a broadcast gradient back down to `shape`. """
    grad = np.asarray(grad)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _unary(x, data, op, local_grad):
    """ Elementwise op whose derivative is `local_grad` (same shape). """
    def _backward(g):
        accumulate(x, g * local_grad)
    return Value(data, op, (x,), _backward)


# Elementwise arithmetic

def add(a, b):
    a, b = as_value(a), as_value(b)

    def _backward(g):
        accumulate(a, unbroadcast(g, a.shape))
        accumulate(b, unbroadcast(g, b.shape))
    return Value(a.data + b.data, 'add', (a, b), _backward)


def sub(a, b):
    a, b = as_value(a), as_value(b)

    def _backward(g):
        accumulate(a, unbroadcast(g, a.shape))
        accumulate(b, unbroadcast(-g, b.shape))
    return Value(a.data - b.data, 'sub', (a, b), _backward)


def mul(a, b):
    a, b = as_value(a), as_value(b)

    def _backward(g):
        accumulate(a, unbroadcast(g * b.data, a.shape))
        accumulate(b, unbroadcast(g * a.data, b.shape))
    return Value(a.data * b.data, 'mul', (a, b), _backward)


def div(a, b):
    a, b = as_value(a), as_value(b)

    def _backward(g):
        accumulate(a, unbroadcast(g / b.data, a.shape))
        accumulate(b, unbroadcast(-g * a.data / (b.data * b.data), b.shape))
    return Value(a.data / b.data, 'div', (a, b), _backward)


def neg(a):
    a = as_value(a)
    return _unary(a, -a.data, 'neg', -1.0)


def power(a, exponent):
    """ a ** exponent for a constant real exponent. """
    a = as_value(a)
    exponent = float(exponent)
    local = exponent * a.data ** (exponent - 1.0)
    return _unary(a, a.data ** exponent, 'pow', local)


def square(a):
    a = as_value(a)
    return _unary(a, a.data * a.data, 'square', 2.0 * a.data)


def exp(a):
    a = as_value(a)
    out = np.exp(a.data)
    return _unary(a, out, 'exp', out)


def log(a):
    a = as_value(a)
    return _unary(a, np.log(a.data), 'log', 1.0 / a.data)


def sin(a):
    a = as_value(a)
    return _unary(a, np.sin(a.data), 'sin', np.cos(a.data))


def cos(a):
    a = as_value(a)
    return _unary(a, np.cos(a.data), 'cos', -np.sin(a.data))


def sqrt(a):
    a = as_value(a)
    out = np.sqrt(a.data)
    return _unary(a, out, 'sqrt', 0.5 / out)


def sigmoid(a):
    a = as_value(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _unary(a, out, 'sigmoid', out * (1.0 - out))


def log_sigmoid(a):
    """ log(sigmoid(a)), stable for large |a|. """
    a = as_value(a)
    out = -np.logaddexp(0.0, -a.data)
    local = 0.5 * (1.0 - np.tanh(0.5 * a.data))
    return _unary(a, out, 'log_sigmoid', local)


def leaky_relu(a, slope=0.2):
    a = as_value(a)
    positive = a.data > 0
    out = np.where(positive, a.data, slope * a.data)
    return _unary(a, out, 'leaky_relu', np.where(positive, 1.0, slope))


def clip_min(a, floor):
    """ max(a, floor) for a constant floor; no gradient where clipped. """
    a = as_value(a)
    keep = a.data > floor
    return _unary(a, np.where(keep, a.data, floor), 'clip_min',
                  keep.astype(np.float64))


def smooth_l1(a, delta=1.0):
    """ Elementwise Huber-style smooth L1: 0.5 x^2 for |x| <= delta (taken
    over delta), |x| - 0.5 delta otherwise. """
    a = as_value(a)
    x = a.data
    inside = np.abs(x) <= delta
    out = np.where(inside, 0.5 * x * x / delta, np.abs(x) - 0.5 * delta)
    local = np.where(inside, x / delta, np.sign(x))
    return _unary(a, out, 'smooth_l1', local)


# Reductions and shape manipulation

def sum(a, axis=None, keepdims=False):
    a = as_value(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def _backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        accumulate(a, np.broadcast_to(g, a.shape))
    return Value(out, 'sum', (a,), _backward)


def mean(a, axis=None, keepdims=False):
    a = as_value(a)
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    if count == 0:
        raise ContractViolation('mean over an empty axis')
    return div(sum(a, axis=axis, keepdims=keepdims), float(count))


def reshape(a, shape):
    a = as_value(a)

    def _backward(g):
        accumulate(a, g.reshape(a.shape))
    return Value(a.data.reshape(shape), 'reshape', (a,), _backward)


def transpose(a, axes):
    a = as_value(a)
    inverse = np.argsort(axes)

    def _backward(g):
        accumulate(a, np.transpose(g, inverse))
    return Value(np.transpose(a.data, axes), 'transpose', (a,), _backward)


def swap_last(a):
    """ Transpose of the trailing two axes. """
    a = as_value(a)
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, tuple(axes))


def _is_basic_index(index):
    parts = index if isinstance(index, tuple) else (index,)
    return all(p is Ellipsis or p is None or
               isinstance(p, (int, np.integer, slice)) for p in parts)


def getitem(a, index):
    a = as_value(a)
    basic = _is_basic_index(index)

    def _backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] += g
        else:
            # Fancy indices may repeat; add.at accumulates duplicates.
            np.add.at(full, index, g)
        accumulate(a, full)
    return Value(a.data[index], 'getitem', (a,), _backward)


def stack(values, axis=0):
    values = [as_value(v) for v in values]

    def _backward(g):
        for i, v in enumerate(values):
            accumulate(v, np.take(g, i, axis=axis))
    return Value(np.stack([v.data for v in values], axis=axis), 'stack',
                 values, _backward)


def concatenate(values, axis=0):
    values = [as_value(v) for v in values]
    sizes = [v.shape[axis] for v in values]
    splits = np.cumsum(sizes)[:-1]

    def _backward(g):
        for v, part in zip(values, np.split(g, splits, axis=axis)):
            accumulate(v, part)
    return Value(np.concatenate([v.data for v in values], axis=axis),
                 'concatenate', values, _backward)


def matmul(a, b):
    """ Batched matrix product with numpy broadcasting; both operands need
    at least two dimensions. """
    a, b = as_value(a), as_value(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ContractViolation('matmul operands need ndim >= 2, got {} and '
                                '{}'.format(a.shape, b.shape))

    def _backward(g):
        if a.requires_grad:
            accumulate(a, unbroadcast(np.matmul(g, np.swapaxes(b.data, -1,
                                                               -2)), a.shape))
        if b.requires_grad:
            accumulate(b, unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2),
                                                g), b.shape))
    return Value(np.matmul(a.data, b.data), 'matmul', (a, b), _backward)


def matvec(m, v):
    """ (..., i, j) x (..., j) -> (..., i). """
    m, v = as_value(m), as_value(v)
    col = reshape(v, v.shape + (1,))
    out = matmul(m, col)
    return reshape(out, out.shape[:-1])


def dot(a, b, axis=-1):
    return sum(mul(a, b), axis=axis)


def norm(a, axis=-1):
    return sqrt(sum(square(a), axis=axis))


# Rotation primitives

def _skew(v):
    """ Cross-product matrices for (..., 3) arrays. """
    zero = np.zeros(v.shape[:-1])
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    return np.stack([np.stack([zero, -z, y], axis=-1),
                     np.stack([z, zero, -x], axis=-1),
                     np.stack([-y, x, zero], axis=-1)], axis=-2)


_BASIS_SKEW = _skew(np.eye(3))


def _rodrigues_coefficients(theta):
    """ A = sin t / t, B = (1 - cos t) / t^2 and their derivatives divided
    by t, C = A'/t and D = B'/t, with series forms near zero. """
    small = theta < _SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    t2 = theta * theta
    s, c = np.sin(t), np.cos(t)
    a = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, s / t)
    b = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0,
                 (1.0 - c) / (t * t))
    dc = np.where(small, -1.0 / 3.0 + t2 / 30.0, (t * c - s) / t ** 3)
    dd = np.where(small, -1.0 / 12.0 + t2 / 180.0,
                  (t * s - 2.0 * (1.0 - c)) / t ** 4)
    return a, b, dc, dd


def rodrigues(axis_angle):
    """
    Rotation matrices for axis-angle vectors.

    Parameters
    ----------
    axis_angle : Value, shape (..., 3)

    Returns
    -------
    Value, shape (..., 3, 3)
        R = I + A K + B K^2 with K the cross-product matrix of the input.
        The Jacobian is exact, including at the zero rotation.
    """
    v = as_value(axis_angle)
    a_vec = v.data
    theta = np.sqrt((a_vec * a_vec).sum(axis=-1))
    coef_a, coef_b, coef_c, coef_d = _rodrigues_coefficients(theta)
    k = _skew(a_vec)
    k2 = np.matmul(k, k)
    ca = coef_a[..., None, None]
    cb = coef_b[..., None, None]
    rot = np.eye(3) + ca * k + cb * k2

    def _backward(g):
        # dR/da_i = C a_i K + A E_i + D a_i K^2 + B (E_i K + K E_i)
        grad = np.empty(a_vec.shape)
        cc = coef_c[..., None, None]
        cd = coef_d[..., None, None]
        for i in range(3):
            ai = a_vec[..., i][..., None, None]
            e = _BASIS_SKEW[i]
            d_rot = (cc * ai * k + ca * e + cd * ai * k2 +
                     cb * (np.matmul(e, k) + np.matmul(k, e)))
            grad[..., i] = (g * d_rot).sum(axis=(-1, -2))
        accumulate(v, grad)
    return Value(rot, 'rodrigues', (v,), _backward)


def gram_schmidt(m):
    """
    Classical Gram-Schmidt on the columns of (..., 3, 3) matrices.

    Orientation is preserved: a left-handed input yields det = -1.

    Raises
    ------
    DegenerateRotation
        If a pivot norm drops below GRAM_SCHMIDT_MIN_NORM.
    """
    m = as_value(m)
    cols = [getitem(m, (Ellipsis, slice(None), j)) for j in range(3)]
    basis = []
    for j, col in enumerate(cols):
        u = col
        for q in basis:
            u = sub(u, mul(reshape(dot(q, col), q.shape[:-1] + (1,)), q))
        length = norm(u)
        if np.any(length.data < GRAM_SCHMIDT_MIN_NORM):
            raise DegenerateRotation(
                'Gram-Schmidt pivot {} has norm {:.3g}'.format(
                    j, float(np.min(length.data))))
        basis.append(div(u, reshape(length, length.shape + (1,))))
    return stack(basis, axis=-1)


def det3(m):
    """ Determinant of (..., 3, 3) matrices. """
    m = as_value(m)

    def e(i, j):
        return getitem(m, (Ellipsis, i, j))
    minor0 = sub(mul(e(1, 1), e(2, 2)), mul(e(1, 2), e(2, 1)))
    minor1 = sub(mul(e(1, 0), e(2, 2)), mul(e(1, 2), e(2, 0)))
    minor2 = sub(mul(e(1, 0), e(2, 1)), mul(e(1, 1), e(2, 0)))
    return add(sub(mul(e(0, 0), minor0), mul(e(0, 1), minor1)),
               mul(e(0, 2), minor2))


def quaternion_to_matrix(q):
    """ Rotation matrices for (..., 4) quaternions (w, x, y, z); the input
    is normalized first. """
    q = as_value(q)
    length = norm(q)
    unit = div(q, reshape(length, length.shape + (1,)))
    w, x, y, z = [getitem(unit, (Ellipsis, i)) for i in range(4)]

    def two(a, b):
        return mul(2.0, mul(a, b))
    xx, yy, zz = two(x, x), two(y, y), two(z, z)
    entries = [
        sub(1.0, add(yy, zz)), sub(two(x, y), two(z, w)),
        add(two(x, z), two(y, w)),
        add(two(x, y), two(z, w)), sub(1.0, add(xx, zz)),
        sub(two(y, z), two(x, w)),
        sub(two(x, z), two(y, w)), add(two(y, z), two(x, w)),
        sub(1.0, add(xx, yy)),
    ]
    flat = stack(entries, axis=-1)
    return reshape(flat, flat.shape[:-1] + (3, 3))


def _bind_operators():
    Value.__add__ = add
    Value.__radd__ = lambda self, other: add(other, self)
    Value.__sub__ = sub
    Value.__rsub__ = lambda self, other: sub(other, self)
    Value.__mul__ = mul
    Value.__rmul__ = lambda self, other: mul(other, self)
    Value.__truediv__ = div
    Value.__rtruediv__ = lambda self, other: div(other, self)
    Value.__neg__ = neg
    Value.__pow__ = power
    Value.__matmul__ = matmul
    Value.__rmatmul__ = lambda self, other: matmul(other, self)
    Value.__getitem__ = getitem
    Value.sum = sum
    Value.mean = mean
    Value.reshape = reshape


_bind_operators()
