""" Weak-perspective camera: x = s * drop_z(Q p) + t, Q = gram_schmidt(R). """
import numpy as np

from deformlearn.diffcore import ops


class WeakPerspectiveCamera(object):
    """
    Parameters
    ----------
    R_raw : (3, 3) array or Value
        Unconstrained; orthonormalized on use.
    s : float or Value
        Pixels per model unit.
    t : (2,) array or Value
        Pixels.
    """
    def __init__(self, R_raw, s, t):
        self.R_raw = R_raw
        self.s = s
        self.t = t

    @classmethod
    def from_params(cls, params):
        return cls(params.R, params.s, params.t)

    def rotation(self):
        return gram_schmidt(self.R_raw)


def gram_schmidt(m):
    """ Orthonormalize the columns of a 3x3 matrix (differentiable).

    Raises DegenerateRotation for rank-deficient input. The orientation of
    the input is kept, so det may be -1.
    """
    return ops.gram_schmidt(m)


def orthonormalize(m):
    """ gram_schmidt on a plain array, returning a plain array. """
    return ops.gram_schmidt(np.asarray(m, dtype=np.float64)).data


def camera_frame(points, cam, rotation=None):
    """ s * Q p for (n, 3) points: image-plane x, y plus scaled depth. """
    rotation = cam.rotation() if rotation is None else rotation
    rotated = ops.matmul(ops.as_value(points), ops.swap_last(rotation))
    return ops.mul(ops.reshape(ops.as_value(cam.s), (1, 1)), rotated)


def project(points, cam, rotation=None):
    """
    (n, 3) model points -> (n, 2) image points.

    `rotation` may pass an already orthonormalized R to share it between
    several projections of one forward pass.
    """
    framed = camera_frame(points, cam, rotation)
    xy = ops.getitem(framed, (slice(None), slice(0, 2)))
    return ops.add(xy, ops.reshape(ops.as_value(cam.t), (1, 2)))


def project_array(points, params):
    """ Plain-array projection with BodyParams. """
    cam = WeakPerspectiveCamera.from_params(params)
    return project(np.asarray(points, dtype=np.float64), cam).data


def depths_array(points, params):
    """ Camera-frame depth s * (Q p)_z of plain points. """
    cam = WeakPerspectiveCamera.from_params(params)
    framed = camera_frame(np.asarray(points, dtype=np.float64), cam).data
    return framed[:, 2]
