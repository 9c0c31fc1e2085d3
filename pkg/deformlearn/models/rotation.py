""" Axis-angle / quaternion conversion on plain arrays.

Quaternions are (w, x, y, z) with w >= 0. scipy stores them scalar-last, so
everything here reorders at the boundary.
"""
import numpy as np
from scipy.spatial.transform import Rotation

from deformlearn.exc import ContractViolation

# Quaternions shorter than this have no defined rotation.
MIN_QUATERNION_NORM = 1e-12


def axis_angle_to_quaternion(a):
    """ (..., 3) axis-angle -> (..., 4) unit quaternions, w >= 0. """
    a = np.asarray(a, dtype=np.float64)
    flat = a.reshape(-1, 3)
    xyzw = Rotation.from_rotvec(flat).as_quat()
    q = np.concatenate([xyzw[:, 3:], xyzw[:, :3]], axis=1)
    q[q[:, 0] < 0] *= -1.0
    return q.reshape(a.shape[:-1] + (4,))


def quaternion_to_axis_angle(q):
    """ (..., 4) quaternions -> (..., 3) axis-angle with angle in [0, pi].

    Raises
    ------
    ContractViolation
        If any quaternion has (near) zero norm.
    """
    q = np.asarray(q, dtype=np.float64)
    flat = q.reshape(-1, 4)
    norms = np.linalg.norm(flat, axis=1)
    if np.any(norms < MIN_QUATERNION_NORM):
        raise ContractViolation('zero-norm quaternion at index {}'.format(
            int(np.argmin(norms))))
    flat = flat / norms[:, None]
    # Same rotation, but keeps the recovered angle in [0, pi].
    flat = np.where(flat[:, :1] < 0, -flat, flat)
    xyzw = np.concatenate([flat[:, 1:], flat[:, :1]], axis=1)
    return Rotation.from_quat(xyzw).as_rotvec().reshape(q.shape[:-1] + (3,))


def axis_angle_to_matrix(a):
    a = np.asarray(a, dtype=np.float64)
    mats = Rotation.from_rotvec(a.reshape(-1, 3)).as_matrix()
    return mats.reshape(a.shape[:-1] + (3, 3))


def matrix_to_axis_angle(m):
    m = np.asarray(m, dtype=np.float64)
    vecs = Rotation.from_matrix(m.reshape(-1, 3, 3)).as_rotvec()
    return vecs.reshape(m.shape[:-2] + (3,))


def rotation_about(axis, angle):
    """ Matrix rotating by `angle` radians about the unit vector `axis`. """
    axis = np.asarray(axis, dtype=np.float64)
    return axis_angle_to_matrix(axis / np.linalg.norm(axis) * angle)


def angle_between(q1, q2):
    """ Geodesic angle between two (..., 4) unit quaternions. """
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    sign = np.where((q1 * q2).sum(axis=-1, keepdims=True) < 0, -1.0, 1.0)
    q2 = sign * q2
    # atan2 form stays accurate for nearly identical rotations.
    return 4.0 * np.arctan2(np.linalg.norm(q1 - q2, axis=-1),
                            np.linalg.norm(q1 + q2, axis=-1))
