"""
Body parameters, forward kinematics and linear blend skinning.

Every function here accepts plain arrays or `Value` nodes, so the same code
poses a body for export and builds differentiable losses.
"""
import numpy as np

from deformlearn.diffcore import ops
from deformlearn.exc import ContractViolation

NUM_BODY_PARAMS = 108


class BodyParams(object):
    """
    theta = [a, S, R, s, t].

    a : (J, 3) axis-angle per joint (radians)
    S : (J,) segment scales
    R : (3, 3) unconstrained rotation storage, orthonormalized on use
    s : global scale (pixels per meter)
    t : (2,) image translation (pixels)
    """
    __slots__ = ('a', 'S', 'R', 's', 't')

    def __init__(self, a, S, R, s, t):
        self.a = np.array(a, dtype=np.float64).reshape(-1, 3)
        self.S = np.array(S, dtype=np.float64).reshape(-1)
        self.R = np.array(R, dtype=np.float64).reshape(3, 3)
        self.s = float(s)
        self.t = np.array(t, dtype=np.float64).reshape(2)
        if len(self.a) != len(self.S):
            raise ContractViolation('a has {} joints but S has {}'.format(
                len(self.a), len(self.S)))

    @classmethod
    def t_pose(cls, num_joints=24, s=1.0, t=(0.0, 0.0)):
        return cls(np.zeros((num_joints, 3)), np.ones(num_joints), np.eye(3),
                   s, t)

    @property
    def num_joints(self):
        return len(self.S)

    def to_vector(self):
        return np.concatenate([self.a.ravel(), self.S, self.R.ravel(),
                               [self.s], self.t])

    @classmethod
    def from_vector(cls, vec, num_joints=24):
        vec = np.asarray(vec, dtype=np.float64)
        expected = 4 * num_joints + 12
        if vec.shape != (expected,):
            raise ContractViolation('expected {} body parameters, got {}'
                                    .format(expected, vec.shape))
        J = num_joints
        return cls(vec[:3 * J], vec[3 * J:4 * J], vec[4 * J:4 * J + 9],
                   vec[4 * J + 9], vec[4 * J + 10:])

    def as_arrays(self):
        """ Named arrays, the layout optimizers work on. """
        return {'a': self.a.copy(), 'S': self.S.copy(), 'R': self.R.copy(),
                's': np.array([self.s]), 't': self.t.copy()}

    @classmethod
    def from_arrays(cls, arrays):
        return cls(arrays['a'], arrays['S'], arrays['R'],
                   float(np.asarray(arrays['s']).ravel()[0]), arrays['t'])

    def copy(self):
        return BodyParams(self.a, self.S, self.R, self.s, self.t)

    def scaled(self, factor):
        """ Same body, image coordinates multiplied by `factor`. """
        return BodyParams(self.a, self.S, self.R, self.s * factor,
                          self.t * factor)

    def translated(self, offset):
        return BodyParams(self.a, self.S, self.R, self.s,
                          self.t + np.asarray(offset, dtype=np.float64))

    def orthonormalized(self):
        from deformlearn.models.camera import orthonormalize
        return BodyParams(self.a, self.S, orthonormalize(self.R), self.s,
                          self.t)

    def is_finite(self):
        return bool(np.isfinite(self.to_vector()).all())

    def to_dict(self):
        return {'a': self.a.tolist(), 'S': self.S.tolist(),
                'R': self.R.tolist(), 's': self.s, 't': self.t.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(data['a'], data['S'], data['R'], data['s'], data['t'])

    def __eq__(self, other):
        return isinstance(other, BodyParams) and \
            np.array_equal(self.to_vector(), other.to_vector())

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return 'BodyParams(|a|max={:.3f}, S=[{:.3f}, {:.3f}], s={:.3f}, ' \
            't={})'.format(np.abs(self.a).max(), self.S.min(), self.S.max(),
                           self.s, self.t.tolist())


class JointTransforms(object):
    """ World rotations (J, 3, 3) and positions (J, 3) of every joint. """
    def __init__(self, rotations, positions):
        self.rotations = rotations
        self.positions = positions


class PosedBody(object):
    def __init__(self, joint_world, vertex_world, joint_transforms):
        self.joint_world = joint_world
        self.vertex_world = vertex_world
        self.joint_transforms = joint_transforms


def _check_scales(S):
    data = S.data if isinstance(S, ops.Value) else np.asarray(S)
    if np.any(data <= 0):
        raise ContractViolation('segment scales must be positive, got min '
                                '{:.3g}'.format(float(np.min(data))))


def chain(template, local_rotations, S):
    """
    Compose per-joint local rotations (J, 3, 3) down the joint tree.

    T_j = T_parent(j) o translate(S_j * rest_offset_j) o rot_j
    """
    _check_scales(S)
    local_rotations = ops.as_value(local_rotations)
    S = ops.as_value(S)
    offsets = ops.mul(ops.reshape(S, (template.num_joints, 1)),
                      template.rest_offsets)
    rotations = [None] * template.num_joints
    positions = [None] * template.num_joints
    for j in template.order:
        rot = ops.getitem(local_rotations, j)
        offset = ops.getitem(offsets, j)
        p = template.parents[j]
        if p < 0:
            rotations[j] = rot
            positions[j] = offset
        else:
            rotations[j] = ops.matmul(rotations[p], rot)
            positions[j] = ops.add(positions[p],
                                   ops.matvec(rotations[p], offset))
    return JointTransforms(ops.stack(rotations), ops.stack(positions))


def forward_kinematics(template, a, S):
    """
    Joint world transforms for pose `a` (J, 3) and segment scales `S` (J,).

    Returns
    -------
    JointTransforms
        Value-valued rotations and positions.

    Raises
    ------
    ContractViolation
        If any scale is not positive.
    """
    _check_scales(S)
    return chain(template, ops.rodrigues(a), S)


def _blend(template, transforms, weights, rest):
    """
    sum_j w_ij (R_j (v_i - J_j) + p_j) for the rows of `weights`, written as
    a displacement of the rest vertex:

        v_i + sum_j w_ij ((R_j - I) (v_i - J_j) + p_j - J_j)

    so the rest pose reproduces the template bit for bit.
    """
    J = template.num_joints
    turn = ops.sub(transforms.rotations, np.eye(3))
    blended = ops.reshape(ops.matmul(weights, ops.reshape(turn, (J, 9))),
                          (len(rest), 3, 3))
    rest_joints = template.rest_joints
    shift = ops.sub(ops.sub(transforms.positions, rest_joints),
                    ops.reshape(ops.matmul(turn, rest_joints[:, :, None]),
                                (J, 3)))
    displacement = ops.add(ops.matvec(blended, rest),
                           ops.matmul(weights, shift))
    return ops.add(rest, displacement)


def skin(template, transforms):
    """ Linear blend skinning of every template vertex, (n, 3). """
    return _blend(template, transforms, template.skin_weights,
                  template.vertices)


def skin_points(template, transforms, vertex_indices):
    """ Skinned positions of selected vertices only. """
    idx = np.asarray(vertex_indices, dtype=np.int64)
    return _blend(template, transforms, template.skin_weights[idx],
                  template.vertices[idx])


def pose(template, params, with_vertices=True):
    """ Pose the template; plain arrays in the result. """
    transforms = forward_kinematics(template, params.a, params.S)
    vertices = skin(template, transforms).data if with_vertices else None
    plain = JointTransforms(transforms.rotations.data,
                            transforms.positions.data)
    return PosedBody(plain.positions, vertices, plain)
