"""
Terms of the registration loss.

theta may be a BodyParams or a mapping of the names a, S, R, s, t to arrays
or Value leaves; the latter is what the optimizer passes in. Fit terms are
means over their correspondences, in the units of the annotation.
"""
import numpy as np

from deformlearn.diffcore import ops
from deformlearn.exc import ContractViolation
from deformlearn.log import get_logger
from deformlearn.models.body import BodyParams, chain, forward_kinematics, \
    skin_points
from deformlearn.models.camera import WeakPerspectiveCamera, camera_frame, \
    project

log = get_logger()

TERMS = ('dense', 'kp', 'scale', 'joint', 'det')


def as_theta(theta):
    if isinstance(theta, BodyParams):
        theta = theta.as_arrays()
    return {name: ops.as_value(value) for name, value in theta.items()}


class Forward(object):
    """ One posing of theta, shared by the fit terms.

    `local_rotations` (J, 3, 3) replaces theta['a'] when the pose comes as
    rotation matrices, as it does when decoding quaternions.
    """
    def __init__(self, template, theta, local_rotations=None):
        self.template = template
        self.theta = as_theta(theta)
        if local_rotations is None:
            self.transforms = forward_kinematics(template, self.theta['a'],
                                                 self.theta['S'])
        else:
            self.transforms = chain(template, local_rotations,
                                    self.theta['S'])
        self.camera = WeakPerspectiveCamera(self.theta['R'], self.theta['s'],
                                            self.theta['t'])
        self.rotation = self.camera.rotation()

    def projected_vertices(self, indices):
        points = skin_points(self.template, self.transforms, indices)
        return project(points, self.camera, self.rotation)

    def keypoint_frame(self):
        """ (N, 3): projected x, y and scaled camera-frame depth. """
        joints = ops.getitem(self.transforms.positions,
                             self.template.keypoint_joints)
        framed = camera_frame(joints, self.camera, self.rotation)
        xy = ops.add(ops.getitem(framed, (slice(None), slice(0, 2))),
                     ops.reshape(self.camera.t, (1, 2)))
        depth = ops.getitem(framed, (slice(None), 2))
        return xy, depth


def dense_loss(theta, template, annotation, forward=None):
    """ Mean squared distance between annotated points and their
    projected vertices. """
    if not len(annotation.dense_indices):
        raise ContractViolation('{}: dense loss needs correspondences'.format(
            annotation.sample_id))
    forward = forward or Forward(template, theta)
    projected = forward.projected_vertices(annotation.dense_indices)
    residual = ops.sub(projected, annotation.dense_points)
    return ops.mean(ops.sum(ops.square(residual), axis=1))


def keypoint_terms(theta, template, annotation, forward=None):
    """
    Keypoint loss and whether it was empty.

    The 2D part is the mean squared distance over visible keypoints; the
    depth part the mean squared error of root-centered camera-frame depth
    against gan_depths, over visible keypoints with a finite gan depth.

    Returns
    -------
    (Value, bool)
        The loss, and True if no keypoint was visible.
    """
    visible = annotation.visible
    if not visible.any():
        return ops.as_value(0.0), True
    forward = forward or Forward(template, theta)
    xy, depth = forward.keypoint_frame()
    idx = np.flatnonzero(visible)
    residual = ops.sub(ops.getitem(xy, idx), annotation.keypoints[idx, :2])
    loss = ops.mean(ops.sum(ops.square(residual), axis=1))

    if annotation.gan_depths is not None:
        root = template.keypoint_trunk[0]
        target = annotation.gan_depths
        usable = visible & np.isfinite(target)
        if np.isfinite(target[root]) and usable.any():
            target = target - target[root]
            idx = np.flatnonzero(usable)
            centred = ops.sub(depth, ops.getitem(depth, root))
            depth_error = ops.sub(ops.getitem(centred, idx), target[idx])
            loss = ops.add(loss, ops.mean(ops.square(depth_error)))
    return loss, False


def keypoint_loss(theta, template, annotation, forward=None):
    loss, empty = keypoint_terms(theta, template, annotation, forward)
    if empty:
        log.warning('no visible keypoints', sample_id=annotation.sample_id)
    return loss


def scale_smoothness_loss(S, template):
    """ sum over neighbouring segment pairs of (S_i - S_j)^2. """
    S = ops.as_value(S)
    pairs = template.adjacent_pairs
    if not pairs:
        return ops.mul(ops.sum(S), 0.0)
    first = np.array([i for i, _ in pairs])
    second = np.array([j for _, j in pairs])
    diff = ops.sub(ops.getitem(S, first), ops.getitem(S, second))
    return ops.sum(ops.square(diff))


def hinge_angles(a, template):
    """ Signed projection of each hinge joint's rotation onto its axis. """
    a = ops.as_value(a)
    joints = np.array(template.hinge_joints, dtype=np.int64)
    axes = np.array([template.hinge_axes[j] for j in template.hinge_joints])
    return ops.sum(ops.mul(ops.getitem(a, joints), axes), axis=1)


def joint_loss(a, template):
    """ sum_i |a_i|^2 over all joints plus sum exp(h_i)^2 over the hinge
    joints. """
    a = ops.as_value(a)
    smooth = ops.sum(ops.square(a))
    if not template.hinge_joints:
        return smooth
    limit = ops.sum(ops.square(ops.exp(hinge_angles(a, template))))
    return ops.add(smooth, limit)


def det_loss(R_raw):
    """ exp(-det(gram_schmidt(R_raw))); DegenerateRotation propagates. """
    return ops.exp(ops.neg(ops.det3(ops.gram_schmidt(R_raw))))


def regist_loss(theta, template, annotation, weights):
    """
    Weighted sum of the five terms.

    Parameters
    ----------
    weights : dict
        Keys of TERMS. Terms with zero weight are still evaluated so the
        trace stays comparable.

    Returns
    -------
    (Value, dict)
        Total and the unweighted value of every term.
    """
    theta = as_theta(theta)
    forward = Forward(template, theta)
    terms = {
        'dense': dense_loss(theta, template, annotation, forward),
        'kp': keypoint_terms(theta, template, annotation, forward)[0],
        'scale': scale_smoothness_loss(theta['S'], template),
        'joint': joint_loss(theta['a'], template),
        'det': det_loss(theta['R']),
    }
    total = None
    for name in TERMS:
        weighted = ops.mul(terms[name], float(weights[name]))
        total = weighted if total is None else ops.add(total, weighted)
    return total, {name: term.item() for name, term in terms.items()}
