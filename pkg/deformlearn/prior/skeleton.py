"""
2D keypoint poses in the normalized frame the prior works in: root at the
origin, trunk (root to trunk top) of length one.
"""
import numpy as np

from deformlearn.exc import ContractViolation, DegeneratePose

# Trunks shorter than this cannot be normalized.
MIN_TRUNK = 1e-9


class Pose2D(object):
    """
    Normalized keypoints.

    Attributes
    ----------
    u : (N, 2) array
    visibility : (N,) bool array
    center : (2,) array
        Root position in the source frame.
    trunk : float
        Trunk length in the source frame.
    """
    def __init__(self, u, visibility=None, center=None, trunk=1.0):
        self.u = np.asarray(u, dtype=np.float64)
        if visibility is None:
            visibility = np.ones(len(self.u), dtype=bool)
        self.visibility = np.asarray(visibility, dtype=bool)
        self.center = np.zeros(2) if center is None else np.asarray(center)
        self.trunk = float(trunk)

    @property
    def all_visible(self):
        return bool(self.visibility.all())

    def denormalize(self, values=None):
        """ Back to the source frame; `values` defaults to u. """
        values = self.u if values is None else values
        return np.asarray(values) * self.trunk + self.center


def normalize_keypoints(keypoints, trunk_pair, visibility=None):
    """
    Root-center and trunk-normalize (N, 2) keypoints.

    Parameters
    ----------
    keypoints : (N, 2) or (N, 3) array
        A third column is read as visibility.
    trunk_pair : (int, int)
        Root and trunk-top keypoint indices.

    Raises
    ------
    DegeneratePose
        If the trunk length is below MIN_TRUNK.
    """
    keypoints = np.asarray(keypoints, dtype=np.float64)
    if keypoints.ndim != 2 or keypoints.shape[1] not in (2, 3):
        raise ContractViolation('keypoints must be (N, 2) or (N, 3), got {}'
                                .format(keypoints.shape))
    if keypoints.shape[1] == 3 and visibility is None:
        visibility = keypoints[:, 2] > 0
    xy = keypoints[:, :2]
    root, top = trunk_pair
    trunk = float(np.linalg.norm(xy[top] - xy[root]))
    if trunk < MIN_TRUNK:
        raise DegeneratePose('trunk length {:.3g} too short to normalize'
                             .format(trunk))
    return Pose2D((xy - xy[root]) / trunk, visibility, xy[root].copy(),
                  trunk)


class SkeletonStats(object):
    """
    Canonical bone ratios (bone length over trunk length) of the keypoint
    skeleton, plus its bones and symmetric bone pairs.

    Bones are (parent, child) keypoint pairs; symmetry pairs name bones by
    child keypoint.
    """
    def __init__(self, bones, ratios, symmetry_pairs, trunk_pair):
        self.bones = [tuple(b) for b in bones]
        self.ratios = np.asarray(ratios, dtype=np.float64)
        self.symmetry_pairs = [tuple(p) for p in symmetry_pairs]
        self.trunk_pair = tuple(trunk_pair)
        if len(self.ratios) != len(self.bones):
            raise ContractViolation('one ratio per bone expected')
        if np.any(self.ratios <= 0):
            raise ContractViolation('bone ratios must be positive')
        child_bone = {child: k for k, (_, child) in enumerate(self.bones)}
        self.symmetry_bones = [(child_bone[i], child_bone[j])
                               for i, j in self.symmetry_pairs]

    @classmethod
    def from_template(cls, template):
        joints = template.rest_joints[template.keypoint_joints]
        return cls.from_joints(joints, template.keypoint_bones,
                               template.keypoint_symmetry_pairs,
                               template.keypoint_trunk)

    @classmethod
    def from_joints(cls, joints, bones, symmetry_pairs, trunk_pair):
        joints = np.asarray(joints, dtype=np.float64)
        root, top = trunk_pair
        trunk = np.linalg.norm(joints[top] - joints[root])
        if trunk < MIN_TRUNK:
            raise DegeneratePose('canonical skeleton has no trunk')
        lengths = np.array([np.linalg.norm(joints[c] - joints[p])
                            for p, c in bones])
        return cls(bones, lengths / trunk, symmetry_pairs, trunk_pair)


def keypoints_from_joints(template, joint_world):
    """ Model joints -> keypoint-ordered 3D points. """
    return np.asarray(joint_world)[template.keypoint_joints]
