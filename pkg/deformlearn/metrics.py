"""
Evaluation: MPJPE with canonical bone-length rescaling, per-vertex error
after similarity Procrustes, and per-pixel error over correspondences.

3D quantities are compared in the camera frame (Q p, without the image
scale), in millimeters.
"""
import csv
import json

import numpy as np

from deformlearn.exc import ContractViolation, DegeneratePose
from deformlearn.models.body import pose
from deformlearn.models.camera import orthonormalize, project_array

MM_PER_METER = 1000.0


def total_bone_length(joints, bones):
    joints = np.asarray(joints, dtype=np.float64)
    return float(sum(np.linalg.norm(joints[c] - joints[p]) for p, c in bones))


def canonical_bone_total(template):
    """ Sum of the template's rest bone lengths, in millimeters. """
    return float(template.bone_lengths().sum()) * MM_PER_METER


def _rescaled(joints, bones, canonical_total, root):
    total = total_bone_length(joints, bones)
    if total <= 0:
        raise DegeneratePose('skeleton has zero total bone length')
    joints = joints * (canonical_total / total)
    return joints - joints[root]


def mpjpe(pred, gt, bones, canonical_total, root=0):
    """
    Mean per-joint position error.

    Both skeletons are scaled so their bones sum to `canonical_total` and
    moved so `root` sits at the origin; the result is in the units of
    `canonical_total`.

    Raises
    ------
    DegeneratePose
        If either skeleton has zero total bone length.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ContractViolation('mpjpe: shapes {} and {} differ'.format(
            pred.shape, gt.shape))
    pred = _rescaled(pred, bones, canonical_total, root)
    gt = _rescaled(gt, bones, canonical_total, root)
    return float(np.linalg.norm(pred - gt, axis=1).mean())


def similarity_align(pred, gt):
    """
    Best rotation (det +1), scale and translation taking `pred` onto `gt`
    in the least-squares sense. Returns the aligned copy of `pred`.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mu_p = pred.mean(axis=0)
    mu_g = gt.mean(axis=0)
    x = pred - mu_p
    y = gt - mu_g
    var_p = (x ** 2).sum() / len(x)
    if var_p <= 0 or (y ** 2).sum() <= 0:
        raise DegeneratePose('Procrustes on coincident points')
    cov = y.T.dot(x) / len(x)
    u, sigma, vt = np.linalg.svd(cov)
    d = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        d[2] = -1.0
    rotation = u.dot(np.diag(d)).dot(vt)
    scale = (sigma * d).sum() / var_p
    return scale * x.dot(rotation.T) + mu_g


def procrustes_vertex_error(pred, gt):
    """ Mean vertex distance after `similarity_align`. """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ContractViolation('procrustes: shapes {} and {} differ'.format(
            pred.shape, gt.shape))
    aligned = similarity_align(pred, gt)
    return float(np.linalg.norm(aligned - gt, axis=1).mean())


def per_pixel_error(pred, gt, indices=None):
    """ Mean 2D distance between `pred` and `gt` rows at `indices`. """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if indices is None:
        indices = np.arange(len(gt))
    indices = np.asarray(indices, dtype=np.int64)
    if not len(indices):
        raise ContractViolation('per-pixel error needs correspondences')
    return float(np.linalg.norm(pred[indices] - gt[indices], axis=1).mean())


def camera_points(points, params):
    """ Q p: model points rotated into the camera frame, unscaled. """
    rotation = orthonormalize(params.R)
    return np.asarray(points, dtype=np.float64).dot(rotation.T)


def camera_joints(template, params):
    return camera_points(pose(template, params, with_vertices=False)
                         .joint_world, params)


def mean_mpjpe(template, predictions, truths):
    """ Mean MPJPE (mm) of paired BodyParams lists. """
    if not predictions:
        raise ContractViolation('nothing to evaluate')
    canonical = canonical_bone_total(template)
    bones = template.bones
    return float(np.mean([
        mpjpe(camera_joints(template, p), camera_joints(template, g), bones,
              canonical, template.root)
        for p, g in zip(predictions, truths)]))


class EvalReport(object):
    FIELDS = ('mpjpe_mm', 'per_vertex_mm', 'per_pixel', 'count')

    def __init__(self, mpjpe_mm, per_vertex_mm, per_pixel, count):
        self.mpjpe_mm = float(mpjpe_mm)
        self.per_vertex_mm = float(per_vertex_mm)
        self.per_pixel = float(per_pixel)
        self.count = int(count)
        if min(self.mpjpe_mm, self.per_vertex_mm, self.per_pixel) < 0:
            raise ContractViolation('metrics are non-negative')

    def to_dict(self):
        return {name: getattr(self, name) for name in self.FIELDS}

    def write_json(self, path):
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    def write_csv(self, path):
        with open(path, 'w', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=self.FIELDS)
            writer.writeheader()
            writer.writerow(self.to_dict())

    def __repr__(self):
        return 'EvalReport({})'.format(', '.join(
            '{}={}'.format(k, v) for k, v in self.to_dict().items()))


def evaluate(template, predictions, truths, annotations=None):
    """
    Compare fitted parameters with ground truth.

    Parameters
    ----------
    predictions, truths : list of BodyParams
    annotations : list of SampleAnnotation, optional
        Per-pixel error is taken over their dense correspondences; over
        every vertex without them.

    Returns
    -------
    EvalReport
    """
    predictions = list(predictions)
    truths = list(truths)
    if len(predictions) != len(truths) or not predictions:
        raise ContractViolation('evaluate: {} predictions for {} truths'
                                .format(len(predictions), len(truths)))
    canonical = canonical_bone_total(template)
    joint_errors, vertex_errors, pixel_errors = [], [], []
    for k, (pred, gt) in enumerate(zip(predictions, truths)):
        posed_pred = pose(template, pred)
        posed_gt = pose(template, gt)
        joint_errors.append(mpjpe(
            camera_points(posed_pred.joint_world, pred),
            camera_points(posed_gt.joint_world, gt), template.bones,
            canonical, template.root))
        vertex_errors.append(procrustes_vertex_error(
            camera_points(posed_pred.vertex_world, pred) * MM_PER_METER,
            camera_points(posed_gt.vertex_world, gt) * MM_PER_METER))
        indices = None
        if annotations is not None and len(annotations[k].dense_indices):
            indices = annotations[k].dense_indices
        pixel_errors.append(per_pixel_error(
            project_array(posed_pred.vertex_world, pred),
            project_array(posed_gt.vertex_world, gt), indices))
    return EvalReport(np.mean(joint_errors), np.mean(vertex_errors),
                      np.mean(pixel_errors), len(predictions))
