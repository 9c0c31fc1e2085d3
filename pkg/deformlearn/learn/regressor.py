"""
The body-parameter regressor and its training.

Predictions live in a 132-dimensional space: one quaternion per joint, the
segment scales, the raw 3x3 R, s and t, with s and t in image coordinates
divided by the image size. The network reads a fixed-length feature vector
built from the annotation (keypoints plus a fixed subset of dense
correspondences with their part-chart coordinates).
"""
import json
import math
import zlib

import numpy as np

from deformlearn.config import config
from deformlearn.diffcore import ops
from deformlearn.diffcore.optim import Adam
from deformlearn.diffcore.tape import Tape
from deformlearn.exc import ContractViolation, MalformedFileError
from deformlearn.log import get_logger
from deformlearn.models.body import BodyParams
from deformlearn.models.camera import orthonormalize
from deformlearn.models.rotation import (axis_angle_to_quaternion,
                                         quaternion_to_axis_angle)
from deformlearn.prior.mlp import Mlp, build_mlp
from deformlearn.registration.losses import (Forward, dense_loss,
                                             keypoint_terms,
                                             scale_smoothness_loss,
                                             det_loss)
log = get_logger()

NUM_REGRESSOR_PARAMS = 132

# Decoded scales are kept above these.
MIN_DECODED_SCALE = 0.05
MIN_DECODED_GLOBAL_SCALE = 1e-3

DENSE_FEATURE_WIDTH = 5


def regressor_size(num_joints):
    return 5 * num_joints + 12


class RegressorParams132(object):
    """ Quaternions (J, 4), S (J,), R_raw (9,), s (1,), t (2,). """
    def __init__(self, quaternions, S, R_raw, s, t):
        self.quaternions = np.asarray(quaternions,
                                      dtype=np.float64).reshape(-1, 4)
        self.S = np.asarray(S, dtype=np.float64).reshape(-1)
        self.R_raw = np.asarray(R_raw, dtype=np.float64).reshape(9)
        self.s = np.asarray(s, dtype=np.float64).reshape(1)
        self.t = np.asarray(t, dtype=np.float64).reshape(2)

    def to_vector(self):
        return np.concatenate([self.quaternions.ravel(), self.S, self.R_raw,
                               self.s, self.t])

    @classmethod
    def from_vector(cls, vec, num_joints=24):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (regressor_size(num_joints),):
            raise ContractViolation('expected {} regressor parameters, got {}'
                                    .format(regressor_size(num_joints),
                                            vec.shape))
        J = num_joints
        return cls(vec[:4 * J], vec[4 * J:5 * J], vec[5 * J:5 * J + 9],
                   vec[5 * J + 9:5 * J + 10], vec[5 * J + 10:])

    def __len__(self):
        return len(self.to_vector())


def params_to_regressor_space(params):
    """ BodyParams -> RegressorParams132; axis-angles become unit
    quaternions with w >= 0, everything else is copied. """
    return RegressorParams132(axis_angle_to_quaternion(params.a), params.S,
                              params.R.ravel(), [params.s], params.t)


def regressor_space_to_params(reg):
    """ RegressorParams132 -> BodyParams with R orthonormalized.

    Raises
    ------
    ContractViolation
        For a zero-norm quaternion.
    """
    return BodyParams(quaternion_to_axis_angle(reg.quaternions), reg.S,
                      orthonormalize(reg.R_raw.reshape(3, 3)),
                      float(reg.s[0]), reg.t)


def smooth_l1(x, delta=1.0):
    """ Elementwise 0.5 x^2 for |x| <= delta, |x| - 0.5 delta otherwise.

    Plain arrays in, plain arrays out; see ops.smooth_l1 for the
    differentiable version.
    """
    x = np.asarray(x, dtype=np.float64)
    inside = np.abs(x) <= delta
    return np.where(inside, 0.5 * x * x / delta, np.abs(x) - 0.5 * delta)


def regress_loss(prediction, target, delta=1.0):
    """ Mean smooth-L1 over all dims (and rows) of prediction - target. """
    return ops.mean(ops.smooth_l1(ops.sub(prediction, target), delta))


def _sample_seed(sample_id, seed):
    return [int(seed), zlib.crc32(sample_id.encode('utf-8'))]


def features(annotation, template, dense_count=None, seed=None):
    """
    Fixed-length input vector of one sample.

    Keypoints contribute (x, y, visible) with x, y divided by the image
    size; dense correspondences contribute (x, y, part, u, v) for a subset
    drawn with a per-sample seed, zero-padded to `dense_count` entries.
    """
    dense_count = dense_count or config['REGRESSOR_DENSE_FEATURES']
    seed = config['SEED'] if seed is None else seed
    size = annotation.image_size
    kp = annotation.keypoints.copy()
    kp[:, :2] /= size
    kp[kp[:, 2] <= 0] = 0.0
    dense = np.zeros((dense_count, DENSE_FEATURE_WIDTH))
    m = len(annotation.dense_indices)
    if m:
        rng = np.random.default_rng(_sample_seed(annotation.sample_id, seed))
        pick = np.sort(rng.choice(m, size=min(m, dense_count),
                                  replace=False))
        idx = annotation.dense_indices[pick]
        dense[:len(pick), :2] = annotation.dense_points[pick] / size
        dense[:len(pick), 2] = template.part_ids[idx] / \
            float(max(template.num_joints - 1, 1))
        dense[:len(pick), 3:] = template.part_uv[idx]
    return np.concatenate([kp.ravel(), dense.ravel()])


def feature_width(template, dense_count=None):
    dense_count = dense_count or config['REGRESSOR_DENSE_FEATURES']
    return 3 * template.num_keypoints + DENSE_FEATURE_WIDTH * dense_count


class Regressor(object):
    """
    Mlp from features to the 132-dim parameter space, plus a constant
    offset (the mean training target) so an untrained network predicts the
    average body.
    """
    def __init__(self, mlp, offset, dense_count, seed, epochs=0):
        self.mlp = mlp
        self.offset = np.asarray(offset, dtype=np.float64)
        self.dense_count = int(dense_count)
        self.seed = int(seed)
        self.epochs = int(epochs)
        if self.mlp.out_width != len(self.offset):
            raise ContractViolation('regressor output and offset differ')

    @classmethod
    def create(cls, template, cfg=None, rng=None):
        cfg = cfg or config
        rng = rng if rng is not None else np.random.default_rng(cfg['SEED'])
        dense_count = cfg['REGRESSOR_DENSE_FEATURES']
        mlp = build_mlp(feature_width(template, dense_count),
                        regressor_size(template.num_joints),
                        cfg['REGRESSOR_HIDDEN'], cfg['REGRESSOR_LAYERS'], rng)
        # Start from near-zero outputs around the offset.
        last = 'W{}'.format(mlp.num_layers - 1)
        mlp.params[last] = mlp.params[last] * 1e-3
        offset = params_to_regressor_space(
            BodyParams.t_pose(template.num_joints, s=0.5,
                              t=(0.5, 0.5))).to_vector()
        return cls(mlp, offset, dense_count, cfg['SEED'])

    def features(self, annotations, template):
        return np.stack([features(a, template, self.dense_count, self.seed)
                         for a in annotations])

    def forward(self, x, leaves=None):
        return ops.add(self.mlp.forward(x, leaves), self.offset)

    def predict_vectors(self, annotations, template):
        return self.forward(self.features(annotations, template)).data

    def predict(self, annotations, template):
        """ theta_conv per annotation, in pixels, with S and s clamped to
        the ranges registration accepts. """
        vectors = self.predict_vectors(annotations, template)
        thetas = []
        for vector, annotation in zip(vectors, annotations):
            params = regressor_space_to_params(
                RegressorParams132.from_vector(vector, template.num_joints))
            params.S = np.maximum(params.S, MIN_DECODED_SCALE)
            params.s = max(params.s, MIN_DECODED_GLOBAL_SCALE)
            thetas.append(params.scaled(annotation.image_size))
        return thetas

    def to_dict(self):
        return {'mlp': self.mlp.to_dict(), 'offset': self.offset.tolist(),
                'dense_count': self.dense_count, 'seed': self.seed,
                'epochs': self.epochs}

    @classmethod
    def from_dict(cls, data, path='<regressor>'):
        try:
            return cls(Mlp.from_dict(data['mlp'], path), data['offset'],
                       data['dense_count'], data['seed'],
                       data.get('epochs', 0))
        except (KeyError, TypeError, ContractViolation) as e:
            raise MalformedFileError(path, 'bad regressor: {}'.format(e))

    def save(self, path):
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            try:
                data = json.load(f)
            except ValueError as e:
                raise MalformedFileError(path, 'invalid JSON: {}'.format(e))
        return cls.from_dict(data, path)


class ConvWeights(object):
    """ Weights of L_conv = alpha L_regress + beta L_dense + gamma L_KP
    (+ optional scale and det regularizers). """
    def __init__(self, alpha, beta, gamma, w_scale=0.0, w_det=0.0,
                 delta=1.0):
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.gamma = float(gamma)
        self.w_scale = float(w_scale)
        self.w_det = float(w_det)
        self.delta = float(delta)

    @classmethod
    def from_config(cls, cfg=None, strategy=None):
        cfg = cfg or config
        strategy = strategy or cfg['STRATEGY']
        if strategy == 'single-step':
            # No theta_anno to regress; the body is held together by the
            # registration regularizers instead.
            return cls(0.0, cfg['CONV_BETA'], cfg['CONV_GAMMA'],
                       cfg['CONV_W_SCALE'] or cfg['REGIST_W_SCALE'],
                       cfg['CONV_W_DET'] or cfg['REGIST_W_DET'],
                       cfg['SMOOTH_L1_DELTA'])
        return cls(cfg['CONV_ALPHA'], cfg['CONV_BETA'], cfg['CONV_GAMMA'],
                   cfg['CONV_W_SCALE'], cfg['CONV_W_DET'],
                   cfg['SMOOTH_L1_DELTA'])


def decode(row, num_joints):
    """ Split one Value row of the 132-dim space into differentiable
    (local rotations, theta dict). """
    J = num_joints
    quats = ops.reshape(ops.getitem(row, slice(0, 4 * J)), (J, 4))
    S = ops.clip_min(ops.getitem(row, slice(4 * J, 5 * J)),
                     MIN_DECODED_SCALE)
    theta = {
        'S': S,
        'R': ops.reshape(ops.getitem(row, slice(5 * J, 5 * J + 9)), (3, 3)),
        's': ops.clip_min(ops.getitem(row, slice(5 * J + 9, 5 * J + 10)),
                          MIN_DECODED_GLOBAL_SCALE),
        't': ops.getitem(row, slice(5 * J + 10, 5 * J + 12)),
    }
    return ops.quaternion_to_matrix(quats), theta


def conv_loss(prediction, targets, annotations, template, weights):
    """
    L_conv averaged over a batch.

    Parameters
    ----------
    prediction : Value, (B, 132)
    targets : (B, 132) array or None
        Regressor-space theta_anno; only read when alpha > 0.
    annotations : list of SampleAnnotation
        Already divided by their image size.

    Returns
    -------
    (Value, dict)
    """
    terms = {}
    total = ops.as_value(0.0)
    if weights.alpha > 0:
        l_regress = regress_loss(prediction, targets, weights.delta)
        total = ops.add(total, ops.mul(l_regress, weights.alpha))
        terms['regress'] = l_regress.item()
    needs_body = weights.beta > 0 or weights.gamma > 0 or \
        weights.w_scale > 0 or weights.w_det > 0
    if needs_body:
        per_sample = []
        sums = dict.fromkeys(('dense', 'kp', 'scale', 'det'), 0.0)
        for b, annotation in enumerate(annotations):
            rotations, theta = decode(ops.getitem(prediction, b),
                                      template.num_joints)
            forward = Forward(template, theta, local_rotations=rotations)
            loss = ops.as_value(0.0)
            if weights.beta > 0 and len(annotation.dense_indices):
                term = dense_loss(theta, template, annotation, forward)
                loss = ops.add(loss, ops.mul(term, weights.beta))
                sums['dense'] += term.item()
            if weights.gamma > 0:
                term, _ = keypoint_terms(theta, template, annotation,
                                         forward)
                loss = ops.add(loss, ops.mul(term, weights.gamma))
                sums['kp'] += term.item()
            if weights.w_scale > 0:
                term = scale_smoothness_loss(theta['S'], template)
                loss = ops.add(loss, ops.mul(term, weights.w_scale))
                sums['scale'] += term.item()
            if weights.w_det > 0:
                term = det_loss(theta['R'])
                loss = ops.add(loss, ops.mul(term, weights.w_det))
                sums['det'] += term.item()
            per_sample.append(loss)
        total = ops.add(total, ops.mean(ops.stack(per_sample)))
        terms.update({k: v / len(annotations) for k, v in sums.items()})
    terms['total'] = total.item()
    return total, terms


class RegressorTrainResult(object):
    def __init__(self, regressor, history):
        self.regressor = regressor
        self.history = history


def train_regressor(regressor, samples, theta_anno, template, cfg=None,
                    weights=None, rng=None):
    """
    Adam on L_conv over mini-batches.

    Parameters
    ----------
    regressor : Regressor
        Updated in place.
    samples : list of SampleAnnotation
    theta_anno : dict of sample id -> BodyParams (pixels)
    weights : ConvWeights, optional

    Returns
    -------
    RegressorTrainResult
        history has one entry per epoch (mean of the batch terms).

    Raises
    ------
    ContractViolation
        If a sample has no theta_anno while alpha > 0.
    """
    cfg = cfg or config
    weights = weights or ConvWeights.from_config(cfg)
    rng = rng if rng is not None else np.random.default_rng(cfg['SEED'])
    samples = list(samples)
    if not samples:
        raise ContractViolation('train_regressor needs samples')
    targets = None
    if weights.alpha > 0:
        missing = [s.sample_id for s in samples if s.sample_id not in
                   theta_anno]
        if missing:
            raise ContractViolation('no theta_anno for {}'.format(
                missing[:5]))
        targets = np.stack([
            params_to_regressor_space(
                theta_anno[s.sample_id].scaled(1.0 / s.image_size))
            .to_vector() for s in samples])
        if not regressor.epochs:
            regressor.offset = targets.mean(axis=0)
    inputs = regressor.features(samples, template)
    scaled = [s.scaled(1.0 / s.image_size) for s in samples]
    optimizer = Adam(regressor.mlp.params, cfg['REGRESSOR_LR'])
    batch_size = min(cfg['REGRESSOR_BATCH_SIZE'], len(samples))
    history = []
    for epoch in range(cfg['REGRESSOR_EPOCHS']):
        order = rng.permutation(len(samples))
        epoch_terms = []
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            tape = Tape()
            leaves = regressor.mlp.register(tape, 'net')
            prediction = regressor.forward(inputs[idx], leaves)
            total, terms = conv_loss(
                prediction, None if targets is None else targets[idx],
                [scaled[i] for i in idx], template, weights)
            if not math.isfinite(terms['total']):
                raise ContractViolation('regressor loss is not finite in '
                                        'epoch {}'.format(epoch))
            grads = {name[4:]: g for name, g in tape.gradients(total).items()}
            regressor.mlp.update(optimizer.step(regressor.mlp.params, grads))
            epoch_terms.append(terms)
        record = {key: float(np.mean([t[key] for t in epoch_terms]))
                  for key in epoch_terms[0]}
        record['epoch'] = epoch
        history.append(record)
        log.debug('regressor epoch', **record)
    regressor.epochs += len(history)
    if history:
        log.info('regressor trained', epochs=len(history),
                 loss=history[-1]['total'])
    return RegressorTrainResult(regressor, history)
