"""
Training and use of the pose prior.

Each step updates the discriminator on real poses against generated poses
seen from every view angle, then updates the generator on

    L^G = epsilon * L_adv^G + L_ratio + L_sym
"""
import json
import math

import numpy as np

from deformlearn.config import config
from deformlearn.diffcore import ops
from deformlearn.diffcore.optim import Adam
from deformlearn.diffcore.tape import Tape
from deformlearn.exc import ContractViolation, DegeneratePose, \
    MalformedFileError
from deformlearn.log import get_logger
from deformlearn.prior.losses import (generate_depths, rotate_project,
                                      adv_losses, discriminator_log_probs,
                                      geometric_losses)
from deformlearn.prior.mlp import Mlp, build_mlp
from deformlearn.prior.skeleton import normalize_keypoints
log = get_logger()


class PriorTrainResult(object):
    def __init__(self, generator, discriminator, history):
        self.generator = generator
        self.discriminator = discriminator
        self.history = history


def new_prior(num_keypoints, cfg=None, rng=None):
    """ Untrained generator (2N -> N) and discriminator (2N -> 1). """
    cfg = cfg or config
    rng = rng if rng is not None else np.random.default_rng(cfg['SEED'])
    n = num_keypoints
    generator = build_mlp(2 * n, n, cfg['PRIOR_HIDDEN'], cfg['PRIOR_LAYERS'],
                          rng, cfg['PRIOR_LEAKY_SLOPE'])
    discriminator = build_mlp(2 * n, 1, cfg['PRIOR_HIDDEN'],
                              cfg['PRIOR_LAYERS'], rng,
                              cfg['PRIOR_LEAKY_SLOPE'], output='logit')
    return generator, discriminator


def prepare_dataset(keypoint_sets, trunk_pair):
    """
    Normalize 2D keypoint sets for training, dropping every pose with an
    invisible joint or a degenerate trunk.

    Returns
    -------
    (M, N, 2) array
    """
    poses = []
    dropped = 0
    for keypoints in keypoint_sets:
        keypoints = np.asarray(keypoints, dtype=np.float64)
        if keypoints.shape[1] == 3 and not np.all(keypoints[:, 2] > 0):
            dropped += 1
            continue
        try:
            poses.append(normalize_keypoints(keypoints, trunk_pair).u)
        except DegeneratePose:
            dropped += 1
    if dropped:
        log.info('dropped poses from prior training', dropped=dropped,
                 kept=len(poses))
    if not poses:
        raise ContractViolation('no usable poses for prior training')
    return np.stack(poses)


def _strip(grads, prefix):
    cut = len(prefix) + 1
    return {name[cut:]: g for name, g in grads.items()}


def _views(real, depths, root, angles):
    """ Root-centered depths, then one projection per view angle. """
    centred = ops.sub(depths, ops.getitem(depths, (slice(None),
                                                   slice(root, root + 1))))
    return ops.concatenate([rotate_project(real, centred, phi)
                            for phi in angles], axis=0)


def generator_loss(generator, discriminator, real, stats, angles, epsilon,
                   leaves=None):
    """
    L^G for a batch of normalized poses.

    Returns
    -------
    (Value, dict)
        The loss and its parts: 'ratio', 'sym' and, when epsilon > 0,
        'adv_g'.
    """
    depths = generate_depths(generator, real, leaves)
    l_ratio, l_sym = geometric_losses(real, depths, stats)
    loss = ops.add(l_ratio, l_sym)
    parts = {'ratio': l_ratio.item(), 'sym': l_sym.item()}
    if epsilon > 0:
        fake = _views(real, depths, stats.trunk_pair[0], angles)
        _, log_not_fake = discriminator_log_probs(discriminator, fake)
        adv_g = ops.mean(log_not_fake)
        loss = ops.add(ops.mul(adv_g, epsilon), loss)
        parts['adv_g'] = adv_g.item()
    return loss, parts


def _batches(count, batch_size, rng):
    while True:
        order = rng.permutation(count)
        for start in range(0, count, batch_size):
            yield order[start:start + batch_size]


def train_prior(generator, discriminator, poses, stats, cfg=None, rng=None):
    """
    Alternating Adam updates of discriminator and generator.

    Parameters
    ----------
    generator, discriminator : Mlp
        Updated in place.
    poses : (M, N, 2) array
        Normalized poses, see `prepare_dataset`.
    stats : SkeletonStats
    cfg : Configuration, optional
    rng : numpy.random.Generator, optional

    Returns
    -------
    PriorTrainResult
        history holds one dict per step.
    """
    cfg = cfg or config
    rng = rng if rng is not None else np.random.default_rng(cfg['SEED'])
    poses = np.asarray(poses, dtype=np.float64)
    if poses.ndim != 3 or not len(poses):
        raise ContractViolation('train_prior needs a non-empty (M, N, 2) '
                                'pose array')
    epsilon = cfg['PRIOR_EPSILON']
    angles = [math.radians(deg) for deg in cfg['PRIOR_VIEWS_DEG']]
    batch_size = min(cfg['PRIOR_BATCH_SIZE'], len(poses))
    steps = cfg['PRIOR_STEPS']
    if steps is None:
        steps = cfg['PRIOR_EPOCHS'] * int(math.ceil(len(poses) /
                                                    float(batch_size)))
    root = stats.trunk_pair[0]
    g_opt = Adam(generator.params, cfg['PRIOR_LR'])
    d_opt = Adam(discriminator.params, cfg['PRIOR_LR'])
    log_every = cfg['PRIOR_LOG_EVERY']
    history = []
    batches = _batches(len(poses), batch_size, rng)

    for step in range(steps):
        real = poses[next(batches)]
        record = {'step': step}

        if epsilon > 0:
            tape = Tape()
            leaves = discriminator.register(tape, 'D')
            depths = generate_depths(generator, real).data
            fake = _views(real, depths, root, angles).data
            _, loss_d = adv_losses(discriminator, real, fake, leaves)
            grads = _strip(tape.gradients(loss_d), 'D')
            discriminator.update(d_opt.step(discriminator.params, grads))
            record['loss_d'] = loss_d.item()

        tape = Tape()
        leaves = generator.register(tape, 'G')
        loss_g, parts = generator_loss(generator, discriminator, real, stats,
                                       angles, epsilon, leaves)
        grads = _strip(tape.gradients(loss_g), 'G')
        generator.update(g_opt.step(generator.params, grads))
        record.update(parts, loss_g=loss_g.item())
        history.append(record)

        if log_every and (step % log_every == 0 or step == steps - 1):
            log.info('prior training', **record)
    return PriorTrainResult(generator, discriminator, history)


def evaluate_geometry(generator, poses, stats):
    """ Mean (L_ratio, L_sym) of the generator's lifts of `poses`. """
    depths = generate_depths(generator, poses)
    l_ratio, l_sym = geometric_losses(poses, depths, stats)
    return l_ratio.item(), l_sym.item()


def depth_sign_accuracy(generator, poses, true_depths, root=0):
    """
    Fraction of non-root joints whose depth relative to the root has the
    true sign. Joints whose true relative depth is zero are skipped.
    """
    predicted = generate_depths(generator, poses).data
    predicted = predicted - predicted[:, root:root + 1]
    truth = np.asarray(true_depths) - np.asarray(true_depths)[:, root:root+1]
    mask = np.ones(truth.shape, dtype=bool)
    mask[:, root] = False
    mask &= truth != 0
    if not mask.any():
        raise ContractViolation('no joints to score')
    return float((np.sign(predicted[mask]) == np.sign(truth[mask])).mean())


def predict_gan_depths(generator, keypoints, trunk_pair):
    """
    Root-centered depths, in the units of `keypoints`, for one (N, 3)
    keypoint array. Returns None when the trunk keypoints are invisible or
    degenerate.
    """
    keypoints = np.asarray(keypoints, dtype=np.float64)
    root, top = trunk_pair
    if keypoints.shape[1] == 3 and not (keypoints[root, 2] > 0 and
                                        keypoints[top, 2] > 0):
        return None
    try:
        pose = normalize_keypoints(keypoints, trunk_pair)
    except DegeneratePose:
        return None
    u = np.where(pose.visibility[:, None], pose.u, 0.0)
    depths = generate_depths(generator, u).data
    return (depths - depths[root]) * pose.trunk


def save_prior(path, generator, discriminator):
    with open(path, 'w') as f:
        json.dump({'generator': generator.to_dict(),
                   'discriminator': discriminator.to_dict()}, f)


def load_prior(path):
    """ (generator, discriminator) from a weights file. """
    with open(path) as f:
        try:
            data = json.load(f)
        except ValueError as e:
            raise MalformedFileError(path, 'invalid JSON: {}'.format(e))
    for key in ('generator', 'discriminator'):
        if key not in data:
            raise MalformedFileError(path, 'missing', field=key)
    return (Mlp.from_dict(data['generator'], path),
            Mlp.from_dict(data['discriminator'], path))
