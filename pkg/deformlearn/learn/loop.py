"""
The deform-and-learn alternation.

Each round registers the round's training samples (the first round stiffly
from the T-pose, later rounds from the regressor's predictions), replaces
theta_anno with the registration output, and trains the regressor on it.
The single-step strategy trains the regressor once, directly on the
annotations, without registration.
"""
import time

import numpy as np

from deformlearn.config import config
from deformlearn.exc import ContractViolation, DeformLearnError, RoundFailed
from deformlearn.learn.checkpoint import save_checkpoint
from deformlearn.learn.regressor import (ConvWeights, Regressor,
                                         train_regressor)
from deformlearn.log import get_logger
from deformlearn.metrics import mean_mpjpe
from deformlearn.prior.train import predict_gan_depths
from deformlearn.registration.register import (LOSS_UNITS, RegistConfig,
                                               RegistResult, initial_params,
                                               register)
log = get_logger()


class TrainState(object):
    """
    Attributes
    ----------
    round_index : int
        Rounds finished so far.
    theta_anno : dict of sample id -> BodyParams
        Output of the latest registration.
    regressor : Regressor or None
    history : list of dict
        One row per round, see checkpoint.HISTORY_FIELDS.
    regressor_history : list of dict
        One entry per regressor epoch, tagged with its round.
    train_ids, holdout_ids : list of str
    rng_state : dict or None
        Bit generator state after the last finished round; a resumed run
        continues the same random stream.
    """
    def __init__(self, round_index=0, theta_anno=None, regressor=None,
                 history=None, regressor_history=None, train_ids=None,
                 holdout_ids=None, strategy='deform-learn', rng_state=None):
        self.round_index = round_index
        self.theta_anno = dict(theta_anno or {})
        self.regressor = regressor
        self.history = list(history or [])
        self.regressor_history = list(regressor_history or [])
        self.train_ids = list(train_ids or [])
        self.holdout_ids = list(holdout_ids or [])
        self.strategy = strategy
        self.rng_state = rng_state


def split_holdout(sample_ids, fraction, seed):
    """ (train ids, held-out ids); the held-out share is drawn with `seed`
    and never empties the training set. """
    ids = list(sample_ids)
    count = int(round(fraction * len(ids)))
    count = min(max(count, 0), max(len(ids) - 1, 0))
    order = np.random.default_rng(seed).permutation(len(ids))
    held = set(order[:count].tolist())
    return ([i for k, i in enumerate(ids) if k not in held],
            [i for k, i in enumerate(ids) if k in held])


def round_tags(cfg, round_index):
    """ Tags selecting the samples of a round (1-based), or None for all. """
    schedule = cfg['ROUND_SAMPLE_TAGS']
    if not schedule or round_index > len(schedule):
        return None
    tags = schedule[round_index - 1]
    return None if tags is None else set(tags)


def fill_gan_depths(samples, generator, trunk_pair):
    """ Samples without gan_depths get the prior's prediction. """
    filled = []
    for sample in samples:
        if sample.gan_depths is None:
            depths = predict_gan_depths(generator, sample.keypoints,
                                        trunk_pair)
            if depths is not None:
                sample = sample.with_gan_depths(depths)
        filled.append(sample)
    return filled


def _mpjpe_or_none(template, ground_truth, predictions):
    if ground_truth is None or not predictions:
        return None
    ids = [i for i in predictions if i in ground_truth]
    if not ids:
        return None
    return mean_mpjpe(template, [predictions[i] for i in ids],
                      [ground_truth[i] for i in ids])


def _predict(regressor, samples, template):
    return dict(zip([s.sample_id for s in samples],
                    regressor.predict(samples, template)))


def _initial_state(samples, cfg, ground_truth):
    ids = [s.sample_id for s in samples]
    if ground_truth is not None:
        train_ids, holdout_ids = split_holdout(ids, cfg['HOLDOUT_FRACTION'],
                                               cfg['SEED'])
    else:
        train_ids, holdout_ids = ids, []
    return TrainState(train_ids=train_ids, holdout_ids=holdout_ids,
                      strategy=cfg['STRATEGY'])


def _evaluate_regressor(state, by_id, template, ground_truth, row):
    if ground_truth is None:
        return
    train = [by_id[i] for i in state.train_ids]
    row['train_mpjpe'] = _mpjpe_or_none(
        template, ground_truth, _predict(state.regressor, train, template))
    if state.holdout_ids:
        held = [by_id[i] for i in state.holdout_ids]
        row['holdout_mpjpe'] = _mpjpe_or_none(
            template, ground_truth, _predict(state.regressor, held,
                                             template))


def _train(state, samples, template, cfg, weights, rng, round_index):
    if state.regressor is None:
        state.regressor = Regressor.create(template, cfg, rng)
    try:
        result = train_regressor(state.regressor, samples, state.theta_anno,
                                 template, cfg, weights, rng)
    except DeformLearnError as e:
        raise RoundFailed(round_index, 'regressor training', e) from e
    for record in result.history:
        record['round'] = round_index
    state.regressor_history.extend(result.history)
    return result.history[-1]['total'] if result.history else None


def run_round(state, by_id, template, cfg, ground_truth=None, rng=None):
    """
    One registration + training round; appends to `state` and returns the
    new history row.

    Raises
    ------
    RoundFailed
        Wrapping whatever stopped the registration or the training.
    """
    k = state.round_index + 1
    tags = round_tags(cfg, k)
    samples = [by_id[i] for i in state.train_ids
               if tags is None or tags.intersection(by_id[i].tags)]
    if not samples:
        raise RoundFailed(k, 'sample selection', ContractViolation(
            'no training sample carries the tags {}'.format(sorted(tags))))

    first = state.regressor is None
    try:
        if first:
            init = [initial_params(template, s) for s in samples]
        else:
            init = state.regressor.predict(samples, template)
        rc = RegistConfig.from_config(cfg, first_round=first)
        results = register(samples, init, template, rc)
    except DeformLearnError as e:
        raise RoundFailed(k, 'registration', e) from e
    aborted = [r.sample_id for r in results if r.aborted]
    if len(aborted) == len(results):
        raise RoundFailed(k, 'registration', results[0].error)

    state.theta_anno = {r.sample_id: r.params for r in results}
    row = {'round': k, 'samples': len(samples), 'aborted': len(aborted),
           'registration_loss': float(np.mean([r.final_loss for r in results
                                               if not r.aborted]))}
    row['init_mpjpe'] = _mpjpe_or_none(
        template, ground_truth, {s.sample_id: theta
                                 for s, theta in zip(samples, init)})
    row['registration_mpjpe'] = _mpjpe_or_none(template, ground_truth,
                                               state.theta_anno)

    weights = ConvWeights.from_config(cfg, 'deform-learn')
    row['regressor_loss'] = _train(state, samples, template, cfg, weights,
                                   rng, k)
    _evaluate_regressor(state, by_id, template, ground_truth, row)
    state.round_index = k
    state.history.append(row)
    log.info('deform-learn round', loss_units=LOSS_UNITS, **row)
    return row


def single_step(state, by_id, template, cfg, ground_truth=None, rng=None):
    """ Train the regressor once on the annotations alone (alpha = 0). """
    samples = [by_id[i] for i in state.train_ids]
    weights = ConvWeights.from_config(cfg, 'single-step')
    row = {'round': 1, 'samples': len(samples), 'aborted': 0}
    row['regressor_loss'] = _train(state, samples, template, cfg, weights,
                                   rng, 1)
    _evaluate_regressor(state, by_id, template, ground_truth, row)
    state.round_index = 1
    state.history.append(row)
    log.info('single-step training', **row)
    return row


def deform_learn_loop(samples, template, cfg=None, ground_truth=None,
                      state=None, checkpoint_dir=None, generator=None):
    """
    Run (or resume) the alternation for DEFORM_LEARN_ROUNDS rounds.

    Parameters
    ----------
    samples : list of SampleAnnotation
    ground_truth : dict of sample id -> BodyParams, optional
        Enables the held-out split and the MPJPE columns of the history.
    state : TrainState, optional
        A checkpointed state to continue from.
    checkpoint_dir : str, optional
        Written after every round.
    generator : Mlp, optional
        Pose prior generator; fills in missing gan_depths.

    Returns
    -------
    TrainState
    """
    cfg = cfg or config
    samples = list(samples)
    if not samples:
        raise ContractViolation('deform-learn needs samples')
    for sample in samples:
        sample.check(template, need_dense=True)
    if generator is not None:
        samples = fill_gan_depths(samples, generator,
                                  template.keypoint_trunk)
    by_id = {s.sample_id: s for s in samples}
    if len(by_id) != len(samples):
        raise ContractViolation('sample ids must be unique')
    state = state or _initial_state(samples, cfg, ground_truth)
    missing = [i for i in state.train_ids + state.holdout_ids
               if i not in by_id]
    if missing:
        raise ContractViolation('checkpoint names unknown samples {}'.format(
            missing[:5]))
    rng = np.random.default_rng([cfg['SEED'], state.round_index])
    if state.rng_state is not None:
        rng.bit_generator.state = state.rng_state
    rounds = 1 if cfg['STRATEGY'] == 'single-step' else \
        cfg['DEFORM_LEARN_ROUNDS']

    while state.round_index < rounds:
        started = time.time()
        if cfg['STRATEGY'] == 'single-step':
            single_step(state, by_id, template, cfg, ground_truth, rng)
        else:
            run_round(state, by_id, template, cfg, ground_truth, rng)
        state.rng_state = rng.bit_generator.state
        log.debug('round finished', round=state.round_index,
                  seconds=round(time.time() - started, 2))
        if checkpoint_dir is not None:
            save_checkpoint(state, checkpoint_dir)
    return state


def refine(theta_conv, annotation, template, cfg=None, iterations=None):
    """
    Registration started from a regressor prediction.

    Returns
    -------
    RegistResult
        Zero iterations return theta_conv unchanged.

    Raises
    ------
    ContractViolation
        If the annotation has no dense correspondences.
    """
    cfg = cfg or config
    annotation.check(template)
    iterations = cfg['REFINE_ITERATIONS'] if iterations is None \
        else iterations
    if iterations == 0:
        return RegistResult(annotation.sample_id, theta_conv.copy(), [],
                            image_size=annotation.image_size)
    rc = RegistConfig.from_config(cfg, first_round=False,
                                  iterations=iterations)
    started = time.time()
    result = register([annotation], [theta_conv], template, rc)[0]
    log.info('refined sample', sample_id=annotation.sample_id,
             iterations=iterations, aborted=result.aborted,
             seconds=round(time.time() - started, 3))
    return result
