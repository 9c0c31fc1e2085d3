"""
Fit body parameters to annotated samples with Adam.

Samples are independent: each owns its tape and optimizer state, and the
batch size only decides how many are handed to the worker pool at once. The
optimization runs in image coordinates divided by the image size, so the
loss weights and the learning rate do not depend on the resolution; results
are converted back to pixels.
"""
import time

import numpy as np

from deformlearn.config import config
from deformlearn.diffcore.optim import Adam
from deformlearn.diffcore.tape import Tape
from deformlearn.exc import ContractViolation, DeformLearnError, \
    NonFiniteLoss
from deformlearn.log import get_logger
from deformlearn.models.body import BodyParams
from deformlearn.models.camera import orthonormalize
from deformlearn.registration.losses import TERMS, regist_loss
from deformlearn.util.concurrency import run_all
from deformlearn.util.itert import chunk
log = get_logger()

# Lower bounds enforced after every update.
MIN_SEGMENT_SCALE = 0.05
MIN_GLOBAL_SCALE = 1e-3
# Fit terms in traces and logs are measured on image coordinates divided by
# the image size.
LOSS_UNITS = 'image-normalized'


class RegistConfig(object):
    """
    Loss weights and optimizer settings of one registration run.

    In stiff mode the scale and joint weights are replaced by their stiff
    counterparts.
    """
    def __init__(self, w_dense, w_kp, w_scale, w_joint, w_det, lr,
                 batch_size, iterations, stiff=False, stiff_w_scale=100.0,
                 stiff_w_joint=1.0, threads=1):
        self.w_dense = float(w_dense)
        self.w_kp = float(w_kp)
        self.w_scale = float(w_scale)
        self.w_joint = float(w_joint)
        self.w_det = float(w_det)
        self.stiff_w_scale = float(stiff_w_scale)
        self.stiff_w_joint = float(stiff_w_joint)
        self.lr = float(lr)
        self.batch_size = int(batch_size)
        self.iterations = int(iterations)
        self.stiff = bool(stiff)
        self.threads = int(threads)
        if min(self.weights().values()) < 0 or \
                min(self.stiff_w_scale, self.stiff_w_joint) < 0:
            raise ContractViolation('registration weights must be >= 0')
        if self.batch_size < 1 or self.iterations < 0:
            raise ContractViolation('batch size must be >= 1 and iterations '
                                    '>= 0')

    @classmethod
    def from_config(cls, cfg=None, first_round=True, iterations=None):
        """ Weights from config; first rounds use the stiff schedule and the
        longer iteration budget. """
        cfg = cfg or config
        if iterations is None:
            iterations = cfg['REGIST_ITERATIONS_FIRST'] if first_round \
                else cfg['REGIST_ITERATIONS']
        return cls(cfg['REGIST_W_DENSE'], cfg['REGIST_W_KP'],
                   cfg['REGIST_W_SCALE'], cfg['REGIST_W_JOINT'],
                   cfg['REGIST_W_DET'], cfg['REGIST_LR'],
                   cfg['REGIST_BATCH_SIZE'], iterations,
                   stiff=first_round and cfg['REGIST_STIFF'],
                   stiff_w_scale=cfg['REGIST_STIFF_W_SCALE'],
                   stiff_w_joint=cfg['REGIST_STIFF_W_JOINT'],
                   threads=cfg['THREADS'])

    def weights(self):
        return {
            'dense': self.w_dense,
            'kp': self.w_kp,
            'scale': self.stiff_w_scale if self.stiff else self.w_scale,
            'joint': self.stiff_w_joint if self.stiff else self.w_joint,
            'det': self.w_det,
        }


class RegistResult(object):
    """
    Attributes
    ----------
    params : BodyParams
        Fitted theta with R orthonormalized (the initial theta if aborted).
    trace : list of dict
        Loss after 0, 1, ... updates: 'total' plus every term unweighted,
        in LOSS_UNITS. Multiply the dense and keypoint terms by
        image_size ** 2 for squared pixels.
    image_size : float
    aborted : bool
    error : Exception or None
    """
    def __init__(self, sample_id, params, trace, aborted=False, error=None,
                 seconds=0.0, image_size=1.0):
        self.sample_id = sample_id
        self.image_size = float(image_size)
        self.params = params
        self.trace = trace
        self.aborted = aborted
        self.error = error
        self.seconds = seconds

    @property
    def final_loss(self):
        return self.trace[-1]['total'] if self.trace else float('nan')


def initial_params(template, annotation):
    """
    T-pose with a camera that puts the matched template vertices over the
    annotated points: s from the ratio of their spreads, t from centroids.
    """
    params = BodyParams.t_pose(template.num_joints)
    if len(annotation.dense_indices):
        points = annotation.dense_points
        model = template.vertices[annotation.dense_indices, :2]
    else:
        visible = annotation.visible
        points = annotation.keypoints[visible, :2]
        model = template.rest_joints[template.keypoint_joints[visible], :2]
    if not len(points):
        raise ContractViolation('{}: nothing to initialize the camera from'
                                .format(annotation.sample_id))
    model_spread = np.sqrt(((model - model.mean(axis=0)) ** 2).sum(1).mean())
    point_spread = np.sqrt(((points - points.mean(axis=0)) ** 2).sum(1)
                           .mean())
    if model_spread > 0 and point_spread > 0:
        s = point_spread / model_spread
    else:
        s = annotation.image_size / max(template.height(), 1e-6)
    params.s = float(s)
    params.t = points.mean(axis=0) - s * model.mean(axis=0)
    return params


def _check_finite(annotation, iteration, terms, grads=None):
    values = list(terms.values())
    if grads is not None:
        values.extend(float(np.abs(g).max()) for g in grads.values())
    if not np.all(np.isfinite(values)):
        raise NonFiniteLoss('{}: loss stopped being finite at iteration {}'
                            .format(annotation.sample_id, iteration),
                            sample_id=annotation.sample_id,
                            iteration=iteration, terms=terms)


def fit_sample(template, annotation, init, rc):
    """
    Minimize the weighted registration loss for one sample.

    Raises
    ------
    NonFiniteLoss
        If the loss or a gradient stops being finite.
    DegenerateRotation
        If R collapses.
    """
    annotation.check(template)
    started = time.time()
    size = annotation.image_size
    scaled = annotation.scaled(1.0 / size)
    weights = rc.weights()
    params = init.scaled(1.0 / size).as_arrays()
    optimizer = Adam(params, rc.lr)
    trace = []
    for iteration in range(rc.iterations + 1):
        tape = Tape()
        leaves = {name: tape.variable(name, value)
                  for name, value in params.items()}
        total, terms = regist_loss(leaves, template, scaled, weights)
        terms['total'] = total.item()
        _check_finite(annotation, iteration, terms)
        trace.append(terms)
        if iteration == rc.iterations:
            break
        grads = tape.gradients(total)
        _check_finite(annotation, iteration, terms, grads)
        params = optimizer.step(params, grads)
        params['S'] = np.maximum(params['S'], MIN_SEGMENT_SCALE)
        params['s'] = np.maximum(params['s'], MIN_GLOBAL_SCALE)
    fitted = BodyParams.from_arrays(params).scaled(size)
    fitted.R = orthonormalize(fitted.R)
    seconds = time.time() - started
    log.debug('registered sample', sample_id=annotation.sample_id,
              iterations=rc.iterations, loss=trace[-1]['total'],
              loss_units=LOSS_UNITS, image_size=size,
              seconds=round(seconds, 3))
    return RegistResult(annotation.sample_id, fitted, trace, seconds=seconds,
                        image_size=size)


def register(samples, init, template, rc=None):
    """
    Register every sample.

    Parameters
    ----------
    samples : list of SampleAnnotation
    init : list of BodyParams, or None
        One per sample; None starts every sample from the T-pose (with a
        camera from `initial_params`).
    template : BodyTemplate
    rc : RegistConfig, optional
        Defaults to the first-round schedule from config.

    Returns
    -------
    list of RegistResult
        In sample order. A sample whose fit fails is marked aborted, keeps
        its initial theta, and does not affect the others.
    """
    rc = rc or RegistConfig.from_config()
    samples = list(samples)
    if init is None:
        init = [initial_params(template, s) for s in samples]
    init = list(init)
    if len(init) != len(samples):
        raise ContractViolation('register: {} samples but {} initial thetas'
                                .format(len(samples), len(init)))
    for sample in samples:
        sample.check(template)

    def task(pair):
        sample, theta = pair
        return fit_sample(template, sample, theta, rc)

    results = []
    pairs = list(zip(samples, init))
    for batch in chunk(pairs, rc.batch_size):
        outcomes = run_all(task, batch, threads=rc.threads, logger=log,
                           errmsg='registration failed')
        for (sample, theta), outcome in zip(batch, outcomes):
            if outcome.ok:
                results.append(outcome.value)
                continue
            error = outcome.error
            if not isinstance(error, DeformLearnError):
                raise error
            log.warning('registration aborted', sample_id=sample.sample_id,
                        error=str(error),
                        iteration=getattr(error, 'iteration', None),
                        terms=getattr(error, 'terms', None))
            results.append(RegistResult(sample.sample_id, theta.copy(), [],
                                        aborted=True, error=error,
                                        image_size=sample.image_size))
    done = [r for r in results if not r.aborted]
    log.info('registration finished', samples=len(samples),
             aborted=len(samples) - len(done), stiff=rc.stiff,
             iterations=rc.iterations, loss_units=LOSS_UNITS,
             mean_loss=float(np.mean([r.final_loss for r in done]))
             if done else None)
    return results


__all__ = ['RegistConfig', 'RegistResult', 'register', 'fit_sample',
           'initial_params', 'TERMS', 'LOSS_UNITS']
