"""
Desk-scale experiments on synthetic data. All but the determinism check
take minutes and only run with bin/runtests --slow.
"""
import os

import numpy as np
import pytest

from deformlearn.formats.theta import write_theta_store
from deformlearn.learn import deform_learn_loop
from deformlearn.metrics import mean_mpjpe
from deformlearn.registration import RegistConfig, dense_loss, register
from deformlearn.synth import synth_dataset


def recovery_config(iterations=300, **weights):
    values = dict(w_dense=1000.0, w_kp=1.0, w_scale=10.0, w_joint=0.001,
                  w_det=1.0)
    values.update(weights)
    return RegistConfig(lr=0.1, batch_size=10, iterations=iterations,
                        **values)


def height_mm(template):
    return template.height() * 1000.0


def recovered_mpjpe(template, samples, truths, rc):
    results = register(samples, None, template, rc)
    assert not any(r.aborted for r in results)
    return mean_mpjpe(template, [r.params for r in results],
                      [truths[s.sample_id] for s in samples])


def test_registration_is_reproducible(template, synthetic_samples, out_dir):
    samples = synthetic_samples[0]
    paths = []
    for run in range(2):
        results = register(samples, None, template, recovery_config(5))
        path = os.path.join(out_dir, 'theta_{}.json'.format(run))
        write_theta_store({r.sample_id: r.params for r in results}, path)
        paths.append(path)
    with open(paths[0], 'rb') as a, open(paths[1], 'rb') as b:
        assert a.read() == b.read()


@pytest.mark.slow
def test_recovers_synthetic_bodies(template, cfg):
    cfg['SYNTH_DENSE_POINTS'] = 256
    samples, truths = synth_dataset(template, count=50, seed=0, cfg=cfg)
    error = recovered_mpjpe(template, samples, truths, recovery_config())
    assert error < 0.05 * height_mm(template)


@pytest.mark.slow
def test_recovers_noisy_synthetic_bodies(template, cfg):
    cfg['SYNTH_DENSE_POINTS'] = 256
    cfg['SYNTH_PIXEL_NOISE'] = 2.0
    samples, truths = synth_dataset(template, count=50, seed=0, cfg=cfg)
    error = recovered_mpjpe(template, samples, truths, recovery_config())
    assert error < 0.08 * height_mm(template)


@pytest.mark.slow
def test_dense_term_drives_the_alignment(template, cfg):
    cfg['SYNTH_DENSE_POINTS'] = 256
    samples, _ = synth_dataset(template, count=10, seed=1, cfg=cfg)
    residuals = {}
    for w_dense in (1000.0, 0.0):
        results = register(samples, None, template,
                           recovery_config(w_dense=w_dense))
        residuals[w_dense] = np.mean([
            dense_loss(r.params, template, s).item()
            for r, s in zip(results, samples)])
    assert residuals[0.0] > 2.0 * residuals[1000.0]


@pytest.mark.slow
def test_deform_learn_improves_over_rounds(template, cfg):
    cfg['SYNTH_DENSE_POINTS'] = 256
    cfg['HOLDOUT_FRACTION'] = 0.2
    cfg['DEFORM_LEARN_ROUNDS'] = 3
    cfg['REGRESSOR_HIDDEN'] = 128
    cfg['REGRESSOR_LR'] = 0.001
    samples, truths = synth_dataset(template, count=100, seed=2, cfg=cfg)
    state = deform_learn_loop(samples, template, cfg, ground_truth=truths)
    history = state.history
    assert len(state.holdout_ids) == 20
    assert history[-1]['holdout_mpjpe'] <= history[0]['holdout_mpjpe']
    for row in history:
        assert row['registration_mpjpe'] <= row['init_mpjpe'] * 1.01
