import json
import os

import numpy as np
import pytest

from deformlearn.diffcore import check_gradient, ops
from deformlearn.exc import ContractViolation, MalformedFileError
from deformlearn.learn import (ConvWeights, Regressor, RegressorParams132,
                               params_to_regressor_space,
                               regressor_space_to_params, smooth_l1,
                               train_regressor)
from deformlearn.learn.regressor import (conv_loss, feature_width, features,
                                         regress_loss, regressor_size)
from deformlearn.models import BodyParams
from deformlearn.registration import SampleAnnotation


@pytest.fixture
def small_cfg(cfg):
    cfg['REGRESSOR_HIDDEN'] = 8
    cfg['REGRESSOR_LAYERS'] = 2
    cfg['REGRESSOR_EPOCHS'] = 2
    cfg['REGRESSOR_BATCH_SIZE'] = 3
    return cfg


def truth_map(synthetic_samples):
    return dict(synthetic_samples[1])


def test_regressor_size():
    assert regressor_size(24) == 132
    vec = np.arange(132.0)
    reg = RegressorParams132.from_vector(vec)
    assert reg.quaternions.shape == (24, 4)
    assert reg.S[0] == 96.0
    assert reg.s[0] == 129.0
    np.testing.assert_array_equal(reg.t, [130.0, 131.0])
    np.testing.assert_array_equal(reg.to_vector(), vec)
    assert len(reg) == 132
    with pytest.raises(ContractViolation):
        RegressorParams132.from_vector(np.zeros(108))


def test_space_conversion(rng):
    params = BodyParams(rng.uniform(-1.0, 1.0, (24, 3)),
                        rng.uniform(0.8, 1.2, 24), np.eye(3), 0.4,
                        rng.uniform(0.0, 1.0, 2))
    reg = params_to_regressor_space(params)
    np.testing.assert_allclose(np.linalg.norm(reg.quaternions, axis=1), 1.0)
    assert (reg.quaternions[:, 0] >= 0).all()
    back = regressor_space_to_params(reg)
    np.testing.assert_allclose(back.a, params.a, atol=1e-9)
    np.testing.assert_array_equal(back.S, params.S)
    np.testing.assert_allclose(back.R, np.eye(3), atol=1e-15)
    assert back.s == 0.4


def test_decoded_rotation_is_orthonormal(rng):
    reg = params_to_regressor_space(BodyParams.t_pose())
    reg.R_raw = rng.standard_normal(9)
    R = regressor_space_to_params(reg).R
    np.testing.assert_allclose(R.T.dot(R), np.eye(3), atol=1e-9)


def test_zero_quaternion_is_rejected():
    reg = params_to_regressor_space(BodyParams.t_pose())
    reg.quaternions[3] = 0.0
    with pytest.raises(ContractViolation):
        regressor_space_to_params(reg)


def test_smooth_l1():
    np.testing.assert_allclose(smooth_l1([0.0, 0.5, 1.0, 2.0, -3.0]),
                               [0.0, 0.125, 0.5, 1.5, 2.5])
    np.testing.assert_allclose(smooth_l1([0.5, 4.0], delta=2.0),
                               [0.0625, 3.0])
    x = np.array([[0.2, -1.5], [3.0, 0.0]])
    assert regress_loss(x, np.zeros_like(x)).item() == \
        pytest.approx(smooth_l1(x).mean())


@pytest.mark.parametrize('delta', [1.0, 0.25])
def test_smooth_l1_knee(delta):
    step = 1e-7
    left, knee, right = smooth_l1([delta - step, delta, delta + step], delta)
    assert knee == pytest.approx(0.5 * delta, abs=1e-12)
    assert (knee - left) / step == pytest.approx(1.0, abs=1e-6)
    assert (right - knee) / step == pytest.approx(1.0, abs=1e-6)


def test_features(template, synthetic_samples, config):
    sample = synthetic_samples[0][0]
    x = features(sample, template)
    assert x.shape == (feature_width(template),)
    assert len(x) == 3 * 16 + 5 * config['REGRESSOR_DENSE_FEATURES']
    np.testing.assert_array_equal(features(sample, template), x)
    np.testing.assert_allclose(x[:2], sample.keypoints[0, :2] / 256.0)

    keypoints = sample.keypoints.copy()
    keypoints[2, 2] = 0.0
    hidden = SampleAnnotation(sample.sample_id, sample.dense_points,
                              sample.dense_indices, keypoints,
                              sample.gan_depths, sample.width, sample.height)
    y = features(hidden, template)
    np.testing.assert_array_equal(y[6:9], 0.0)
    np.testing.assert_array_equal(y[9:], x[9:])


def test_features_pad_missing_dense(template, synthetic_samples):
    sample = synthetic_samples[0][0]
    few = sample.with_dense(sample.dense_points[:3], sample.dense_indices[:3])
    x = features(few, template)
    dense = x[3 * template.num_keypoints:].reshape(-1, 5)
    assert np.count_nonzero(np.abs(dense).sum(axis=1)) <= 3
    np.testing.assert_array_equal(dense[3:], 0.0)


def test_untrained_regressor_predicts_the_average(template, synthetic_samples,
                                                  small_cfg):
    regressor = Regressor.create(template, small_cfg)
    samples = synthetic_samples[0]
    thetas = regressor.predict(samples, template)
    assert len(thetas) == len(samples)
    for theta, sample in zip(thetas, samples):
        assert theta.s == pytest.approx(0.5 * sample.image_size, rel=0.1)
        np.testing.assert_allclose(theta.t, 0.5 * sample.image_size,
                                   rtol=0.1)
        assert (theta.S >= 0.05).all()
        np.testing.assert_allclose(theta.R.T.dot(theta.R), np.eye(3),
                                   atol=1e-9)


def test_regressor_offset_must_match(template, small_cfg):
    regressor = Regressor.create(template, small_cfg)
    with pytest.raises(ContractViolation):
        Regressor(regressor.mlp, np.zeros(10), 4, 0)


def test_conv_weights_from_config(cfg):
    w = ConvWeights.from_config(cfg)
    assert (w.alpha, w.beta, w.gamma) == (1.0, 10.0, 1.0)
    assert (w.w_scale, w.w_det, w.delta) == (0.0, 0.0, 1.0)
    single = ConvWeights.from_config(cfg, strategy='single-step')
    assert single.alpha == 0.0
    assert single.w_scale == 10.0
    assert single.w_det == 1.0


def scaled_pair(synthetic_samples):
    samples, truths = synthetic_samples
    sample = samples[0]
    theta = truths[sample.sample_id].scaled(1.0 / sample.image_size)
    return sample.scaled(1.0 / sample.image_size), theta


def test_conv_loss_at_the_target(template, synthetic_samples):
    sample, theta = scaled_pair(synthetic_samples)
    target = params_to_regressor_space(theta).to_vector()[None]
    total, terms = conv_loss(ops.constant(target), target, [sample],
                             template, ConvWeights(1.0, 10.0, 1.0))
    assert terms['regress'] == 0.0
    assert terms['dense'] < 1e-12
    assert terms['kp'] < 1e-12
    assert total.item() == pytest.approx(terms['total'])


def test_conv_loss_without_body_terms(template, synthetic_samples, rng):
    sample, theta = scaled_pair(synthetic_samples)
    target = params_to_regressor_space(theta).to_vector()[None]
    prediction = target + rng.standard_normal(target.shape)
    total, terms = conv_loss(ops.constant(prediction), target, [sample],
                             template, ConvWeights(2.0, 0.0, 0.0))
    assert set(terms) == {'regress', 'total'}
    assert total.item() == pytest.approx(
        2.0 * smooth_l1(prediction - target).mean())


def test_conv_loss_gradient(template, synthetic_samples, rng):
    sample, theta = scaled_pair(synthetic_samples)
    target = params_to_regressor_space(theta).to_vector()
    start = target + 0.05 * rng.standard_normal(target.shape)
    weights = ConvWeights(1.0, 10.0, 1.0, w_scale=10.0, w_det=1.0)

    def f(x):
        return conv_loss(ops.reshape(x, (1, 132)), target[None], [sample],
                         template, weights)[0]

    check = check_gradient(f, start)
    assert check.ok
    assert check.max_error < 1e-4


def test_train_regressor(template, synthetic_samples, small_cfg):
    samples = synthetic_samples[0]
    truths = truth_map(synthetic_samples)
    regressor = Regressor.create(template, small_cfg)
    result = train_regressor(regressor, samples, truths, template, small_cfg)
    assert result.regressor is regressor
    assert [h['epoch'] for h in result.history] == [0, 1]
    assert set(result.history[0]) == {'epoch', 'regress', 'dense', 'kp',
                                      'scale', 'det', 'total'}
    assert regressor.epochs == 2
    expected = np.mean([params_to_regressor_space(
        truths[s.sample_id].scaled(1.0 / s.image_size)).to_vector()
        for s in samples], axis=0)
    np.testing.assert_allclose(regressor.offset, expected)


def test_train_regressor_descends(template, synthetic_samples, small_cfg):
    small_cfg['REGRESSOR_EPOCHS'] = 30
    small_cfg['REGRESSOR_LR'] = 0.001
    small_cfg['REGRESSOR_BATCH_SIZE'] = 4
    samples = synthetic_samples[0]
    regressor = Regressor.create(template, small_cfg)
    history = train_regressor(regressor, samples,
                              truth_map(synthetic_samples), template,
                              small_cfg,
                              weights=ConvWeights(1.0, 0.0, 0.0)).history
    assert history[-1]['total'] < history[0]['total']


def test_train_regressor_needs_targets(template, synthetic_samples,
                                       small_cfg):
    samples = synthetic_samples[0]
    regressor = Regressor.create(template, small_cfg)
    with pytest.raises(ContractViolation):
        train_regressor(regressor, samples, {}, template, small_cfg)
    with pytest.raises(ContractViolation):
        train_regressor(regressor, [], {}, template, small_cfg)
    # Without alpha no targets are read.
    result = train_regressor(regressor, samples, {}, template, small_cfg,
                             weights=ConvWeights(0.0, 10.0, 1.0))
    assert 'regress' not in result.history[0]


def test_regressor_file_round_trip(template, synthetic_samples, small_cfg,
                                   out_dir):
    samples = synthetic_samples[0]
    regressor = Regressor.create(template, small_cfg)
    train_regressor(regressor, samples, truth_map(synthetic_samples),
                    template, small_cfg)
    path = os.path.join(out_dir, 'regressor.json')
    regressor.save(path)
    restored = Regressor.load(path)
    assert restored.epochs == 2
    np.testing.assert_array_equal(restored.predict_vectors(samples, template),
                                  regressor.predict_vectors(samples,
                                                            template))


def test_bad_regressor_file(template, small_cfg, out_dir):
    path = os.path.join(out_dir, 'regressor.json')
    data = Regressor.create(template, small_cfg).to_dict()
    del data['offset']
    with open(path, 'w') as f:
        json.dump(data, f)
    with pytest.raises(MalformedFileError):
        Regressor.load(path)
    with open(path, 'w') as f:
        f.write('not json')
    with pytest.raises(MalformedFileError):
        Regressor.load(path)
