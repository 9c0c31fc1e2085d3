import os

import numpy as np
import pytest

from deformlearn.exc import ContractViolation, MalformedFileError, \
    RoundFailed
from deformlearn.learn import (TrainState, deform_learn_loop, load_checkpoint,
                               refine, save_checkpoint)
from deformlearn.learn.checkpoint import (HISTORY_FIELDS, HISTORY_FILE,
                                          read_history, round_dir,
                                          write_history)
from deformlearn.learn.loop import fill_gan_depths, round_tags, split_holdout
from deformlearn.prior import new_prior
from deformlearn.registration import initial_params


@pytest.fixture
def loop_cfg(cfg):
    """ Rounds small enough to run in seconds. """
    cfg['REGIST_ITERATIONS_FIRST'] = 3
    cfg['REGIST_ITERATIONS'] = 2
    cfg['REGIST_LR'] = 0.01
    cfg['REGRESSOR_HIDDEN'] = 8
    cfg['REGRESSOR_LAYERS'] = 2
    cfg['REGRESSOR_EPOCHS'] = 2
    cfg['REGRESSOR_BATCH_SIZE'] = 2
    cfg['DEFORM_LEARN_ROUNDS'] = 1
    cfg['HOLDOUT_FRACTION'] = 0.25
    cfg['REFINE_ITERATIONS'] = 3
    return cfg


def test_split_holdout():
    ids = ['a', 'b', 'c', 'd']
    train, held = split_holdout(ids, 0.25, 0)
    assert len(held) == 1
    assert sorted(train + held) == ids
    assert split_holdout(ids, 0.25, 0) == (train, held)
    assert split_holdout(ids, 0.0, 0) == (ids, [])
    # The training set never empties.
    assert len(split_holdout(ids, 1.0, 0)[0]) == 1
    assert split_holdout([], 0.5, 0) == ([], [])


def test_round_tags(cfg):
    assert round_tags(cfg, 1) is None
    cfg['ROUND_SAMPLE_TAGS'] = [['easy'], None, ['easy', 'hard']]
    assert round_tags(cfg, 1) == {'easy'}
    assert round_tags(cfg, 2) is None
    assert round_tags(cfg, 3) == {'easy', 'hard'}
    assert round_tags(cfg, 4) is None


def test_one_round(template, synthetic_samples, loop_cfg):
    samples, truths = synthetic_samples
    state = deform_learn_loop(samples, template, loop_cfg,
                              ground_truth=truths)
    assert state.round_index == 1
    assert len(state.holdout_ids) == 1
    assert sorted(state.theta_anno) == sorted(state.train_ids)
    assert state.regressor.epochs == 2
    assert [r['round'] for r in state.regressor_history] == [1, 1]
    row, = state.history
    assert row['round'] == 1
    assert row['samples'] == 3
    assert row['aborted'] == 0
    for key in ('registration_loss', 'regressor_loss', 'init_mpjpe',
                'registration_mpjpe', 'train_mpjpe', 'holdout_mpjpe'):
        assert np.isfinite(row[key])


def test_without_ground_truth_nothing_is_held_out(template,
                                                  synthetic_samples,
                                                  loop_cfg):
    samples = synthetic_samples[0]
    state = deform_learn_loop(samples, template, loop_cfg)
    assert state.holdout_ids == []
    assert len(state.theta_anno) == len(samples)
    row, = state.history
    assert row['init_mpjpe'] is None
    assert 'train_mpjpe' not in row


def test_checkpoint_and_resume(template, synthetic_samples, loop_cfg,
                               out_dir):
    samples, truths = synthetic_samples
    first = deform_learn_loop(samples, template, loop_cfg,
                              ground_truth=truths, checkpoint_dir=out_dir)
    assert os.path.isdir(round_dir(out_dir, 1))

    state = load_checkpoint(out_dir, template.num_joints)
    assert state.round_index == 1
    assert state.train_ids == first.train_ids
    assert state.holdout_ids == first.holdout_ids
    assert state.regressor.epochs == 2
    for sample_id, theta in first.theta_anno.items():
        np.testing.assert_allclose(state.theta_anno[sample_id].to_vector(),
                                   theta.to_vector())

    loop_cfg['DEFORM_LEARN_ROUNDS'] = 2
    resumed = deform_learn_loop(samples, template, loop_cfg,
                                ground_truth=truths, state=state,
                                checkpoint_dir=out_dir)
    assert resumed.round_index == 2
    assert [r['round'] for r in resumed.history] == [1, 2]
    assert resumed.regressor.epochs == 4
    assert os.path.isdir(round_dir(out_dir, 2))
    assert load_checkpoint(out_dir).round_index == 2

    # A finished run has nothing left to do.
    again = deform_learn_loop(samples, template, loop_cfg, state=resumed)
    assert again.round_index == 2
    assert len(again.history) == 2


def test_resumed_run_matches_uninterrupted(template, synthetic_samples,
                                           loop_cfg, out_dir):
    samples, truths = synthetic_samples
    loop_cfg['DEFORM_LEARN_ROUNDS'] = 2
    straight = deform_learn_loop(samples, template, loop_cfg,
                                 ground_truth=truths)

    loop_cfg['DEFORM_LEARN_ROUNDS'] = 1
    deform_learn_loop(samples, template, loop_cfg, ground_truth=truths,
                      checkpoint_dir=out_dir)
    state = load_checkpoint(out_dir, template.num_joints)
    assert state.rng_state is not None
    loop_cfg['DEFORM_LEARN_ROUNDS'] = 2
    resumed = deform_learn_loop(samples, template, loop_cfg,
                                ground_truth=truths, state=state)

    np.testing.assert_array_equal(
        resumed.regressor.predict_vectors(samples, template),
        straight.regressor.predict_vectors(samples, template))
    assert resumed.theta_anno == straight.theta_anno
    assert resumed.rng_state == straight.rng_state


def test_bad_generator_state(out_dir):
    save_checkpoint(TrainState(train_ids=['a'],
                               rng_state={'bit_generator': 'Nope'}), out_dir)
    with pytest.raises(MalformedFileError) as e:
        load_checkpoint(out_dir)
    assert e.value.field == 'rng_state'


def test_resume_with_unknown_samples(template, synthetic_samples, loop_cfg):
    samples = synthetic_samples[0]
    state = TrainState(train_ids=['nobody'])
    with pytest.raises(ContractViolation):
        deform_learn_loop(samples, template, loop_cfg, state=state)


def test_missing_checkpoint(out_dir):
    with pytest.raises(MalformedFileError):
        load_checkpoint(os.path.join(out_dir, 'nothing'))


def test_history_file(out_dir):
    path = os.path.join(out_dir, HISTORY_FILE)
    rows = [{'round': 1, 'samples': 10, 'aborted': 0,
             'registration_loss': 0.5, 'regressor_loss': 1.25}]
    write_history(rows, path)
    read, = read_history(path)
    assert read['round'] == 1
    assert read['registration_loss'] == 0.5
    assert read['holdout_mpjpe'] is None
    assert set(read) == set(HISTORY_FIELDS)

    with open(path, 'a') as f:
        f.write('2,10,0,oops,,,,,\n')
    with pytest.raises(MalformedFileError) as e:
        read_history(path)
    assert e.value.line == 3
    assert e.value.field == 'registration_loss'


def test_round_without_tagged_samples(template, synthetic_samples, loop_cfg):
    loop_cfg['ROUND_SAMPLE_TAGS'] = [['in-the-wild']]
    with pytest.raises(RoundFailed) as e:
        deform_learn_loop(synthetic_samples[0], template, loop_cfg)
    assert e.value.round_index == 1
    assert e.value.phase == 'sample selection'


def test_round_tags_select_samples(template, synthetic_samples, loop_cfg):
    samples = list(synthetic_samples[0])
    samples[0] = samples[0]._replace(tags=['lab'])
    loop_cfg['ROUND_SAMPLE_TAGS'] = [['synthetic']]
    state = deform_learn_loop(samples, template, loop_cfg)
    assert samples[0].sample_id not in state.theta_anno
    assert state.history[0]['samples'] == len(samples) - 1


def test_round_fails_when_every_registration_aborts(template,
                                                    synthetic_samples,
                                                    loop_cfg):
    broken = []
    for sample in synthetic_samples[0]:
        points = sample.dense_points.copy()
        points[0] = np.nan
        broken.append(sample.with_dense(points, sample.dense_indices))
    with pytest.raises(RoundFailed) as e:
        deform_learn_loop(broken, template, loop_cfg)
    assert e.value.phase == 'registration'


def test_duplicate_or_empty_samples(template, synthetic_samples, loop_cfg):
    sample = synthetic_samples[0][0]
    with pytest.raises(ContractViolation):
        deform_learn_loop([sample, sample], template, loop_cfg)
    with pytest.raises(ContractViolation):
        deform_learn_loop([], template, loop_cfg)
    with pytest.raises(ContractViolation):
        deform_learn_loop([sample.with_dense([], [])], template, loop_cfg)


def test_single_step(template, synthetic_samples, loop_cfg):
    samples, truths = synthetic_samples
    loop_cfg['STRATEGY'] = 'single-step'
    loop_cfg['DEFORM_LEARN_ROUNDS'] = 3
    state = deform_learn_loop(samples, template, loop_cfg,
                              ground_truth=truths)
    assert state.round_index == 1
    assert state.strategy == 'single-step'
    assert state.theta_anno == {}
    row, = state.history
    assert 'registration_loss' not in row
    assert np.isfinite(row['regressor_loss'])
    assert 'regress' not in state.regressor_history[0]


def test_loop_is_deterministic(template, synthetic_samples, loop_cfg):
    samples = synthetic_samples[0]
    runs = [deform_learn_loop(samples, template, loop_cfg)
            for _ in range(2)]
    np.testing.assert_array_equal(
        runs[0].regressor.predict_vectors(samples, template),
        runs[1].regressor.predict_vectors(samples, template))
    assert runs[0].history == runs[1].history


def test_prior_fills_missing_depths(template, synthetic_samples, loop_cfg):
    samples = [s.with_gan_depths(None) for s in synthetic_samples[0]]
    generator, _ = new_prior(template.num_keypoints, loop_cfg)
    filled = fill_gan_depths(samples, generator, template.keypoint_trunk)
    for sample in filled:
        assert sample.gan_depths.shape == (template.num_keypoints,)
        assert sample.gan_depths[0] == 0.0
    # Existing depths are kept.
    kept = fill_gan_depths(synthetic_samples[0][:1], generator,
                           template.keypoint_trunk)
    np.testing.assert_array_equal(kept[0].gan_depths,
                                  synthetic_samples[0][0].gan_depths)


def test_refine_zero_iterations(template, synthetic_samples, loop_cfg):
    sample = synthetic_samples[0][0]
    theta = initial_params(template, sample)
    result = refine(theta, sample, template, loop_cfg, iterations=0)
    assert result.params == theta
    assert result.params is not theta
    assert not result.aborted


def test_refine_improves_the_fit(template, synthetic_samples, loop_cfg):
    sample = synthetic_samples[0][0]
    theta = initial_params(template, sample)
    result = refine(theta, sample, template, loop_cfg)
    assert len(result.trace) == 4
    assert result.final_loss < result.trace[0]['total']


def test_refine_needs_dense(template, synthetic_samples, loop_cfg):
    sample = synthetic_samples[0][0]
    with pytest.raises(ContractViolation):
        refine(initial_params(template, sample), sample.with_dense([], []),
               template, loop_cfg)


def test_save_checkpoint_before_any_round(out_dir):
    save_checkpoint(TrainState(train_ids=['a']), out_dir)
    state = load_checkpoint(out_dir)
    assert state.round_index == 0
    assert state.regressor is None
    assert state.train_ids == ['a']
    assert state.history == []
