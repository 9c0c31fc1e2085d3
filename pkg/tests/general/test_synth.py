import numpy as np

from deformlearn.models import pose
from deformlearn.models.camera import depths_array, project_array
from deformlearn.synth import (SYNTH_TAG, render_sample, synth_dataset,
                               synth_prior_poses, visible_vertices)


def test_same_seed_same_samples(template):
    first, truths_a = synth_dataset(template, count=3, seed=4)
    second, truths_b = synth_dataset(template, count=3, seed=4)
    for a, b in zip(first, second):
        assert a.sample_id == b.sample_id
        assert a.dense_points.tobytes() == b.dense_points.tobytes()
        np.testing.assert_array_equal(a.dense_indices, b.dense_indices)
        assert a.keypoints.tobytes() == b.keypoints.tobytes()
    assert truths_a == truths_b
    other, _ = synth_dataset(template, count=1, seed=5)
    assert not np.array_equal(other[0].keypoints, first[0].keypoints)


def test_samples_are_self_consistent(template, synthetic_samples):
    samples, truths = synthetic_samples
    for sample in samples:
        theta = truths[sample.sample_id]
        posed = pose(template, theta)
        assert sample.tags == [SYNTH_TAG]
        assert len(sample.dense_indices) == 64
        np.testing.assert_allclose(
            sample.dense_points,
            project_array(posed.vertex_world[sample.dense_indices], theta),
            atol=1e-9)
        joints = posed.joint_world[template.keypoint_joints]
        np.testing.assert_allclose(sample.keypoints[:, :2],
                                   project_array(joints, theta), atol=1e-9)
        depths = depths_array(joints, theta)
        np.testing.assert_allclose(sample.gan_depths,
                                   depths - depths[0], atol=1e-9)
        assert sample.gan_depths[0] == 0.0


def test_dense_points_face_the_camera(template, synthetic_samples):
    samples, truths = synthetic_samples
    for sample in samples:
        theta = truths[sample.sample_id]
        visible = visible_vertices(template,
                                   pose(template, theta).vertex_world,
                                   theta.R)
        assert set(sample.dense_indices) <= set(visible)
        # Roughly the front half of the body.
        assert 0.2 * template.num_vertices < len(visible) < \
            0.8 * template.num_vertices


def test_dense_points_zero_takes_every_visible_vertex(template, rng):
    samples, truths = synth_dataset(template, count=1, seed=3)
    theta = truths[samples[0].sample_id]
    everything = render_sample(template, theta, 'all', rng, dense_points=0)
    visible = visible_vertices(template, pose(template, theta).vertex_world,
                               theta.R)
    np.testing.assert_array_equal(everything.dense_indices, visible)


def test_pixel_noise(template, cfg):
    clean, _ = synth_dataset(template, count=2, seed=8, cfg=cfg)
    cfg['SYNTH_PIXEL_NOISE'] = 2.0
    noisy, _ = synth_dataset(template, count=2, seed=8, cfg=cfg)
    # Later samples draw from a different rng state; only the first one
    # shares its pose and correspondences with the clean run.
    a, b = clean[0], noisy[0]
    np.testing.assert_array_equal(a.dense_indices, b.dense_indices)
    assert 1.0 < np.abs(a.dense_points - b.dense_points).std() < 4.0


def test_oracle_depths_can_be_disabled(template, cfg):
    cfg['SYNTH_GAN_DEPTHS'] = 'none'
    samples, _ = synth_dataset(template, count=1, seed=1, cfg=cfg)
    assert samples[0].gan_depths is None


def test_prior_poses(template):
    keypoints, depths = synth_prior_poses(template, count=20, seed=2)
    assert keypoints.shape == (20, template.num_keypoints, 3)
    assert depths.shape == (20, template.num_keypoints)
    assert (keypoints[:, :, 2] == 1).all()
    np.testing.assert_array_equal(depths[:, 0], 0.0)
    again, _ = synth_prior_poses(template, count=20, seed=2)
    np.testing.assert_array_equal(keypoints, again)
