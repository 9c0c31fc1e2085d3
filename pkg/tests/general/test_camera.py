import numpy as np
import pytest

from deformlearn.diffcore import check_gradient, ops
from deformlearn.exc import DegenerateRotation
from deformlearn.models import (BodyParams, WeakPerspectiveCamera,
                                gram_schmidt, project)
from deformlearn.models.camera import (depths_array, orthonormalize,
                                       project_array)
from deformlearn.registration import det_loss

POINT = np.array([[1.0, 2.0, 3.0]])


def test_gram_schmidt_identity():
    np.testing.assert_allclose(orthonormalize(np.eye(3)), np.eye(3),
                               atol=1e-15)


def test_gram_schmidt_removes_column_scale():
    np.testing.assert_allclose(orthonormalize(np.diag([2.0, 3.0, 5.0])),
                               np.eye(3), atol=1e-15)


def test_gram_schmidt_orthonormal(rng):
    for _ in range(1000):
        m = rng.standard_normal((3, 3))
        if abs(np.linalg.det(m)) < 1e-3:
            continue
        q = orthonormalize(m)
        assert np.linalg.norm(q.T.dot(q) - np.eye(3)) < 1e-9


def test_gram_schmidt_batched_and_idempotent(rng):
    m = rng.standard_normal((5, 3, 3))
    q = gram_schmidt(m).data
    assert q.shape == (5, 3, 3)
    np.testing.assert_allclose(gram_schmidt(q).data, q, atol=1e-12)


def test_gram_schmidt_keeps_orientation():
    q = orthonormalize(np.diag([1.0, 1.0, -4.0]))
    assert np.linalg.det(q) == pytest.approx(-1.0)


def test_gram_schmidt_rank_deficient():
    m = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 1.0, 1.0]]).T
    with pytest.raises(DegenerateRotation):
        orthonormalize(m)


@pytest.mark.parametrize('s,t,expected', [
    (1.0, (0.0, 0.0), (1.0, 2.0)),
    (1.0, (10.0, -5.0), (11.0, -3.0)),
    (2.0, (0.0, 0.0), (2.0, 4.0)),
])
def test_project(s, t, expected):
    cam = WeakPerspectiveCamera(np.eye(3), s, np.array(t))
    np.testing.assert_allclose(project(POINT, cam).data, [expected])


def test_project_is_equivariant(rng):
    points = rng.standard_normal((10, 3))
    R = rng.standard_normal((3, 3))
    base = project(points, WeakPerspectiveCamera(R, 3.0, np.zeros(2))).data
    shifted = project(points, WeakPerspectiveCamera(
        R, 3.0, np.array([4.0, -1.0]))).data
    np.testing.assert_allclose(shifted - base, np.tile([4.0, -1.0], (10, 1)),
                               atol=1e-12)
    scaled = project(points, WeakPerspectiveCamera(R, 6.0, np.zeros(2))).data
    np.testing.assert_allclose(scaled, 2.0 * base, atol=1e-12)


def test_array_helpers_match(rng):
    params = BodyParams.t_pose(s=2.0, t=(5.0, 6.0))
    np.testing.assert_allclose(project_array(POINT, params), [[7.0, 10.0]])
    np.testing.assert_allclose(depths_array(POINT, params), [6.0])


def test_project_gradient(rng):
    points = rng.standard_normal((6, 3))
    weights = rng.standard_normal((6, 2))

    def f(x):
        cam = WeakPerspectiveCamera(ops.reshape(ops.getitem(x, slice(0, 9)),
                                                (3, 3)),
                                    ops.getitem(x, 9),
                                    ops.getitem(x, slice(10, 12)))
        return ops.sum(ops.mul(project(points, cam), weights))

    x = np.concatenate([(np.eye(3) + 0.2 * rng.standard_normal((3, 3)))
                        .ravel(), [1.5], rng.standard_normal(2)])
    assert check_gradient(f, x).max_error < 1e-4


def test_det_loss():
    assert det_loss(np.eye(3)).item() == pytest.approx(np.exp(-1.0))
    assert det_loss(np.diag([1.0, 1.0, -1.0])).item() == \
        pytest.approx(np.exp(1.0))
