"""
Tests for the regularized point-to-plane solver.

Verifies:
- Normal equations match a dense accumulation oracle
- Forward-constructed systems are recovered exactly
- The regularizer pins rotation and shrinks it monotonically
- Rank of the corner and single-plane scenes
- Residuals agree with A x - b
"""

import numpy as np
import pytest

from app.correspond import CorrespondenceSet
from app.errors import DegenerateSystem
from app.geom import TwistParams
from app.models import LambdaMode
from app.solver import (
    NormalEquations,
    Regularizer,
    build_normal_equations,
    linear_rows,
    normal_equations_from_rows,
    pointwise_residual,
    solve_regularized,
    system_rank,
)


def random_pairs(rng, count=200, x_true=None) -> CorrespondenceSet:
    """Pairs whose targets satisfy A x_true = b exactly when x_true is given"""
    p = rng.uniform(-1.0, 1.0, size=(count, 3)) + [0.0, 0.0, 2.0]
    n = rng.normal(size=(count, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    if x_true is None:
        q = p + rng.normal(scale=0.01, size=(count, 3))
    else:
        a = np.hstack([np.cross(p, n), n])
        q = p + (a @ x_true)[:, None] * n
    return CorrespondenceSet.from_pairs(p, q, n)


def plane_pairs(point, normal, count=400, seed=0) -> CorrespondenceSet:
    rng = np.random.default_rng(seed)
    normal = np.asarray(normal, dtype=float)
    normal /= np.linalg.norm(normal)
    basis = np.linalg.svd(normal[None, :])[2][1:]
    offsets = rng.uniform(-1.0, 1.0, size=(count, 2)) @ basis
    p = np.asarray(point, dtype=float) + offsets
    return CorrespondenceSet.from_pairs(p, p, np.tile(normal, (count, 1)))


def corner_pairs() -> CorrespondenceSet:
    parts = [
        plane_pairs((0.0, 0.0, 3.0), (0.0, 0.0, -1.0), seed=1),
        plane_pairs((-1.0, 0.0, 2.0), (1.0, 0.0, 0.0), seed=2),
        plane_pairs((0.0, 0.9, 2.0), (0.0, -1.0, 0.0), seed=3),
    ]
    return CorrespondenceSet.from_pairs(
        np.vstack([c.source_points for c in parts]),
        np.vstack([c.target_points for c in parts]),
        np.vstack([c.target_normals for c in parts]),
    )


def test_rows_layout():
    pairs = CorrespondenceSet.from_pairs([[1.0, 2.0, 3.0]], [[1.0, 2.0, 3.5]], [[0.0, 0.0, 1.0]])
    a, b = linear_rows(pairs)
    np.testing.assert_allclose(a[0], [2.0, -1.0, 0.0, 0.0, 0.0, 1.0])
    np.testing.assert_allclose(b, [0.5])


def test_normal_equations_match_dense_oracle():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        a = rng.normal(size=(int(rng.integers(6, 40)), 6))
        b = rng.normal(size=a.shape[0])
        ne = normal_equations_from_rows(a, b)

        ata = a.T @ a
        atb = a.T @ b
        assert np.abs(ne.ata - ata).max() <= 1e-9 * np.abs(ata).max()
        assert np.abs(ne.atb - atb).max() <= 1e-9 * max(np.abs(atb).max(), 1e-300)
        np.testing.assert_array_equal(ne.ata, ne.ata.T)


@pytest.mark.parametrize("partitions", [2, 8, 64])
def test_partitioned_reduction_agrees(partitions):
    pairs = random_pairs(np.random.default_rng(1), count=5000)
    single = build_normal_equations(pairs, partitions=1)
    split = build_normal_equations(pairs, partitions=partitions)
    np.testing.assert_allclose(split.ata, single.ata, rtol=1e-14, atol=1e-14)
    np.testing.assert_allclose(split.atb, single.atb, rtol=1e-14, atol=1e-14)
    assert split.n == single.n == 5000


def test_forward_constructed_system_recovered():
    rng = np.random.default_rng(2)
    for _ in range(20):
        x_true = rng.normal(scale=0.05, size=6)
        pairs = random_pairs(rng, x_true=x_true)
        x = solve_regularized(build_normal_equations(pairs), Regularizer(0.0))
        np.testing.assert_allclose(x.as_vector(), x_true, atol=1e-8)


@pytest.mark.parametrize("lam", [0.05, 1.0, 5.0])
def test_regularized_normal_equations_satisfied(lam):
    pairs = random_pairs(np.random.default_rng(3))
    ne = build_normal_equations(pairs)
    x = solve_regularized(ne, Regularizer(lam)).as_vector()

    system = ne.ata + 2 * lam * ne.n * np.diag([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
    residual = np.linalg.norm(system @ x - ne.atb)
    assert residual <= 1e-8 * np.linalg.norm(ne.atb)


def test_inverse_n_weight():
    assert Regularizer(5.0).weight(100) == 1000.0
    assert Regularizer(5.0, LambdaMode.INVERSE_N).weight(100) == 10.0
    with pytest.raises(ValueError):
        Regularizer(-1.0)


def test_strong_regularization_pins_rotation():
    rng = np.random.default_rng(4)
    x_true = np.array([0.05, -0.03, 0.02, 0.01, 0.02, -0.01])
    pairs = random_pairs(rng, x_true=x_true)
    x = solve_regularized(build_normal_equations(pairs), Regularizer(1e6))
    assert np.abs(x.rotation_vector).max() < 1e-5


def test_rotation_norm_shrinks_with_lambda():
    rng = np.random.default_rng(5)
    pairs = random_pairs(rng, x_true=rng.normal(scale=0.05, size=6))
    ne = build_normal_equations(pairs)
    norms = [
        np.linalg.norm(solve_regularized(ne, Regularizer(lam)).rotation_vector)
        for lam in [0.0, 0.01, 0.1, 1.0, 10.0]
    ]
    assert all(later <= earlier + 1e-12 for earlier, later in zip(norms, norms[1:]))


def test_residual_matches_linear_system():
    pairs = random_pairs(np.random.default_rng(6))
    x = TwistParams(0.01, -0.02, 0.005, 0.003, -0.001, 0.002)
    residuals, rms = pointwise_residual(pairs, x)
    a, b = linear_rows(pairs)
    np.testing.assert_allclose(residuals, a @ x.as_vector() - b, atol=1e-12)
    assert rms == pytest.approx(np.sqrt(np.mean((a @ x.as_vector() - b) ** 2)))


def test_corner_is_fully_constrained():
    assert system_rank(build_normal_equations(corner_pairs())) == 6


def test_single_plane_rank_three():
    ne = build_normal_equations(plane_pairs((0.0, 0.0, 2.5), (0.0, 0.0, -1.0)))
    assert system_rank(ne) == 3

    with pytest.raises(DegenerateSystem):
        solve_regularized(ne, Regularizer(0.0), require_full_rank=True)

    # without the flag the null space stays at zero
    x = solve_regularized(ne, Regularizer(0.0))
    np.testing.assert_allclose(x.as_vector(), 0.0, atol=1e-12)


def test_empty_and_zero_systems_raise():
    with pytest.raises(DegenerateSystem):
        solve_regularized(NormalEquations(np.zeros((6, 6)), np.zeros(6), 0), Regularizer(0.0))
    with pytest.raises(DegenerateSystem):
        solve_regularized(NormalEquations(np.zeros((6, 6)), np.zeros(6), 10), Regularizer(0.0))
