import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sweptvol.errors import InvalidInputError
from sweptvol.geometry import Ball3, BivariatePatch, Box3, LocalImplicitRep, OrientedPointCloud, RepKind
from sweptvol.slim import (SlimParams, blended_eval, blended_field, bump_weight, compute_lambda, cover_with_balls,
                           level_patches, rankings, slim_build, slim_fit, slim_ray_intersect)
from sweptvol.synthetic import noisy_plane_cloud, paraboloid_cloud, sphere_cloud


def _plane_patch(origin, z=0.0):
    return BivariatePatch(origin, [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, 0, 0, 0, z - origin[2]])


def _balls_rep(balls, patches, cloud=None):
    lo = np.min([b.centre - b.radius for b in balls], axis=0)
    hi = np.max([b.centre + b.radius for b in balls], axis=0)
    if cloud is None:
        cloud = OrientedPointCloud([[0.0, 0.0, 0.0]], [[0.0, 0.0, 1.0]])
    return LocalImplicitRep(RepKind.BALLS, tuple(balls), tuple(patches), Box3(lo, hi), fallback_cloud=cloud)


# -- weights and covers -------------------------------------------------------------


@given(st.floats(0.0, 0.999), st.floats(0.1, 10.0))
def test_bump_weight_positive_inside(x, R):
    assert bump_weight(x * R, R) > 0


def test_bump_weight_vanishes_outside():
    assert bump_weight(1.0, 1.0) == 0.0
    assert bump_weight(2.0, 1.0) == 0.0
    assert bump_weight(0.0, 1.0) == pytest.approx(math.exp(-1.0))


def test_cover_single_point():
    assert len(cover_with_balls([[1.0, 2.0, 3.0]], 0.5)) == 1


def test_cover_far_points_need_two_balls():
    assert len(cover_with_balls([[0.0, 0, 0], [3.0, 0, 0]], 1.0)) == 2


@settings(max_examples=25)
@given(st.integers(0, 1000), st.floats(0.05, 1.0))
def test_cover_covers_everything(seed, radius):
    P = np.random.default_rng(seed).uniform(-1, 1, (200, 3))
    centres = cover_with_balls(P, radius, seed)
    D = np.linalg.norm(P[:, None] - P[centres][None], axis=2)
    assert np.all(D.min(axis=1) <= radius)


# -- lambda -------------------------------------------------------------------------


def test_lambda_coplanar_is_zero():
    P = np.column_stack([np.random.default_rng(0).uniform(-1, 1, (300, 2)), np.zeros(300)])
    assert abs(compute_lambda(P)) <= 1e-12


def test_lambda_colinear_is_zero():
    t = np.random.default_rng(1).uniform(-1, 1, 100)
    P = np.column_stack([t, 2 * t, -t])
    assert abs(compute_lambda(P)) <= 1e-12


def test_lambda_tracks_normal_noise():
    sigma = 0.001
    lam = compute_lambda(noisy_plane_cloud(10_000, sigma, seed=0))
    assert abs(lam - sigma**2) <= 0.3 * sigma**2


def test_lambda_needs_eleven_points():
    with pytest.raises(InvalidInputError):
        compute_lambda(np.zeros((10, 3)))


# -- fits and rankings --------------------------------------------------------------


def test_slim_fit_plane():
    rng = np.random.default_rng(2)
    P = np.column_stack([rng.uniform(-0.5, 0.5, (40, 2)), np.zeros(40)])
    ball = Ball3([0, 0, 0], 0.6)
    patch = slim_fit(ball, P, np.tile([0.0, 0, 1], (40, 1)))
    r = np.linalg.norm(P, axis=1)
    assert np.sum(bump_weight(r, 0.6) * patch.evaluate(P) ** 2) < 1e-12
    X = rng.uniform(-0.5, 0.5, (20, 3))
    np.testing.assert_allclose(patch.evaluate(X), X[:, 2], atol=1e-12)


def test_slim_fit_paraboloid():
    cloud = paraboloid_cloud(200, c20=0.8, c02=-0.4, seed=3)
    patch = slim_fit(Ball3([0, 0, 0], 1.0), cloud.points, cloud.normals)
    X = np.random.default_rng(4).uniform(-0.5, 0.5, (100, 3))
    expected = X[:, 2] - (0.8 * X[:, 0] ** 2 - 0.4 * X[:, 1] ** 2)
    # the fitted frame follows the mean normal, which tilts slightly off z for a non-symmetric sample
    normal = patch.n
    assert abs(normal[2]) > 0.99
    np.testing.assert_allclose(np.sign(patch.evaluate(X[np.abs(expected) > 0.05])),
                               np.sign(expected[np.abs(expected) > 0.05]))


def test_slim_fit_axis_aligned_paraboloid_coefficients():
    # a sample symmetric in u and v keeps the mean normal on the axis, so the coefficients are exact
    g = np.linspace(-0.4, 0.4, 9)
    U, V = np.meshgrid(g, g)
    u, v = U.ravel(), V.ravel()
    P = np.column_stack([u, v, 0.8 * u * u - 0.4 * v * v])
    N = np.column_stack([-1.6 * u, 0.8 * v, np.ones_like(u)])
    N /= np.linalg.norm(N, axis=1, keepdims=True)
    patch = slim_fit(Ball3([0, 0, 0], 1.0), P, N)
    X = np.random.default_rng(5).uniform(-0.5, 0.5, (100, 3))
    np.testing.assert_allclose(patch.evaluate(X), X[:, 2] - (0.8 * X[:, 0] ** 2 - 0.4 * X[:, 1] ** 2), atol=1e-6)
    c20, _, c02, *_ = patch.coeffs
    assert c20 + c02 == pytest.approx(0.4, abs=1e-6)


def test_slim_fit_errors():
    with pytest.raises(InvalidInputError):
        slim_fit(Ball3([0, 0, 0], 1.0), np.zeros((5, 3)), np.tile([0.0, 0, 1], (5, 1)))
    P = np.random.default_rng(6).uniform(-0.3, 0.3, (10, 3))
    N = np.tile([0.0, 0, 1], (10, 1))
    N[::2] *= -1
    with pytest.raises(InvalidInputError):
        slim_fit(Ball3([0, 0, 0], 1.0), P, N)


def test_rankings_interpolating_patch():
    P = np.column_stack([np.random.default_rng(7).uniform(-0.3, 0.3, (30, 2)), np.zeros(30)])
    ball = Ball3([0, 0, 0], 0.5)
    eps, E = rankings(ball, _plane_patch(np.zeros(3)), P, 0.5, lam=0.3, t_mdl=0.02)
    assert eps == 0.0
    assert E == pytest.approx(0.3 * (0.02 / 0.5) ** 2)


def test_rankings_large_radius_limit():
    P = np.random.default_rng(8).normal(size=(30, 3))
    ball = Ball3([0, 0, 0], 1.0)
    eps, E = rankings(ball, _plane_patch(np.zeros(3)), P, 1e9, lam=0.3, t_mdl=0.02)
    assert E - eps <= 1e-20


def test_rankings_direct_sum(rng):
    P = rng.normal(size=(50, 3))
    patch = BivariatePatch.from_normal([0.1, 0, 0], [0.2, 0.3, 1.0], rng.normal(size=6))
    ball = Ball3([0.1, 0, 0], 1.0)
    rho, lam, t = 0.9, 0.05, 0.1
    eps, E = rankings(ball, patch, P, rho, lam, t)
    total = 0.0
    for p in P:
        if np.linalg.norm(p - ball.centre) <= rho:
            total += float(patch.evaluate(p)) ** 2
    assert eps == pytest.approx(total, rel=1e-12, abs=1e-12)
    assert E == pytest.approx(total + lam * (t / rho) ** 2, rel=1e-12)


# -- full builds --------------------------------------------------------------------


def test_empty_cloud_rejected():
    with pytest.raises(InvalidInputError):
        slim_build(None)


def test_single_point_forced_acceptance():
    rep = slim_build(OrientedPointCloud([[1.0, 2.0, 3.0]], [[0.0, 0.0, 1.0]]))
    assert len(rep.areas) == 1
    assert rep.info["acceptances"][0]["forced"] == "under-resolved"


@pytest.fixture(scope="module")
def sphere_slim():
    return slim_build(sphere_cloud(2000, seed=1), SlimParams(levels_kept=True))


def test_sphere_build_covers_and_is_signed(sphere_slim):
    rep = sphere_slim
    assert len(rep.uncovered(rep.fallback_cloud.points)) == 0
    v, covered = blended_field(rep, [[0, 0, 0.9], [0, 0, 1.1]])
    assert covered.all() and v[0] < 0 < v[1]


def test_levels_are_stored(sphere_slim):
    rep = sphere_slim
    assert len(rep.levels) == rep.info["levels_run"]
    assert all(isinstance(b, Ball3) for b, _ in level_patches(rep, 1))
    with pytest.raises(InvalidInputError):
        level_patches(rep, len(rep.levels) + 1)


def test_same_seed_same_build():
    cloud = sphere_cloud(800, seed=4)
    a, b = slim_build(cloud), slim_build(cloud)
    assert [x.centre.tolist() for x in a.areas] == [x.centre.tolist() for x in b.areas]


# -- blended evaluation -------------------------------------------------------------


def test_blend_single_ball_is_patch_value():
    patch = BivariatePatch.from_normal([0, 0, 0], [0, 0, 1], [0.3, 0, 0.1, 0, 0, 0.05])
    rep = _balls_rep([Ball3([0, 0, 0], 1.0)], [patch])
    q = np.array([0.2, -0.1, 0.4])
    assert blended_eval(rep, q)[0] == pytest.approx(float(patch.evaluate(q)), abs=1e-15)


def test_blend_fallback_outside_all_balls():
    cloud = OrientedPointCloud([[5.0, 0, 0]], [[1.0, 0, 0]])
    rep = _balls_rep([Ball3([0, 0, 0], 1.0)], [_plane_patch(np.zeros(3))], cloud)
    assert blended_eval(rep, [6.0, 0, 0]) == (pytest.approx(1.0), False)


def test_blend_three_balls_direct_formula(rng):
    balls = [Ball3(c, 1.0) for c in ([0, 0, 0], [0.5, 0, 0], [0, 0.5, 0])]
    patches = [BivariatePatch.from_normal(b.centre, rng.normal(size=3), rng.normal(size=6) * 0.2) for b in balls]
    rep = _balls_rep(balls, patches)
    q = np.array([0.2, 0.2, 0.1])
    w = [math.exp(-1.0 / (1.0 - (np.linalg.norm(q - b.centre) / b.radius) ** 2)) for b in balls]
    f = [float(p.evaluate(q)) for p in patches]
    expected = sum(wi * fi for wi, fi in zip(w, f)) / sum(w)
    assert blended_eval(rep, q)[0] == pytest.approx(expected, abs=1e-12)


def test_ray_hits_single_plane():
    rep = _balls_rep([Ball3([0, 0, 0], 1.0)], [_plane_patch(np.zeros(3), z=0.25)])
    hit = slim_ray_intersect(rep, [0.1, 0.2, 3.0], [0, 0, -1.0])
    np.testing.assert_allclose(hit, [0.1, 0.2, 0.25], atol=1e-12)


def test_ray_missing_all_balls():
    rep = _balls_rep([Ball3([0, 0, 0], 1.0)], [_plane_patch(np.zeros(3))])
    assert slim_ray_intersect(rep, [5.0, 5.0, 5.0], [1.0, 0, 0]) is None


def test_ray_two_coplanar_patches():
    balls = [Ball3([-0.3, 0, 0], 1.0), Ball3([0.3, 0, 0], 1.0)]
    rep = _balls_rep(balls, [_plane_patch(b.centre, z=0.1) for b in balls])
    hit = slim_ray_intersect(rep, [0.05, 0.0, 2.0], np.array([0.1, 0.0, -1.0]) / math.hypot(0.1, 1.0))
    assert hit[2] == pytest.approx(0.1, abs=1e-9)
