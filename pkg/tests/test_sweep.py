import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sweptvol.errors import InvalidInputError
from sweptvol.geometry import Ball3, Box3, LocalImplicitRep, Quadric3, RepKind
from sweptvol.motion import PiecewisePoly, RigidMotion, capsule_example
from sweptvol.query import membership
from sweptvol.sweep import (SplitTree, SweepParams, SweptCell, WeightGrid, bounding_box_swept, build_swept_rep,
                            contact_intervals_box, contact_intervals_sphere, depth_limit, merge_intervals,
                            partition_cells, partition_cost, take_snapshots)

SQ2 = math.sqrt(2.0)


def _ball_rep(centre=(0.0, 0.0, 0.0), r=1.0):
    ball = Ball3(centre, r)
    c = np.asarray(centre, dtype=float)
    # sphere quadric |x - c|² - r²
    q = [1, 1, 1, 0, 0, 0, -2 * c[0], -2 * c[1], -2 * c[2], c @ c - r * r]
    from sweptvol.geometry import OrientedPointCloud

    return LocalImplicitRep(RepKind.BALLS, (ball,), (Quadric3(q),), ball.bounding_box(),
                            fallback_cloud=OrientedPointCloud([c + [0, 0, r]], [[0, 0, 1.0]]))


def _sat_overlap(R, v, a_lo, a_hi, b_lo, b_hi):
    """Dense oracle: does the box ``R A + v`` meet the axis-aligned box ``B``? Separating axis test per time."""
    ca, ha = 0.5 * (a_lo + a_hi), 0.5 * (a_hi - a_lo)
    cb, hb = 0.5 * (b_lo + b_hi), 0.5 * (b_hi - b_lo)
    out = np.ones(len(R), dtype=bool)
    for k in range(len(R)):
        axes_a = R[k].T  # rows are the moved box's axes
        axes = list(np.eye(3)) + list(axes_a)
        axes += [np.cross(e, f) for e in np.eye(3) for f in axes_a]
        d = R[k] @ ca + v[k] - cb
        for n in axes:
            ln = np.linalg.norm(n)
            if ln < 1e-12:
                continue
            n = n / ln
            ra = np.sum(ha * np.abs(axes_a @ n))
            rb = np.sum(hb * np.abs(n))
            if abs(d @ n) > ra + rb:
                out[k] = False
                break
    return out


# -- weight grid --------------------------------------------------------------------


def test_weight_grid_constant_and_linear():
    lo, hi = np.zeros(3), np.array([2.0, 1.0, 1.0])
    const = WeightGrid(lo, hi, np.full((3, 3, 3), 2.5))
    box = Box3([0.2, 0.1, 0.3], [1.7, 0.9, 0.6])
    assert const.integral(box) == pytest.approx(2.5 * box.volume)
    x = np.linspace(0, 2, 5)
    lin = WeightGrid(lo, hi, np.broadcast_to(x[:, None, None], (5, 2, 2)).copy())
    # integral of x over the box
    expected = 0.5 * (1.7**2 - 0.2**2) * 0.8 * 0.3
    assert lin.integral(box) == pytest.approx(expected, rel=1e-12)
    assert lin([[1.3, 0.5, 0.5]])[0] == pytest.approx(1.3)


# -- bounding boxes -----------------------------------------------------------------


def test_bound_identity_capsule():
    base, _ = capsule_example()
    box = bounding_box_swept(base, RigidMotion.identity())
    assert box.lo[0] <= -2 - SQ2 and box.hi[0] >= 2 + SQ2


def test_bound_capsule_motion():
    base, motion = capsule_example()
    box = bounding_box_swept(base, motion)
    assert box.lo[1] <= -SQ2 and box.hi[1] >= 16 + SQ2


def test_bound_translating_unit_ball():
    motion = RigidMotion.from_functions((0.0, 1.0), vx=PiecewisePoly.linear(0.0, 1.0, 0.0, 1.0))
    box = bounding_box_swept(_ball_rep(), motion)
    assert box.lo[0] <= -1 and box.hi[0] >= 2
    assert box.lo[0] >= -1 - 1e-9 and box.hi[0] <= 2 + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_bound_contains_sampled_placements(seed):
    rng = np.random.default_rng(seed)
    base, _ = capsule_example()
    motion = RigidMotion.linear(rng.uniform(-3, 3, 3), rng.uniform(-3, 3, 3), rng.uniform(-5, 5, 3),
                                rng.uniform(-5, 5, 3))
    box = bounding_box_swept(base, motion)
    for t in rng.uniform(0, 1, 10):
        for area in base.areas:
            c = motion.apply(t, area.centre)
            assert box.contains_box(Box3(c - area.radius, c + area.radius), tol=1e-9)


# -- contact intervals --------------------------------------------------------------


def test_static_ball_overlapping_box():
    motion = RigidMotion.identity(0.0, 2.0)
    assert contact_intervals_sphere(Ball3([0, 0, 0], 1.0), motion, Box3([0.5, -1, -1], [3, 1, 1])) == [(0.0, 2.0)]


def test_unit_ball_through_unit_cube_chord_times():
    motion = RigidMotion.from_functions((0.0, 10.0), vx=PiecewisePoly.linear(-5.0, 5.0, 0.0, 10.0))
    got = contact_intervals_sphere(Ball3([0, 0, 0], 1.0), motion, Box3([0, 0, 0], [1, 1, 1]))
    # centre x(t) = t - 5 meets the cube's slab grown by the radius at x = -1 and x = 2
    assert len(got) == 1
    assert got[0][0] == pytest.approx(4.0, abs=1e-6)
    assert got[0][1] == pytest.approx(7.0, abs=1e-6)


def test_ball_passing_corner_with_clearance():
    r = 0.5
    motion = RigidMotion.from_functions((0.0, 1.0), vx=PiecewisePoly.linear(-3.0, 3.0, 0.0, 1.0),
                                        vy=PiecewisePoly.constant(1.0 + 0.6 / SQ2, 0.0, 1.0),
                                        vz=PiecewisePoly.constant(1.0 + 0.6 / SQ2, 0.0, 1.0))
    box = Box3([-1, -1, -1], [1, 1, 1])
    ts = np.linspace(0, 1, 100_001)
    centres = np.column_stack([-3 + 6 * ts, np.full_like(ts, 1 + 0.6 / SQ2), np.full_like(ts, 1 + 0.6 / SQ2)])
    gaps = np.linalg.norm(centres - np.clip(centres, box.lo, box.hi), axis=1)
    assert gaps.min() > r
    assert contact_intervals_sphere(Ball3([0, 0, 0], r), motion, box) == []


def test_static_boxes_overlapping():
    motion = RigidMotion.identity(1.0, 3.0)
    assert contact_intervals_box(Box3([0, 0, 0], [1, 1, 1]), motion, Box3([0.5, 0.5, 0.5], [2, 2, 2])) == [(1.0, 3.0)]


def test_rotating_cube_touches_mid_rotation():
    motion = RigidMotion.from_functions((0.0, 1.0), beta=PiecewisePoly.linear(0.0, math.pi / 2, 0.0, 1.0))
    area = Box3([-0.5] * 3, [0.5] * 3)
    cell = Box3([0.62, -0.5, -0.3], [1.6, 0.5, 0.3])
    got = contact_intervals_box(area, motion, cell)
    ts = np.linspace(0, 1, 2001)
    R, v = motion.frames(ts)
    touching = ts[_sat_overlap(R, v, area.lo, area.hi, cell.lo, cell.hi)]
    assert len(touching) and touching.min() > 0.1 and touching.max() < 0.9
    assert len(got) == 1
    t0, t1 = got[0]
    assert t0 <= 0.5 <= t1
    assert t0 <= touching.min() and touching.max() <= t1
    step = ts[1] - ts[0]
    assert touching.min() - t0 <= step + 1e-6 and t1 - touching.max() <= step + 1e-6


def test_far_boxes_under_capsule_motion():
    _, motion = capsule_example()
    got = contact_intervals_box(Box3([-1, -1, -1], [1, 1, 1]), motion, Box3([10, 0, 0], [11, 1, 1]))
    ts = np.linspace(0, 1, 2001)
    R, v = motion.frames(ts)
    assert not _sat_overlap(R, v, np.full(3, -1.0), np.ones(3), np.array([10.0, 0, 0]), np.array([11.0, 1, 1])).any()
    assert got == []


def test_merge_intervals():
    iv = np.array([[0.5, 0.6], [0.0, 0.2], [0.21, 0.3], [0.9, 1.2]])
    np.testing.assert_allclose(merge_intervals(iv, 0.02, 0.0, 1.0), [[0.0, 0.3], [0.5, 0.6], [0.9, 1.0]])


# -- cost -----------------------------------------------------------------------------


def test_cost_single_empty_cell():
    cell = SweptCell.from_entries(Box3([0, 0, 0], [1, 1, 1]), [])
    assert partition_cost([cell]) == 0.0


def test_cost_two_unit_cells():
    cells = [SweptCell.from_entries(Box3([k, 0, 0], [k + 1, 1, 1]), [(0, (0.0, 1.0))]) for k in range(2)]
    assert partition_cost(cells) == pytest.approx(math.log(2) + 1)


def test_constant_weight_leaves_cost_unchanged():
    cells = [SweptCell.from_entries(Box3([k, 0, 0], [k + 1, 2, 1]), [(0, (0.0, 0.5 * (k + 1)))]) for k in range(3)]
    w = WeightGrid([0, 0, 0], [3, 2, 1], np.full((2, 2, 2), 7.0))
    assert partition_cost(cells, w) == pytest.approx(partition_cost(cells))


def test_cost_needs_cells():
    with pytest.raises(InvalidInputError):
        partition_cost([])


# -- partition ----------------------------------------------------------------------


def test_static_one_ball_cost_decreases():
    motion = RigidMotion.identity()
    result = partition_cells(_ball_rep(), motion)
    assert np.all(np.diff(result.cost_history) < 0)


def test_capsule_partition_snapshot_lists_recheck(capsule):
    base, motion = capsule
    params = SweepParams(time_samples=64)
    result = partition_cells(base, motion, params)
    snap = take_snapshots(base, motion, 64)
    for box, idx in zip(result.boxes, result.snapshot_lists):
        assert len(idx) <= snap.count
        hit = np.flatnonzero(np.all((snap.lo <= box.hi) & (snap.hi >= box.lo), axis=1))
        assert set(hit.tolist()) == set(np.asarray(idx).tolist())


def test_bound_inside_base_gives_single_cell():
    # every snapshot covers the whole bound, so halving a cell keeps S and only log M can change;
    # with S = Vol * tau = 0.008 a split would cost log 2 + 0.004 > 0.008
    result = partition_cells(_ball_rep(r=5.0), RigidMotion.identity(), bound=Box3([-0.1] * 3, [0.1] * 3))
    assert len(result.boxes) == 1
    assert result.cost_history == [pytest.approx(0.008)]


def test_bound_inside_base_large_volume_still_splits():
    # same situation with S = 8: the cost log M + 8/M keeps falling while 8/M > M log(1 + 1/M)
    result = partition_cells(_ball_rep(r=5.0), RigidMotion.identity(), bound=Box3([-1] * 3, [1] * 3))
    M = len(result.boxes)
    assert result.cost_history[0] == pytest.approx(8.0)
    assert result.cost_history[-1] == pytest.approx(math.log(M) + 8.0 / M)
    assert math.log(M + 1) + 8.0 / (M + 1) >= math.log(M) + 8.0 / M


def test_leaves_tile_the_bound(capsule_swept):
    rep = capsule_swept
    vol = sum(c.box.volume for c in rep.cells)
    assert vol == pytest.approx(rep.bound.volume, rel=1e-9)
    X = np.random.default_rng(0).uniform(rep.bound.lo, rep.bound.hi, (5000, 3))
    cells, _ = rep.tree.locate(X)
    lo = np.array([rep.cells[c].box.lo for c in cells])
    hi = np.array([rep.cells[c].box.hi for c in cells])
    assert np.all((lo <= X) & (X <= hi))


def test_depth_limit_respected(capsule_swept):
    rep = capsule_swept
    assert rep.tree.depth <= math.ceil(math.log2(len(rep.cells)))
    assert depth_limit(1) == 0 and depth_limit(2) == 1 and depth_limit(3) == 1 and depth_limit(4) == 2


def test_single_tree_locates_everything():
    tree = SplitTree.single()
    cells, visits = tree.locate(np.random.default_rng(1).normal(size=(10, 3)))
    assert np.all(cells == 0) and np.all(visits == 1)


def test_max_cells_cap(capsule):
    base, motion = capsule
    result = partition_cells(base, motion, SweepParams(max_cells=8))
    assert len(result.boxes) <= 8


def test_weighted_partition_runs(capsule):
    base, motion = capsule
    bound = bounding_box_swept(base, motion)
    values = np.ones((4, 4, 4))
    values[:, 2:, :] = 10.0  # emphasise the far half of the path
    w = WeightGrid(bound.lo, bound.hi, values)
    result = partition_cells(base, motion, SweepParams(weight=w))
    assert np.all(np.diff(result.cost_history) <= 0)


def test_seeded_splits(capsule):
    base, motion = capsule
    result = partition_cells(base, motion, SweepParams(seed_splits_along_path=True, time_samples=32))
    assert result.seeded_splits > 0


# -- build ----------------------------------------------------------------------------


def test_identity_motion_full_intervals(capsule):
    base, _ = capsule
    rep = build_swept_rep(base, RigidMotion.identity(0.0, 2.0))
    assert any(len(c) for c in rep.cells)
    for c in rep.cells:
        for _, (t0, t1) in c.entries:
            assert (t0, t1) == (0.0, 2.0)


def test_degenerate_domain_is_static(capsule):
    base, _ = capsule
    motion = RigidMotion.constant((0.0, 0.4, 0.0), (1.0, 2.0, 3.0), 0.5, 0.5)
    rep = build_swept_rep(base, motion)
    assert len(rep.info["notes"]) == 1
    X = np.random.default_rng(2).uniform(rep.bound.lo, rep.bound.hi, (500, 3))
    np.testing.assert_array_equal(membership(rep, X).inside, base.contains(motion.inverse_apply(0.5, X)))


def test_fast_mode_build_contains_exact(capsule):
    base, motion = capsule
    exact = build_swept_rep(base, motion)
    fast = build_swept_rep(base, motion, SweepParams(fast_mode=True))
    assert len(exact.cells) == len(fast.cells)
    for ce, cf in zip(exact.cells, fast.cells):
        for i, (t0, t1) in ce.entries:
            assert any(j == i and s0 <= t0 and t1 <= s1 for j, (s0, s1) in cf.entries)


def test_build_rejects_wrong_types():
    with pytest.raises(InvalidInputError):
        build_swept_rep("not a rep", RigidMotion.identity())


def test_box_base_sweep(rng):
    base = LocalImplicitRep.solid_box(Box3([-0.5, -0.5, -0.5], [0.5, 0.5, 0.5]))
    motion = RigidMotion.linear((0, 0, 0), (0, 0, math.pi / 2), (0, 0, 0), (3, 0, 0))
    rep = build_swept_rep(base, motion)
    ts = rng.uniform(0, 1, 2000)
    local = rng.uniform(-0.5, 0.5, (2000, 3))
    R, v = motion.frames(ts)
    Q = np.einsum("nij,nj->ni", R, local) + v
    cells, _ = rep.tree.locate(Q)
    for c, t in zip(cells, ts):
        cell = rep.cells[c]
        assert np.any((cell.intervals[:, 0] <= t) & (t <= cell.intervals[:, 1]))
