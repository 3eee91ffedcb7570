"""Queries on a swept volume: membership, time witnesses, rays and subtraction.

A point ``P`` lies in the swept solid iff for some entry ``(i, [t0, t1])`` of
its cell and some ``t`` in that interval, ``Q(t) = T(t)^-1 P`` lies in area
``A_i`` with ``F_i(Q(t)) <= 0``.  The search over ``t`` is a branch and bound:
a time segment is discarded once a Lipschitz bound proves that ``Q`` stays
out of ``A_i`` or that ``F_i`` stays positive along it, so deep contacts are
never skipped no matter how short they are.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidInputError
from .geometry import BivariatePatch, Box3, LocalImplicitRep, MinOfPatches, Quadric3, RepKind
from .solvers import SolverConfig, bisect_root, minimize_1d_batch
from .sweep import SweptVolumeRep, merge_intervals

Array = np.ndarray

CHUNK_POINTS = 2048
MAX_SPLITS_PER_ROW = 4096
EARLY_EXIT_FACTOR = 10.0


# ---------------------------------------------------------------------------
# result types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MembershipResult:
    """Verdict for one point.

    ``signed_distance`` is the smallest gated base value found over time; it
    is a true signed distance only when the base procedures are. ``exact`` is
    False when the value is a bound (early exit, far point, empty cell).
    """

    inside: bool
    signed_distance: float
    witness: tuple[int, float] | None = None
    far: bool = False
    exact: bool = True


@dataclass(frozen=True, eq=False)
class MembershipBatch:
    inside: Array
    signed_distance: Array
    witness_area: Array
    witness_time: Array
    far: Array
    exact: Array

    def __len__(self) -> int:
        return len(self.inside)

    def __getitem__(self, k: int) -> MembershipResult:
        w = None if self.witness_area[k] < 0 else (int(self.witness_area[k]), float(self.witness_time[k]))
        return MembershipResult(bool(self.inside[k]), float(self.signed_distance[k]), w, bool(self.far[k]),
                                bool(self.exact[k]))


@dataclass(frozen=True, eq=False)
class Ray:
    origin: Array
    direction: Array

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=float).reshape(3)
        d = np.asarray(self.direction, dtype=float).reshape(3)
        if not (np.all(np.isfinite(o)) and np.all(np.isfinite(d))):
            raise InvalidInputError("ray origin and direction must be finite")
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise InvalidInputError("ray direction must be a unit vector")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)

    @classmethod
    def toward(cls, origin, direction) -> "Ray":
        d = np.asarray(direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if not n > 0:
            raise InvalidInputError("ray direction must be nonzero")
        return cls(origin, d / n)

    def at(self, s):
        s = np.asarray(s, dtype=float)
        return self.origin + s[..., None] * self.direction


@dataclass(frozen=True, eq=False)
class RayHits:
    points: Array
    s: Array
    grazing: Array

    def __len__(self) -> int:
        return len(self.s)


# ---------------------------------------------------------------------------
# gated base values along the inverse trajectory of a point
# ---------------------------------------------------------------------------


def _procedure_pieces(proc):
    if isinstance(proc, MinOfPatches):
        return proc.patches
    return (proc,)


def _hessian_norm(piece) -> float:
    if isinstance(piece, Quadric3):
        A, _, _ = piece.matrix_form()
        return float(np.linalg.norm(2 * A, 2))
    c20, c11, c02 = piece.coeffs[:3]
    return float(np.linalg.norm(np.array([[2 * c20, c11], [c11, 2 * c02]]), 2))


class TimeField:
    """``g(t) = gated F_i(T(t)^-1 P)`` for many ``(P, i, t)`` triples plus the bounds used to prune."""

    def __init__(self, rep: SweptVolumeRep):
        self.rep = rep
        base, motion = rep.base, rep.motion
        self.base = base
        self.motion = motion
        self.centres, self.radii = base.area_spheres
        a, b = motion.domain
        lin = np.array([p.derivative().abs_bound(a, b) for p in (motion.vx, motion.vy, motion.vz)])
        self.lin = float(np.linalg.norm(lin))
        self.ang = float(sum(p.derivative().abs_bound(a, b) for p in (motion.alpha, motion.beta, motion.gamma)))
        G = np.empty(len(base))
        H = np.empty(len(base))
        for i, proc in enumerate(base.procedures):
            pieces = _procedure_pieces(proc)
            G[i] = max(float(np.linalg.norm(p.gradient(self.centres[i]))) for p in pieces)
            H[i] = max(_hessian_norm(p) for p in pieces)
        self.grad_centre = G
        self.hessian = H

    def inverse_points(self, P: Array, ts: Array) -> Array:
        R, v = self.motion.frames(ts)
        return np.einsum("nji,nj->ni", R, P - v)

    def evaluate(self, P: Array, area: Array, ts: Array):
        """Per triple: ``(g, hit, F, dist, depth, Q)``.

        ``dist`` and ``depth`` are the distance to the area and the depth
        inside it; both are 1-Lipschitz.
        """
        Q = self.inverse_points(P, ts)
        base = self.base
        F = base.table.evaluate_pairs(area, Q)
        lo, hi = base._area_arrays
        if base.kind is RepKind.BALLS:
            r = np.linalg.norm(Q - lo[area], axis=1)
            dist = np.maximum(r - hi[area], 0.0)
            depth = np.maximum(hi[area] - r, 0.0)
            inside = r <= hi[area]
        else:
            gap = np.maximum(lo[area] - Q, Q - hi[area])
            dist = np.linalg.norm(np.maximum(gap, 0.0), axis=1)
            depth = np.maximum(-gap.max(axis=1), 0.0)
            inside = np.all(gap <= 0, axis=1)
        g = np.where(inside, F, np.maximum(F, 0.0) + dist)
        hit = inside & (F <= 0)
        return g, hit, F, dist, depth, Q

    def speed(self, Qa: Array, Qb: Array, h: Array) -> Array:
        """Bound on ``|dQ/dt|`` over a segment of length ``h`` starting at ``Qa`` or ``Qb``."""
        r = np.minimum(np.linalg.norm(Qa, axis=1), np.linalg.norm(Qb, axis=1))
        return self.lin + self.ang * (r + self.lin * h)

    def value_lipschitz(self, area: Array, Qa: Array, Qb: Array, reach: Array) -> Array:
        """Bound on ``|grad F_i|`` within ``reach`` of the segment ends."""
        c = self.centres[area]
        r = np.minimum(np.linalg.norm(Qa - c, axis=1), np.linalg.norm(Qb - c, axis=1))
        return self.grad_centre[area] + self.hessian[area] * (r + reach)


@dataclass
class _SearchOutput:
    best_g: Array
    best_t: Array
    hit_rows: Array
    point_hit: Array
    point_deep: Array
    in_segments: list | None = None


def _search(tf: TimeField, P: Array, row_pt: Array, row_area: Array, t0: Array, t1: Array,
            cfg: SolverConfig, tol: float, *, mode: str, deep_margin: float) -> _SearchOutput:
    """Branch and bound over time for each row ``(point, area, [t0, t1])``.

    ``mode="verdict"`` drops every row of a point once one of them shows
    ``g <= -deep_margin``; ``mode="set"`` also certifies whole segments inside
    and returns the time set where ``g <= 0`` (to ``tol``).
    """
    n_rows = len(row_pt)
    n_pts = len(P)
    best_g = np.full(n_rows, np.inf)
    best_t = np.where(n_rows > 0, t0, 0.0) if n_rows else np.empty(0)
    hit_rows = np.zeros(n_rows, dtype=bool)
    point_hit = np.zeros(n_pts, dtype=bool)
    point_deep = np.zeros(n_pts, dtype=bool)
    in_rows, in_a, in_b = [], [], []
    if n_rows == 0:
        return _SearchOutput(best_g, best_t, hit_rows, point_hit, point_deep, [] if mode == "set" else None)

    span = t1 - t0
    n0 = np.where(span > 0, np.maximum(1, np.ceil(span * cfg.time_samples_per_unit)), 1).astype(int)
    rows = np.repeat(np.arange(n_rows), n0)
    starts = np.concatenate([[0], np.cumsum(n0)[:-1]])
    k = np.arange(len(rows)) - starts[rows]
    ta = t0[rows] + span[rows] * (k / n0[rows])
    tb = np.where(k + 1 == n0[rows], t1[rows], t0[rows] + span[rows] * ((k + 1) / n0[rows]))

    def ev(rr, ts):
        g, hit, F, dist, depth, Q = tf.evaluate(P[row_pt[rr]], row_area[rr], ts)
        np.minimum.at(best_g, rr, g)
        sel = g == best_g[rr]
        best_t[rr[sel]] = ts[sel]
        hit_rows[rr[hit]] = True
        point_hit[row_pt[rr[hit]]] = True
        deep = hit & (g <= -deep_margin)
        point_deep[row_pt[rr[deep]]] = True
        return g, hit, F, dist, depth, Q

    Ea = ev(rows, ta)
    Eb = ev(rows, tb)
    splits = np.zeros(n_rows, dtype=int)
    while len(rows):
        ga, hita, Fa, da, depa, Qa = Ea
        gb, hitb, Fb, db, depb, Qb = Eb
        h = tb - ta
        L = tf.speed(Qa, Qb, h)
        reach = L * h
        LF = tf.value_lipschitz(row_area[rows], Qa, Qb, reach) * L
        out = (da + db > reach) | ((Fa > 0) & (Fb > 0) & (Fa + Fb > LF * h))
        alive = ~out
        if mode == "verdict":
            alive &= ~point_deep[row_pt[rows]]
        done = alive & ((h <= tol) | (splits[rows] >= MAX_SPLITS_PER_ROW))
        if mode == "set":
            all_in = alive & (depa + depb > reach) & (Fa < 0) & (Fb < 0) & (-(Fa + Fb) > LF * h)
            take = all_in | (done & (hita | hitb))
            in_rows.append(rows[take])
            in_a.append(ta[take])
            in_b.append(tb[take])
            alive &= ~all_in
        alive &= ~done
        if not np.any(alive):
            break
        idx = np.flatnonzero(alive)
        rows, ta, tb = rows[idx], ta[idx], tb[idx]
        Ea = tuple(x[idx] for x in Ea)
        Eb = tuple(x[idx] for x in Eb)
        np.add.at(splits, rows, 1)
        tm = 0.5 * (ta + tb)
        Em = ev(rows, tm)
        rows = np.concatenate([rows, rows])
        ta, tb = np.concatenate([ta, tm]), np.concatenate([tm, tb])
        Ea, Eb = (tuple(np.concatenate([x, y]) for x, y in zip(Ea, Em)),
                  tuple(np.concatenate([x, y]) for x, y in zip(Em, Eb)))
    segs = None
    if mode == "set":
        segs = (np.concatenate(in_rows), np.concatenate(in_a), np.concatenate(in_b))
    return _SearchOutput(best_g, best_t, hit_rows, point_hit, point_deep, segs)


# ---------------------------------------------------------------------------
# membership
# ---------------------------------------------------------------------------


class _CellEntries:
    """All cell entries flattened, with per-cell offsets."""

    def __init__(self, rep: SweptVolumeRep):
        counts = np.array([len(c) for c in rep.cells])
        self.offsets = np.concatenate([[0], np.cumsum(counts)])
        self.area = np.concatenate([c.areas for c in rep.cells]).astype(int) if counts.sum() else np.empty(0, int)
        iv = [c.intervals for c in rep.cells]
        self.intervals = np.concatenate(iv) if counts.sum() else np.empty((0, 2))

    def rows_for(self, cells: Array) -> tuple[Array, Array]:
        """``(point_index, entry_index)`` for points lying in ``cells``."""
        start, stop = self.offsets[cells], self.offsets[cells + 1]
        counts = stop - start
        pt = np.repeat(np.arange(len(cells)), counts)
        first = np.repeat(start - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
        entry = np.arange(len(pt)) + first
        return pt, entry


def _query_state(rep: SweptVolumeRep):
    state = rep.__dict__.get("_query_state")
    if state is None:
        state = (TimeField(rep), _CellEntries(rep))
        object.__setattr__(rep, "_query_state", state)
    return state


def _cell_boundary_distance(rep: SweptVolumeRep, cells: Array, X: Array) -> Array:
    lo = np.array([rep.cells[c].box.lo for c in cells]).reshape(-1, 3)
    hi = np.array([rep.cells[c].box.hi for c in cells]).reshape(-1, 3)
    return np.minimum(X - lo, hi - X).min(axis=1) if len(X) else np.empty(0)


def _membership_in_cells(rep: SweptVolumeRep, X: Array, cells: Array, cfg: SolverConfig, refine: bool,
                         restrict: Array | None = None) -> MembershipBatch:
    tf, entries = _query_state(rep)
    n = len(X)
    pt, entry = entries.rows_for(cells)
    if restrict is not None:
        keep = np.isin(entries.area[entry], restrict)
        pt, entry = pt[keep], entry[keep]
    area = entries.area[entry]
    t0, t1 = entries.intervals[entry, 0], entries.intervals[entry, 1]
    tol = rep.params.contact_tol
    deep = EARLY_EXIT_FACTOR * cfg.eps_value if refine else 0.0
    res = _search(tf, X, pt, area, t0, t1, cfg, tol, mode="verdict", deep_margin=deep)
    d = np.full(n, np.inf)
    np.minimum.at(d, pt, res.best_g)
    w_area = np.full(n, -1)
    w_time = np.zeros(n)
    best_row = np.full(n, -1)
    if len(pt):
        order = np.lexsort((res.best_g, pt))
        first = order[np.r_[True, np.diff(pt[order]) != 0]]
        has = pt[first]
        best_row[has] = first
        w_area[has] = area[first]
        w_time[has] = res.best_t[first]
    inside = res.point_hit.copy()
    exact = ~res.point_deep & (best_row >= 0)
    if refine:
        todo = np.flatnonzero(exact)
        if len(todo):
            r = best_row[todo]
            span = t1[r] - t0[r]
            n0 = np.maximum(1, np.ceil(span * cfg.time_samples_per_unit))
            delta = np.where(span > 0, span / n0, 0.0)
            lo_t = np.maximum(t0[r], res.best_t[r] - delta)
            hi_t = np.minimum(t1[r], res.best_t[r] + delta)
            Pr, Ar = X[pt[r]], area[r]

            def F(ts, rows):
                return tf.evaluate(Pr[rows], Ar[rows], ts)[0]

            tb_, gb_ = minimize_1d_batch(F, lo_t, hi_t, cfg)
            better = gb_ < d[todo]
            d[todo[better]] = gb_[better]
            w_time[todo[better]] = tb_[better]
            inside[todo[better & (gb_ <= 0)]] = True
    empty = best_row < 0
    if np.any(empty):
        d[empty] = np.maximum(_cell_boundary_distance(rep, cells[empty], X[empty]), 0.0)
        exact[empty] = False
    # the sign of the reported value always matches the verdict
    d = np.where(inside, np.minimum(d, 0.0), np.where(d > 0, d, np.nextafter(0.0, 1.0)))
    return MembershipBatch(inside, d, w_area, w_time, np.zeros(n, dtype=bool), exact)


def membership(rep: SweptVolumeRep, X, cfg: SolverConfig | None = None, *, refine: bool = True) -> MembershipBatch:
    """Batch point membership; see :class:`MembershipResult`."""
    if not isinstance(rep, SweptVolumeRep):
        raise InvalidInputError("membership needs a SweptVolumeRep")
    cfg = rep.params.solver if cfg is None else cfg
    X = np.asarray(X, dtype=float).reshape(-1, 3)
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("query points must be finite")
    n = len(X)
    inside = np.zeros(n, dtype=bool)
    d = np.empty(n)
    w_area = np.full(n, -1)
    w_time = np.zeros(n)
    far = ~rep.bound.contains(X)
    exact = np.zeros(n, dtype=bool)
    if np.any(far):
        d[far] = rep.bound.distance(X[far])
    near = np.flatnonzero(~far)
    for s in range(0, len(near), CHUNK_POINTS):
        idx = near[s:s + CHUNK_POINTS]
        cells, _ = rep.tree.locate(X[idx])
        b = _membership_in_cells(rep, X[idx], cells, cfg, refine)
        inside[idx], d[idx], w_area[idx], w_time[idx], exact[idx] = (b.inside, b.signed_distance, b.witness_area,
                                                                   b.witness_time, b.exact)
    return MembershipBatch(inside, d, w_area, w_time, far, exact)


def point_membership(rep: SweptVolumeRep, P, cfg: SolverConfig | None = None) -> MembershipResult:
    P = np.asarray(P, dtype=float).reshape(3)
    return membership(rep, P[None], cfg)[0]


def contains(rep: SweptVolumeRep, X) -> Array:
    """Verdicts only; skips the distance refinement."""
    return membership(rep, X, refine=False).inside


# ---------------------------------------------------------------------------
# time witnesses
# ---------------------------------------------------------------------------


def time_witnesses(rep: SweptVolumeRep, P, cfg: SolverConfig | None = None) -> list[tuple[float, float]]:
    """Maximal time intervals (to ``contact_tol``) during which ``P`` lies in the moved base."""
    cfg = rep.params.solver if cfg is None else cfg
    P = np.asarray(P, dtype=float).reshape(1, 3)
    if not rep.bound.contains(P)[0]:
        return []
    tf, entries = _query_state(rep)
    cells, _ = rep.tree.locate(P)
    pt, entry = entries.rows_for(cells)
    if len(pt) == 0:
        return []
    area = entries.area[entry]
    t0, t1 = entries.intervals[entry, 0], entries.intervals[entry, 1]
    tol = rep.params.contact_tol
    res = _search(tf, P, pt, area, t0, t1, cfg, tol, mode="set", deep_margin=np.inf)
    _, ta, tb = res.in_segments
    if len(ta) == 0:
        return []
    a, b = rep.motion.domain
    merged = merge_intervals(np.column_stack([ta, tb]), 2 * tol, a, b)
    return [(float(x), float(y)) for x, y in merged]


# ---------------------------------------------------------------------------
# rays
# ---------------------------------------------------------------------------


def _signed_along(rep: SweptVolumeRep, ray: Ray, cell: int, s: Array, cfg: SolverConfig) -> Array:
    """Signed membership values of ray points, all evaluated against one cell's entries."""
    X = ray.at(np.atleast_1d(s))
    cells = np.full(len(X), cell)
    return _membership_in_cells(rep, X, cells, cfg, refine=False).signed_distance


def _refine_crossing(rep, ray, cell, s0, s1, cfg) -> float:
    """Boundary crossing between ``s0`` and ``s1`` whose verdicts differ."""
    f = lambda s: float(_signed_along(rep, ray, cell, np.array([s]), cfg)[0])  # noqa: E731
    eps = max(cfg.eps_root, 1e-12 * max(1.0, abs(s1)))
    try:
        return bisect_root(f, s0, s1, cfg, eps_root=eps, eps_value=0.0)
    except Exception:  # the bracket may lose its sign change at the resolution limit
        return 0.5 * (s0 + s1)


def _march(rep: SweptVolumeRep, ray: Ray, cfg: SolverConfig, first_only: bool):
    """``(s, entering, grazing, cell_diagonal)`` for each verdict change along the ray."""
    hits = []
    prev_inside, prev_s, prev_diag = False, 0.0, rep.bound.diagonal
    for cell, s_in, s_out in rep.tree.leaves_along_ray(rep.bound, ray.origin, ray.direction):
        if s_out < s_in:
            continue
        box = rep.cells[cell].box
        if len(rep.cells[cell]) == 0:
            if prev_inside:
                hits.append((s_in, False, False, box.diagonal))
            prev_inside, prev_s = False, s_out
            continue
        n = max(2, int(math.ceil((s_out - s_in) / (box.diagonal / 64))) + 1)
        s = np.linspace(s_in, s_out, n)
        v = _signed_along(rep, ray, cell, s, cfg)
        inside = v <= 0
        cell_hits = []
        if inside[0] != prev_inside:
            cell_hits.append((s_in, bool(inside[0]), False))
        for j in np.flatnonzero(inside[1:] != inside[:-1]):
            cell_hits.append((_refine_crossing(rep, ray, cell, s[j], s[j + 1], cfg), bool(inside[j + 1]), False))
        if not first_only:
            graze_tol = 1e-6 * box.diagonal
            mid = np.flatnonzero(~inside[1:-1] & (v[1:-1] <= v[:-2]) & (v[1:-1] <= v[2:]) & (v[1:-1] < graze_tol)) + 1
            cell_hits.extend((float(s[j]), False, True) for j in mid)
        hits.extend((sc, entering, graze, box.diagonal) for sc, entering, graze in cell_hits)
        prev_inside, prev_s, prev_diag = bool(inside[-1]), s_out, box.diagonal
        if first_only and any(h[1] or h[2] for h in cell_hits):
            return hits
    if prev_inside:
        # the solid reaches the far face of Bound; the ray leaves it there
        hits.append((prev_s, False, False, prev_diag))
    return hits


def ray_intersect_all(rep: SweptVolumeRep, ray: Ray, cfg: SolverConfig | None = None) -> RayHits:
    """Every boundary crossing along the ray, ordered by ``s``; near-coincident crossings merge into one grazing hit."""
    cfg = rep.params.solver if cfg is None else cfg
    raw = sorted(_march(rep, ray, cfg, first_only=False))
    out_s, graze = [], []
    for sc, entering, g, diag in raw:
        tol = 1e-6 * diag
        if out_s and abs(sc - out_s[-1]) <= tol:
            graze[-1] = True
            continue
        out_s.append(sc)
        graze.append(g)
    s = np.array(out_s)
    return RayHits(ray.at(s).reshape(-1, 3), s, np.array(graze, dtype=bool))


def ray_intersect_first(rep: SweptVolumeRep, ray: Ray, cfg: SolverConfig | None = None) -> Array | None:
    """First point of the swept solid along the ray, or None."""
    cfg = rep.params.solver if cfg is None else cfg
    hits = [h for h in _march(rep, ray, cfg, first_only=True) if h[1] or h[2]]
    if not hits:
        return None
    s = min(h[0] for h in hits)
    return ray.at(s)


# ---------------------------------------------------------------------------
# grids and subtraction
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridSpec:
    box: Box3
    dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) < 2:
            raise InvalidInputError("a grid needs at least 2 samples per axis")
        object.__setattr__(self, "dims", dims)

    @property
    def axes(self) -> list[Array]:
        return [np.linspace(self.box.lo[k], self.box.hi[k], self.dims[k]) for k in range(3)]

    def points(self) -> Array:
        """Sample positions in x-fastest order."""
        x, y, z = self.axes
        Z, Y, X = np.meshgrid(z, y, x, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def reshape(self, values: Array) -> Array:
        """Flat x-fastest samples to an ``(nx, ny, nz)`` array."""
        nx, ny, nz = self.dims
        return np.asarray(values).reshape(nz, ny, nx).transpose(2, 1, 0)


@dataclass(frozen=True, eq=False)
class ScalarGrid:
    spec: GridSpec
    values: Array  # flat, x-fastest
    inside: Array
    warnings: tuple = ()

    def volume_array(self) -> Array:
        return self.spec.reshape(self.values)


def signed_values(obj, X, cfg: SolverConfig | None = None) -> tuple[Array, Array]:
    """``(value, inside)`` for a base representation or a swept volume."""
    X = np.asarray(X, dtype=float).reshape(-1, 3)
    if isinstance(obj, SweptVolumeRep):
        m = membership(obj, X, cfg, refine=False)
        return m.signed_distance, m.inside
    if isinstance(obj, LocalImplicitRep):
        v = np.asarray(obj.field(X), dtype=float).reshape(-1)
        return v, v <= 0
    raise InvalidInputError("expected a LocalImplicitRep or a SweptVolumeRep")


def sample_grid(obj, spec: GridSpec, cfg: SolverConfig | None = None) -> ScalarGrid:
    v, inside = signed_values(obj, spec.points(), cfg)
    return ScalarGrid(spec, v, inside)


def complement_values(value: Array, inside: Array) -> Array:
    """Implicit values of the complement; boundary samples of the closed set stay out of the open complement."""
    tiny = np.nextafter(0.0, 1.0)
    return np.where(inside, np.maximum(-value, tiny), -value)


def _bounds_of(obj) -> Box3:
    return obj.bound


def subtract(obj, swept, spec: GridSpec, cfg: SolverConfig | None = None) -> ScalarGrid:
    """``obj \\ swept`` sampled on a grid: values ``max(f_obj, -f_swept)`` and membership masks."""
    X = spec.points()
    warnings = []
    if not _bounds_of(obj).intersects(_bounds_of(swept)):
        warnings.append("object lies entirely outside the swept bound; the difference is the object itself")
    fo, io = signed_values(obj, X, cfg)
    if swept is obj:
        fs, is_ = fo, io
    else:
        fs, is_ = signed_values(swept, X, cfg)
    values = np.maximum(fo, complement_values(fs, is_))
    inside = io & ~is_
    return ScalarGrid(spec, values, inside, tuple(warnings))


def subtract_point(obj, swept, P) -> bool:
    P = np.asarray(P, dtype=float).reshape(1, 3)
    return bool(signed_values(obj, P)[1][0] and not signed_values(swept, P)[1][0])
