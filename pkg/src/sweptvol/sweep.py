"""Swept-volume acceleration structure.

The bounding box of the swept solid is cut by axis-aligned splits into cells.
Each cell lists the base areas that can touch it together with the time
intervals of contact. Cells are chosen greedily from time snapshots of the
moved areas; the final lists are computed with certified contact solving so
that no contact is ever missed (intervals may over-cover by ``contact_tol``).
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .geometry import Ball3, Box3, LocalImplicitRep, RepKind
from .motion import RigidMotion
from .solvers import SolverConfig

log = logging.getLogger(__name__)

Array = np.ndarray

CHUNK = 8  # time samples per prefilter box
MAX_SEGMENTS_PER_PAIR = 4096


# ---------------------------------------------------------------------------
# weight grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WeightGrid:
    """Non-negative scalar field sampled on a regular grid, trilinear in between.

    Outside the grid the value of the nearest boundary sample is used.
    ``values`` has shape ``(nx, ny, nz)``.
    """

    lo: Array
    hi: Array
    values: Array

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(3)
        hi = np.asarray(self.hi, dtype=float).reshape(3)
        V = np.asarray(self.values, dtype=float)
        if V.ndim != 3 or min(V.shape) < 2:
            raise InvalidInputError("weight grid needs at least 2 samples per axis")
        if np.any(hi <= lo):
            raise InvalidInputError("weight grid bounds are empty")
        if not np.all(np.isfinite(V)) or np.any(V < 0):
            raise InvalidInputError("weights must be finite and non-negative")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "values", V)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.values.shape)

    def _axis(self, k: int) -> Array:
        return np.linspace(self.lo[k], self.hi[k], self.values.shape[k])

    def _basis(self, k: int, x) -> Array:
        """Hat-function values ``(len(x), n_k)`` along axis ``k`` with clamping."""
        nodes = self._axis(k)
        x = np.clip(np.asarray(x, dtype=float), nodes[0], nodes[-1])
        j = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, len(nodes) - 2)
        f = (x - nodes[j]) / (nodes[j + 1] - nodes[j])
        B = np.zeros((len(x), len(nodes)))
        B[np.arange(len(x)), j] = 1 - f
        B[np.arange(len(x)), j + 1] += f
        return B

    def __call__(self, X) -> Array:
        X = np.asarray(X, dtype=float).reshape(-1, 3)
        Bx, By, Bz = (self._basis(k, X[:, k]) for k in range(3))
        return np.einsum("ni,nj,nk,ijk->n", Bx, By, Bz, self.values)

    def _axis_integrals(self, k: int, a: float, b: float) -> Array:
        """Exact integrals of each hat function over ``[a, b]`` (piecewise linear: midpoint rule per piece)."""
        if b <= a:
            return np.zeros(self.values.shape[k])
        nodes = self._axis(k)
        cuts = np.unique(np.concatenate([[a, b], nodes[(nodes > a) & (nodes < b)]]))
        mids = 0.5 * (cuts[:-1] + cuts[1:])
        return (np.diff(cuts)[:, None] * self._basis(k, mids)).sum(axis=0)

    def integral(self, box: Box3) -> float:
        wx, wy, wz = (self._axis_integrals(k, box.lo[k], box.hi[k]) for k in range(3))
        return float(np.einsum("i,j,k,ijk->", wx, wy, wz, self.values))

    def face_integral(self, box: Box3, axis: int) -> float:
        """Integral over the cross-section of ``box`` orthogonal to ``axis`` through its centre."""
        others = [k for k in range(3) if k != axis]
        w = [None, None, None]
        for k in others:
            w[k] = self._axis_integrals(k, box.lo[k], box.hi[k])
        w[axis] = self._basis(axis, [box.center[axis]])[0]
        return float(np.einsum("i,j,k,ijk->", w[0], w[1], w[2], self.values))


# ---------------------------------------------------------------------------
# parameters and result types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepParams:
    time_samples: int = 128
    contact_tol: float = 1e-7
    fast_mode: bool = False
    weight: WeightGrid | None = None
    max_cells: int = 65536
    seed_splits_along_path: bool = False
    min_face_fraction: float = 0.01
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.time_samples < 2:
            raise InvalidInputError("time_samples must be at least 2")
        if not self.contact_tol > 0:
            raise InvalidInputError("contact_tol must be positive")
        if self.max_cells < 1:
            raise InvalidInputError("max_cells must be at least 1")


@dataclass(frozen=True, eq=False)
class SweptCell:
    """A cell and its ``(area index, [t0, t1])`` entries."""

    box: Box3
    areas: Array
    intervals: Array

    def __post_init__(self):
        a = np.asarray(self.areas, dtype=int).reshape(-1)
        iv = np.asarray(self.intervals, dtype=float).reshape(-1, 2)
        if len(a) != len(iv):
            raise InvalidInputError("entry areas and intervals differ in length")
        if np.any(iv[:, 0] > iv[:, 1]):
            raise InvalidInputError("entry interval with t0 > t1")
        object.__setattr__(self, "areas", a)
        object.__setattr__(self, "intervals", iv)

    @classmethod
    def from_entries(cls, box: Box3, entries: Sequence) -> "SweptCell":
        entries = list(entries)
        if not entries:
            return cls(box, np.empty(0, dtype=int), np.empty((0, 2)))
        return cls(box, [e[0] for e in entries], [(e[1][0], e[1][1]) if len(e) == 2 else (e[1], e[2])
                                                  for e in entries])

    @property
    def entries(self) -> list[tuple[int, tuple[float, float]]]:
        return [(int(i), (float(t0), float(t1))) for i, (t0, t1) in zip(self.areas, self.intervals)]

    def __len__(self) -> int:
        return len(self.areas)

    @property
    def tau(self) -> float:
        return float(np.sum(self.intervals[:, 1] - self.intervals[:, 0]))


@dataclass(frozen=True, eq=False)
class SplitTree:
    """Axis-aligned binary split tree; leaves map to cell indices.

    ``axis[n] == -1`` marks a leaf. Points with ``x[axis] <= pos`` go left.
    """

    axis: Array
    pos: Array
    left: Array
    right: Array
    cell: Array

    def __post_init__(self):
        for name, dt in (("axis", int), ("pos", float), ("left", int), ("right", int), ("cell", int)):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=dt))

    @classmethod
    def single(cls) -> "SplitTree":
        return cls([-1], [0.0], [-1], [-1], [0])

    @property
    def n_nodes(self) -> int:
        return len(self.axis)

    def depths(self) -> Array:
        d = np.zeros(self.n_nodes, dtype=int)
        for n in range(self.n_nodes):  # children are always created after parents
            if self.axis[n] >= 0:
                d[self.left[n]] = d[n] + 1
                d[self.right[n]] = d[n] + 1
        return d

    @property
    def depth(self) -> int:
        d = self.depths()
        return int(d[self.axis < 0].max())

    def locate(self, X) -> tuple[Array, Array]:
        """Cell index and number of tree nodes visited (leaf included), for each point."""
        X = np.asarray(X, dtype=float).reshape(-1, 3)
        node = np.zeros(len(X), dtype=int)
        visits = np.ones(len(X), dtype=int)
        active = self.axis[node] >= 0
        while np.any(active):
            idx = np.flatnonzero(active)
            n = node[idx]
            go_left = X[idx, self.axis[n]] <= self.pos[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            visits[idx] += 1
            active[idx] = self.axis[node[idx]] >= 0
        return self.cell[node], visits

    def locate_one(self, x) -> tuple[int, int]:
        n, visits = 0, 1
        while self.axis[n] >= 0:
            n = self.left[n] if x[self.axis[n]] <= self.pos[n] else self.right[n]
            visits += 1
        return int(self.cell[n]), visits

    def leaves_along_ray(self, bound: Box3, origin, direction) -> list[tuple[int, float, float]]:
        """``(cell, s_in, s_out)`` for every cell the ray crosses, sorted by ``s_in``."""
        hit = bound.ray_interval(origin, direction)
        if hit is None:
            return []
        o = np.asarray(origin, dtype=float)
        d = np.asarray(direction, dtype=float)
        out = []
        stack = [(0, hit[0], hit[1])]
        while stack:
            n, s0, s1 = stack.pop()
            if self.axis[n] < 0:
                out.append((int(self.cell[n]), s0, s1))
                continue
            k, p = self.axis[n], self.pos[n]
            if d[k] == 0:
                stack.append((self.left[n] if o[k] <= p else self.right[n], s0, s1))
                continue
            s_split = (p - o[k]) / d[k]
            near, far = (self.left[n], self.right[n]) if d[k] > 0 else (self.right[n], self.left[n])
            if s_split <= s0:
                stack.append((far, s0, s1))
            elif s_split >= s1:
                stack.append((near, s0, s1))
            else:
                stack.append((far, s_split, s1))
                stack.append((near, s0, s_split))
        out.sort(key=lambda c: (c[1], c[0]))
        return out


@dataclass(frozen=True, eq=False)
class SweptVolumeRep:
    bound: Box3
    tree: SplitTree
    cells: tuple
    base: LocalImplicitRep
    motion: RigidMotion
    params: SweepParams
    info: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.cells)

    def locate(self, X):
        return self.tree.locate(X)

    @property
    def cost(self) -> float:
        return partition_cost(self.cells, self.params.weight)


# ---------------------------------------------------------------------------
# bounding box
# ---------------------------------------------------------------------------


def base_bounding_sphere(base: LocalImplicitRep) -> tuple[Array, float]:
    """Sphere around the centroid of the area centres containing every area."""
    centres, radii = base.area_spheres
    c = centres.mean(axis=0)
    r = float(np.max(np.linalg.norm(centres - c, axis=1) + radii))
    return c, r


def bounding_box_swept(base: LocalImplicitRep, motion: RigidMotion) -> Box3:
    """Box containing the base at every time: ``min_t v_k(t) - (r + |c|)`` up to ``max_t v_k(t) + (r + |c|)``."""
    c, r = base_bounding_sphere(base)
    a, b = motion.domain
    if motion.is_static() or a == b:
        R = motion.rotation(a)
        centre = R @ c + motion.translation(a)
        return Box3(centre - r, centre + r)
    pad = r + float(np.linalg.norm(c))
    lo, hi = np.empty(3), np.empty(3)
    for k, p in enumerate((motion.vx, motion.vy, motion.vz)):
        lo[k], hi[k] = p.value_range(a, b)
    return Box3(lo - pad, hi + pad)


# ---------------------------------------------------------------------------
# cost
# ---------------------------------------------------------------------------


def _weight_scale(weight: WeightGrid | None, bound: Box3) -> float:
    if weight is None:
        return 1.0
    mean = weight.integral(bound) / bound.volume if bound.volume > 0 else float(weight(bound.center)[0])
    return 1.0 / mean if mean > 0 else 1.0


def weighted_volume(box: Box3, weight: WeightGrid | None, scale: float = 1.0) -> float:
    """Volume of ``box``, or the integral of the weight normalised to mean 1 over the bound."""
    if weight is None:
        return box.volume
    return weight.integral(box) * scale


def partition_cost(cells: Sequence[SweptCell], weight: WeightGrid | None = None) -> float:
    """``log M + (1/M) sum_j Vol(C_j) |A_j| tau_j`` with ``tau_j`` the total entry duration."""
    M = len(cells)
    if M == 0:
        raise InvalidInputError("empty partition")
    scale = 1.0
    if weight is not None:
        lo = np.min([c.box.lo for c in cells], axis=0)
        hi = np.max([c.box.hi for c in cells], axis=0)
        scale = _weight_scale(weight, Box3(lo, hi))
    total = sum(weighted_volume(c.box, weight, scale) * len(c) * c.tau for c in cells)
    return math.log(M) + total / M


# ---------------------------------------------------------------------------
# snapshots and partition
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Snapshots:
    """Axis-aligned boxes of every area at every sample time; row ``i*K + k``."""

    times: Array
    lo: Array
    hi: Array
    area: Array
    dt: float

    @property
    def count(self) -> int:
        return len(self.area)


def sample_times(motion: RigidMotion, n: int) -> Array:
    a, b = motion.domain
    return np.linspace(a, b, n)


def moved_area_boxes(base: LocalImplicitRep, motion: RigidMotion, times) -> tuple[Array, Array]:
    """AABBs ``(lo, hi)`` of every area at every time; shape ``(n_areas, n_times, 3)``."""
    R, v = motion.frames(times)
    if base.kind is RepKind.BALLS:
        centres, radii = base._area_arrays
        moved = np.einsum("tij,aj->ati", R, centres) + v[None]
        ext = np.broadcast_to(radii[:, None, None], moved.shape)
    else:
        lo, hi = base._area_arrays
        c, h = 0.5 * (lo + hi), 0.5 * (hi - lo)
        moved = np.einsum("tij,aj->ati", R, c) + v[None]
        ext = np.einsum("tij,aj->ati", np.abs(R), h)
    return moved - ext, moved + ext


def take_snapshots(base: LocalImplicitRep, motion: RigidMotion, n: int) -> Snapshots:
    ts = sample_times(motion, n)
    lo, hi = moved_area_boxes(base, motion, ts)
    a, b = motion.domain
    dt = (b - a) / n if b > a else 1.0 / n
    area = np.repeat(np.arange(len(base)), n)
    return Snapshots(ts, lo.reshape(-1, 3), hi.reshape(-1, 3), area, dt)


def _overlapping(snap: Snapshots, idx: Array, box: Box3) -> Array:
    if len(idx) == 0:
        return idx
    ok = np.all((snap.lo[idx] <= box.hi) & (snap.hi[idx] >= box.lo), axis=1)
    return idx[ok]


def snapshot_term(snap: Snapshots, idx: Array, volume: float) -> float:
    """Cell contribution with one entry per distinct area and duration ``hits * dt``."""
    if len(idx) == 0:
        return 0.0
    distinct = len(np.unique(snap.area[idx]))
    return volume * distinct * len(idx) * snap.dt


def _best_split(snap: Snapshots, idx: Array, box: Box3, max_candidates: int = 512) -> tuple[int, float, float] | None:
    """``(axis, position, score)`` minimising the snapshot cost of the two halves.

    The score of a plane is ``V_l d_l n_l + V_r d_r n_r`` with ``n`` the number
    of overlapping snapshots and ``d`` the number of distinct areas among them.
    """
    best = None
    mid = box.center
    areas = snap.area[idx]
    uniq, inv = np.unique(areas, return_inverse=True)
    for k in range(3):
        a, b = box.lo[k], box.hi[k]
        width = b - a
        if width <= 1e-12 * max(1.0, abs(a), abs(b)):
            continue
        lo_k, hi_k = snap.lo[idx, k], snap.hi[idx, k]
        slo, shi = np.sort(lo_k), np.sort(hi_k)
        amin = np.full(len(uniq), np.inf)
        amax = np.full(len(uniq), -np.inf)
        np.minimum.at(amin, inv, lo_k)
        np.maximum.at(amax, inv, hi_k)
        amin.sort()
        amax.sort()
        cand = np.unique(np.concatenate([slo, shi, [mid[k]]]))
        margin = 1e-6 * width
        cand = cand[(cand > a + margin) & (cand < b - margin)]
        if len(cand) > max_candidates:
            cand = np.unique(np.concatenate([cand[np.linspace(0, len(cand) - 1, max_candidates).astype(int)], [mid[k]]]))
        if len(cand) == 0:
            continue
        n_l = np.searchsorted(slo, cand, side="right")
        n_r = len(idx) - np.searchsorted(shi, cand, side="left")
        d_l = np.searchsorted(amin, cand, side="right")
        d_r = len(uniq) - np.searchsorted(amax, cand, side="left")
        score = (cand - a) * n_l * d_l + (b - cand) * n_r * d_r
        score = score * (box.volume / width)
        off = np.abs(cand - mid[k]) / width
        j = np.lexsort((off, score))[0]
        key = (float(score[j]), float(off[j]), k)
        if best is None or key < best[0]:
            best = (key, k, float(cand[j]))
    if best is None:
        return None
    return best[1], best[2], best[0][0]


class _TreeBuilder:
    def __init__(self, bound: Box3):
        self.axis, self.pos, self.left, self.right = [-1], [0.0], [-1], [-1]
        self.boxes = {0: bound}
        self.depth = {0: 0}

    def split(self, node: int, axis: int, pos: float) -> tuple[int, int]:
        l, r = len(self.axis), len(self.axis) + 1
        self.axis[node], self.pos[node] = axis, pos
        self.left[node], self.right[node] = l, r
        for _ in range(2):
            self.axis.append(-1)
            self.pos.append(0.0)
            self.left.append(-1)
            self.right.append(-1)
        bl, br = self.boxes.pop(node).split(axis, pos)
        self.boxes[l], self.boxes[r] = bl, br
        d = self.depth.pop(node) + 1
        self.depth[l] = self.depth[r] = d
        return l, r

    def leaves(self) -> list[int]:
        """Leaf nodes in depth-first, left-to-right order."""
        out, stack = [], [0]
        while stack:
            n = stack.pop()
            if self.axis[n] < 0:
                out.append(n)
            else:
                stack.append(self.right[n])
                stack.append(self.left[n])
        return out

    def freeze(self) -> tuple[SplitTree, list[int]]:
        leaves = self.leaves()
        cell = np.full(len(self.axis), -1)
        cell[leaves] = np.arange(len(leaves))
        return SplitTree(self.axis, self.pos, self.left, self.right, cell), leaves


def depth_limit(n_cells: int) -> int:
    """Largest depth a leaf may have and still be split when there are ``n_cells`` cells.

    Its children then sit at depth at most ``ceil(log2(n_cells + 1))``, so every
    leaf of the final tree is within ``ceil(log2 M)`` of the root.
    """
    return math.ceil(math.log2(n_cells + 1)) - 1


@dataclass
class PartitionResult:
    tree: SplitTree
    boxes: list
    snapshot_lists: list
    cost_history: list
    empty_splits: int
    seeded_splits: int


def partition_cells(base: LocalImplicitRep, motion: RigidMotion, params: SweepParams = SweepParams(),
                    bound: Box3 | None = None, snapshots: Snapshots | None = None) -> PartitionResult:
    """Greedy snapshot-driven partition of the swept bounding box.

    Splits the admissible non-empty cell of largest (weighted) volume at the
    plane minimising the snapshot counts of its halves for as long as the
    snapshot cost strictly decreases, then cuts snapshot-free slabs off cells.
    A leaf may only be split while its depth is below ``ceil(log2(M + 1))``,
    which keeps point location within ``ceil(log2 M) + 1`` node visits.
    """
    bound = bounding_box_swept(base, motion) if bound is None else bound
    snap = take_snapshots(base, motion, params.time_samples) if snapshots is None else snapshots
    weight = params.weight
    wscale = _weight_scale(weight, bound)

    tb = _TreeBuilder(bound)
    lists = {0: _overlapping(snap, np.arange(snap.count), bound)}
    vols = {0: weighted_volume(bound, weight, wscale)}
    terms = {0: snapshot_term(snap, lists[0], bound.volume if weight is None else vols[0])}

    def do_split(node, axis, pos):
        l, r = tb.split(node, axis, pos)
        parent = lists.pop(node)
        vols.pop(node)
        terms.pop(node)
        for ch in (l, r):
            box = tb.boxes[ch]
            lists[ch] = _overlapping(snap, parent, box)
            vols[ch] = weighted_volume(box, weight, wscale)
            terms[ch] = snapshot_term(snap, lists[ch], vols[ch])
        return l, r

    # optional seeding along the path of the base centre
    seeded = 0
    if params.seed_splits_along_path:
        c, _ = base_bounding_sphere(base)
        a, b = motion.domain
        speeds = [p.derivative().abs_bound(a, b) for p in (motion.vx, motion.vy, motion.vz)]
        axis = int(np.argmax(speeds))
        ts = sample_times(motion, params.time_samples)[1:-1]
        for t in ts:
            if len(tb.boxes) >= params.max_cells:
                break
            x = motion.apply(t, c)
            node = next(n for n in tb.boxes if tb.boxes[n].contains(x))
            box = tb.boxes[node]
            if tb.depth[node] > depth_limit(len(tb.boxes)):
                continue
            if box.lo[axis] < x[axis] < box.hi[axis]:
                do_split(node, axis, float(x[axis]))
                seeded += 1

    M = len(tb.boxes)
    S = sum(terms.values())
    cost = math.log(M) + S / M
    history = [cost]

    heap = [(-vols[n], n) for n in tb.boxes if len(lists[n])]
    heapq.heapify(heap)
    deferred: list[tuple[int, int]] = []
    while M < params.max_cells:
        limit = depth_limit(M)
        keep = []
        for d, n in deferred:
            if d <= limit:
                heapq.heappush(heap, (-vols[n], n))
            else:
                keep.append((d, n))
        deferred = keep
        node = None
        while heap:
            _, n = heapq.heappop(heap)
            if tb.depth[n] <= limit:
                node = n
                break
            deferred.append((tb.depth[n], n))
        if node is None:
            break
        split = _best_split(snap, lists[node], tb.boxes[node])
        if split is None:
            continue
        axis, pos, _ = split
        lbox, rbox = tb.boxes[node].split(axis, pos)
        lt = snapshot_term(snap, _overlapping(snap, lists[node], lbox), weighted_volume(lbox, weight, wscale))
        rt = snapshot_term(snap, _overlapping(snap, lists[node], rbox), weighted_volume(rbox, weight, wscale))
        new_S = S - terms[node] + lt + rt
        new_cost = math.log(M + 1) + new_S / (M + 1)
        if not new_cost < cost:
            break
        l, r = do_split(node, axis, pos)
        S, M, cost = new_S, M + 1, new_cost
        history.append(cost)
        for ch in (l, r):
            if len(lists[ch]):
                heapq.heappush(heap, (-vols[ch], ch))

    # snapshot-free slabs
    empty_splits = 0
    min_face = params.min_face_fraction * bound.surface_area
    queue = [n for n in tb.leaves() if len(lists[n])]
    while queue and len(tb.boxes) < params.max_cells:
        node = queue.pop(0)
        if tb.depth[node] > depth_limit(len(tb.boxes)):
            continue
        box, idx = tb.boxes[node], lists[node]
        best = None
        for k in range(3):
            others = [j for j in range(3) if j != k]
            face = box.size[others[0]] * box.size[others[1]]
            if weight is not None:
                face = weight.face_integral(box, k) * wscale
            if face < min_face:
                continue
            mn, mx = float(snap.lo[idx, k].min()), float(snap.hi[idx, k].max())
            margin = 1e-9 * max(box.size[k], 1e-300)
            for pos, thick in ((mn, mn - box.lo[k]), (mx, box.hi[k] - mx)):
                if thick > margin and box.lo[k] + margin < pos < box.hi[k] - margin:
                    vol = thick * box.size[others[0]] * box.size[others[1]]
                    if best is None or vol > best[0]:
                        best = (vol, k, pos)
        if best is None:
            continue
        _, k, pos = best
        l, r = do_split(node, k, pos)
        empty_splits += 1
        queue.extend(ch for ch in (l, r) if len(lists[ch]))

    tree, leaves = tb.freeze()
    return PartitionResult(tree, [tb.boxes[n] for n in leaves], [lists[n] for n in leaves], history,
                           empty_splits, seeded)


# ---------------------------------------------------------------------------
# certified contact intervals
# ---------------------------------------------------------------------------


def _box_gap_sphere(O: Array, lo: Array, hi: Array, fast: bool) -> Array:
    """Lower bound of the distance from centres ``O`` to boxes; exact unless ``fast``."""
    p = np.maximum(lo - O, O - hi)
    if fast:
        return p.max(axis=1)
    pos = np.maximum(p, 0.0)
    return np.maximum(p.max(axis=1), np.sqrt(np.sum(pos * pos, axis=1)))


def _sat_gap(R: Array, v: Array, a_lo: Array, a_hi: Array, c_lo: Array, c_hi: Array) -> Array:
    """Separating-axis gap between moved boxes ``R a + v`` and axis-aligned cells.

    Positive values are lower bounds of the Euclidean distance; values <= 0
    mean the boxes intersect.
    """
    ca = np.einsum("nij,nj->ni", R, 0.5 * (a_lo + a_hi)) + v
    ha = 0.5 * (a_hi - a_lo)
    cc = 0.5 * (c_lo + c_hi)
    hc = 0.5 * (c_hi - c_lo)
    d = cc - ca
    axes = [np.broadcast_to(np.eye(3)[k], d.shape) for k in range(3)]
    cols = [R[:, :, k] for k in range(3)]
    axes += cols
    for i in range(3):
        for k in range(3):
            axes.append(np.cross(np.eye(3)[i], cols[k]))
    best = np.full(len(d), -np.inf)
    for L in axes:
        n = np.linalg.norm(L, axis=1)
        ok = n > 1e-12
        proj_c = np.abs(L) @ hc if hc.ndim == 1 else np.einsum("nk,nk->n", np.abs(L), hc)
        proj_a = np.einsum("nk,nk->n", np.abs(np.einsum("nj,njk->nk", L, R)), ha)
        gap = np.abs(np.einsum("nk,nk->n", L, d)) - proj_c - proj_a
        best = np.where(ok, np.maximum(best, gap / np.where(ok, n, 1.0)), best)
    return best


class _ContactProblem:
    """Vectorised certified contact search for many (area, cell) pairs."""

    def __init__(self, base: LocalImplicitRep, motion: RigidMotion, cell_lo: Array, cell_hi: Array,
                 areas: Array, params: SweepParams):
        self.motion = motion
        self.cell_lo = np.asarray(cell_lo, dtype=float).reshape(-1, 3)
        self.cell_hi = np.asarray(cell_hi, dtype=float).reshape(-1, 3)
        self.areas = np.asarray(areas, dtype=int)
        self.params = params
        self.fast = params.fast_mode
        a, b = motion.domain
        centres, radii = base.area_spheres
        self.balls = base.kind is RepKind.BALLS or self.fast
        if self.balls:
            self.centre = centres[self.areas]
            self.radius = radii[self.areas]
            r = np.linalg.norm(self.centre, axis=1)
        else:
            lo, hi = base._area_arrays
            self.a_lo, self.a_hi = lo[self.areas], hi[self.areas]
            corners = np.maximum(np.abs(self.a_lo), np.abs(self.a_hi))
            r = np.linalg.norm(corners, axis=1)
        ang = sum(p.derivative().abs_bound(a, b) for p in (motion.alpha, motion.beta, motion.gamma))
        lin = np.array([p.derivative().abs_bound(a, b) for p in (motion.vx, motion.vy, motion.vz)])
        self.axis_speed = lin[None, :] + r[:, None] * ang
        self.speed = np.linalg.norm(lin) + r * ang

    def _positions(self, rows: Array, ts: Array) -> tuple[Array, Array]:
        R, v = self.motion.frames(ts)
        return R, v

    def gap(self, rows: Array, ts: Array) -> tuple[Array, Array | None]:
        """Gap values and (for balls) moved centres at the given times."""
        R, v = self.motion.frames(ts)
        if self.balls:
            O = np.einsum("nij,nj->ni", R, self.centre[rows]) + v
            g = _box_gap_sphere(O, self.cell_lo[rows], self.cell_hi[rows], self.fast) - self.radius[rows]
            return g, O
        g = _sat_gap(R, v, self.a_lo[rows], self.a_hi[rows], self.cell_lo[rows], self.cell_hi[rows])
        return g, None

    def certified_out(self, rows, ta, tb, ga, gb, Oa, Ob) -> Array:
        h = tb - ta
        out = (ga > 0) & (gb > 0) & (ga + gb > self.speed[rows] * h)
        if self.balls:
            # per-axis hull of the centre path on [ta, tb]
            Lh = self.axis_speed[rows] * h[:, None]
            slack = 0.5 * np.maximum(Lh - np.abs(Oa - Ob), 0.0)
            hlo = np.minimum(Oa, Ob) - slack
            hhi = np.maximum(Oa, Ob) + slack
            p = np.maximum(self.cell_lo[rows] - hhi, hlo - self.cell_hi[rows])
            if self.fast:
                d = p.max(axis=1)
            else:
                d = np.sqrt(np.sum(np.maximum(p, 0.0) ** 2, axis=1))
            out |= d > self.radius[rows]
        return out

    def solve(self, windows: list[Array]) -> list[Array]:
        """Contact intervals of each pair inside its list of ``(w0, w1)`` windows."""
        tol = self.params.contact_tol
        n = len(self.areas)
        a, b = self.motion.domain
        if b == a:
            g, _ = self.gap(np.arange(n), np.full(n, a))
            return [np.array([[a, a]]) if gi <= 0 else np.empty((0, 2)) for gi in g]
        seg_rows, seg_a, seg_b = [], [], []
        for p, W in enumerate(windows):
            for w0, w1 in W:
                m = max(1, min(16, math.ceil(self.speed[p] * (w1 - w0) / max(self.radius[p] if self.balls else
                                                                                     0.5 * np.linalg.norm(self.a_hi[p] - self.a_lo[p]), 1e-12))))
                edges = np.linspace(w0, w1, m + 1)
                seg_rows.append(np.full(m, p))
                seg_a.append(edges[:-1])
                seg_b.append(edges[1:])
        if not seg_rows:
            return [np.empty((0, 2)) for _ in range(n)]
        rows = np.concatenate(seg_rows)
        ta, tb = np.concatenate(seg_a), np.concatenate(seg_b)
        ga, Oa = self.gap(rows, ta)
        gb, Ob = self.gap(rows, tb)
        kept_rows, kept_a, kept_b = [], [], []
        budget = np.zeros(n, dtype=int)
        while len(rows):
            inside = (ga <= 0) & (gb <= 0)
            out = self.certified_out(rows, ta, tb, ga, gb, Oa, Ob) & ~inside
            small = (tb - ta) <= tol
            over = budget[rows] > MAX_SEGMENTS_PER_PAIR
            take = ~out & (inside | small | over)
            kept_rows.append(rows[take])
            kept_a.append(ta[take])
            kept_b.append(tb[take])
            split = ~out & ~take
            if not np.any(split):
                break
            rows, ta, tb, ga, gb = rows[split], ta[split], tb[split], ga[split], gb[split]
            if Oa is not None:
                Oa, Ob = Oa[split], Ob[split]
            np.add.at(budget, rows, 1)
            tm = 0.5 * (ta + tb)
            gm, Om = self.gap(rows, tm)
            rows = np.concatenate([rows, rows])
            ta, tb = np.concatenate([ta, tm]), np.concatenate([tm, tb])
            ga, gb = np.concatenate([ga, gm]), np.concatenate([gm, gb])
            if Oa is not None:
                Oa, Ob = np.concatenate([Oa, Om]), np.concatenate([Om, Ob])
        rows = np.concatenate(kept_rows)
        ta, tb = np.concatenate(kept_a), np.concatenate(kept_b)
        order = np.lexsort((ta, rows))
        rows, ta, tb = rows[order], ta[order], tb[order]
        out = [np.empty((0, 2)) for _ in range(n)]
        bounds = np.searchsorted(rows, np.arange(n + 1))
        for p in range(n):
            s, e = bounds[p], bounds[p + 1]
            if s < e:
                out[p] = merge_intervals(np.column_stack([ta[s:e], tb[s:e]]), 2 * tol, a, b)
        return out


def merge_intervals(iv: Array, gap: float, a: float | None = None, b: float | None = None) -> Array:
    """Union of closed intervals, fusing those separated by at most ``gap``."""
    iv = np.asarray(iv, dtype=float).reshape(-1, 2)
    if len(iv) == 0:
        return iv
    iv = iv[np.argsort(iv[:, 0], kind="stable")]
    merged = [list(iv[0])]
    for t0, t1 in iv[1:]:
        if t0 <= merged[-1][1] + gap:
            merged[-1][1] = max(merged[-1][1], t1)
        else:
            merged.append([t0, t1])
    out = np.array(merged)
    if a is not None:
        out = np.clip(out, a, b)
    return out


def _full_windows(motion: RigidMotion) -> Array:
    a, b = motion.domain
    return np.array([[a, b]])


def contact_intervals_sphere(ball: Ball3, motion: RigidMotion, box: Box3,
                             params: SweepParams = SweepParams()) -> list[tuple[float, float]]:
    """Times at which the moving ball ``T(t)(ball)`` meets the closed box, as merged intervals."""
    base = LocalImplicitRep(RepKind.BALLS, (ball,), (None,), ball.bounding_box(),
                            fallback_cloud=_dummy_cloud(ball.centre))
    prob = _ContactProblem(base, motion, box.lo[None], box.hi[None], np.array([0]), params)
    return [tuple(map(float, r)) for r in prob.solve([_full_windows(motion)])[0]]


def contact_intervals_box(area: Box3, motion: RigidMotion, cell: Box3,
                          params: SweepParams = SweepParams()) -> list[tuple[float, float]]:
    """Times at which the moving box ``T(t)(area)`` meets the closed cell."""
    base = LocalImplicitRep(RepKind.OCTREE, (area,), (None,), area)
    prob = _ContactProblem(base, motion, cell.lo[None], cell.hi[None], np.array([0]), params)
    return [tuple(map(float, r)) for r in prob.solve([_full_windows(motion)])[0]]


def _dummy_cloud(p):
    from .geometry import OrientedPointCloud

    return OrientedPointCloud(np.asarray(p, dtype=float).reshape(1, 3), [[0.0, 0.0, 1.0]])


# ---------------------------------------------------------------------------
# candidate pairs
# ---------------------------------------------------------------------------


def _candidate_windows(base: LocalImplicitRep, motion: RigidMotion, tree: SplitTree, boxes: list,
                       n_samples: int) -> tuple[Array, Array, list[Array]]:
    """``(cell, area, windows)`` for every pair that might be in contact.

    Around each sample time ``t_k`` the moved area stays within
    ``R + L h / 2`` of the moved centre, so a pair whose sampled centres are
    all farther than that from the cell can never touch it.
    """
    a, b = motion.domain
    centres, radii = base.area_spheres
    ts = sample_times(motion, n_samples) if b > a else np.array([a])
    h = (b - a) / (len(ts) - 1) if len(ts) > 1 else 0.0
    R, v = motion.frames(ts)
    O = np.einsum("tij,aj->ati", R, centres) + v[None]  # (A, K, 3)
    ang = sum(p.derivative().abs_bound(a, b) for p in (motion.alpha, motion.beta, motion.gamma))
    lin = math.sqrt(sum(p.derivative().abs_bound(a, b) ** 2 for p in (motion.vx, motion.vy, motion.vz)))
    infl = radii + (lin + np.linalg.norm(centres, axis=1) * ang) * h / 2  # (A,)
    infl = infl * (1 + 1e-9) + 1e-12
    A, K = O.shape[:2]
    n_chunks = math.ceil(K / CHUNK)
    pad = n_chunks * CHUNK - K
    Op = np.concatenate([O, np.repeat(O[:, -1:], pad, axis=1)], axis=1).reshape(A, n_chunks, CHUNK, 3)
    ch_lo = (Op.min(axis=2) - infl[:, None, None]).reshape(-1, 3)
    ch_hi = (Op.max(axis=2) + infl[:, None, None]).reshape(-1, 3)
    # push chunk boxes down the split tree
    node = np.zeros(len(ch_lo), dtype=int)
    elem = np.arange(len(ch_lo))
    while True:
        internal = tree.axis[node] >= 0
        if not np.any(internal):
            break
        n_i, e_i = node[internal], elem[internal]
        ax, pos = tree.axis[n_i], tree.pos[n_i]
        go_l = ch_lo[e_i, ax] <= pos
        go_r = ch_hi[e_i, ax] >= pos
        node = np.concatenate([node[~internal], tree.left[n_i[go_l]], tree.right[n_i[go_r]]])
        elem = np.concatenate([elem[~internal], e_i[go_l], e_i[go_r]])
    cell = tree.cell[node]
    area, chunk = np.divmod(elem, n_chunks)
    # expand to individual samples and test exactly
    k = (chunk[:, None] * CHUNK + np.arange(CHUNK)[None]).reshape(-1)
    cell = np.repeat(cell, CHUNK)
    area = np.repeat(area, CHUNK)
    valid = k < K
    cell, area, k = cell[valid], area[valid], k[valid]
    lo = np.array([bx.lo for bx in boxes])
    hi = np.array([bx.hi for bx in boxes])
    P = O[area, k]
    d = np.linalg.norm(np.maximum(np.maximum(lo[cell] - P, P - hi[cell]), 0.0), axis=1)
    hit = d <= infl[area]
    cell, area, k = cell[hit], area[hit], k[hit]
    if len(cell) == 0:
        return np.empty(0, int), np.empty(0, int), []
    order = np.lexsort((k, area, cell))
    cell, area, k = cell[order], area[order], k[order]
    key_change = np.flatnonzero((np.diff(cell) != 0) | (np.diff(area) != 0)) + 1
    starts = np.concatenate([[0], key_change])
    ends = np.concatenate([key_change, [len(cell)]])
    windows = []
    for s, e in zip(starts, ends):
        ks = k[s:e]
        brk = np.flatnonzero(np.diff(ks) > 1) + 1
        runs = np.split(ks, brk)
        W = np.array([[max(a, ts[r[0]] - h / 2), min(b, ts[r[-1]] + h / 2)] for r in runs])
        windows.append(W)
    return cell[starts], area[starts], windows


# ---------------------------------------------------------------------------
# build
# ---------------------------------------------------------------------------


def build_swept_rep(base: LocalImplicitRep, motion: RigidMotion, params: SweepParams = SweepParams()) -> SweptVolumeRep:
    if not isinstance(base, LocalImplicitRep) or not isinstance(motion, RigidMotion):
        raise InvalidInputError("build_swept_rep needs a LocalImplicitRep and a RigidMotion")
    timings = {}
    t0 = time.perf_counter()
    bound = bounding_box_swept(base, motion)
    a, b = motion.domain
    notes = []
    if a == b:
        notes.append("degenerate motion domain: static placement at T(a)")
    part = partition_cells(base, motion, params, bound)
    timings["partition"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    cells_idx, areas_idx, windows = _candidate_windows(base, motion, part.tree, part.boxes, params.time_samples)
    lo = np.array([bx.lo for bx in part.boxes])
    hi = np.array([bx.hi for bx in part.boxes])
    entries: list[list] = [[] for _ in part.boxes]
    if len(cells_idx):
        prob = _ContactProblem(base, motion, lo[cells_idx], hi[cells_idx], areas_idx, params)
        results = prob.solve(windows)
        for c, i, iv in zip(cells_idx, areas_idx, results):
            for t_lo, t_hi in iv:
                entries[c].append((int(i), float(t_lo), float(t_hi)))
    cells = []
    for box, ent in zip(part.boxes, entries):
        ent.sort()
        if ent:
            cells.append(SweptCell(box, [e[0] for e in ent], [(e[1], e[2]) for e in ent]))
        else:
            cells.append(SweptCell(box, np.empty(0, int), np.empty((0, 2))))
    timings["contacts"] = time.perf_counter() - t1
    n_entries = sum(len(c) for c in cells)
    info = {
        "cells": len(cells),
        "entries": n_entries,
        "mean_entries": n_entries / len(cells),
        "tree_depth": part.tree.depth,
        "snapshot_cost_history": part.cost_history,
        "empty_splits": part.empty_splits,
        "seeded_splits": part.seeded_splits,
        "candidate_pairs": int(len(cells_idx)),
        "timings": timings,
        "notes": notes,
    }
    rep = SweptVolumeRep(bound, part.tree, tuple(cells), base, motion, params, info)
    info["cost"] = partition_cost(rep.cells, params.weight)
    return rep


def with_params(params: SweepParams, **changes) -> SweepParams:
    return replace(params, **changes)
