"""Ball-cover implicitization with bivariate patches, bump-weight blending and
an MDL-style radius selection.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidInputError
from .geometry import Ball3, BivariatePatch, Box3, LocalImplicitRep, OrientedPointCloud, RepKind
from .mpu import fit_bivariate
from .solvers import min_eigenvalues_sym3

log = logging.getLogger(__name__)

Array = np.ndarray

GOLDEN_CONJUGATE = (math.sqrt(5.0) - 1.0) / 2.0
MIN_FIT_POINTS = 6
LAMBDA_NEIGHBOURS = 10


@dataclass(frozen=True)
class SlimParams:
    rho0_fraction: float = 0.1
    g: float = GOLDEN_CONJUGATE
    t_mdl: float = 0.02  # fraction of the bounding-box diagonal
    levels_kept: bool = False
    rng_seed: int = 0
    floor_fraction: float = 1e-6

    def __post_init__(self):
        if not 0 < self.g < 1:
            raise InvalidInputError("g must lie in (0, 1)")
        if not self.rho0_fraction > 0:
            raise InvalidInputError("rho0_fraction must be positive")
        if not self.t_mdl >= 0:
            raise InvalidInputError("t_mdl must be non-negative")
        if not 0 < self.floor_fraction < 1:
            raise InvalidInputError("floor_fraction must lie in (0, 1)")


def bump_weight(r, R: float) -> Array:
    """``exp(-1 / (1 - (r/R)²))`` on the open ball, 0 elsewhere."""
    x = np.asarray(r, dtype=float) / R
    inside = np.abs(x) < 1
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        w = np.exp(-1.0 / (1.0 - x * x))
    return np.where(inside, w, 0.0)


def cover_with_balls(points, radius: float, seed=0) -> Array:
    """Indices of ball centres covering ``points``; each centre is a uniformly random uncovered point.

    Walking a random permutation and taking every point not yet covered
    picks, at each step, a uniform choice among the uncovered points.
    """
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(P) == 0:
        raise InvalidInputError("nothing to cover")
    if not radius > 0:
        raise InvalidInputError("cover radius must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    tree = cKDTree(P)
    covered = np.zeros(len(P), dtype=bool)
    centres = []
    for i in rng.permutation(len(P)):
        if covered[i]:
            continue
        centres.append(i)
        covered[tree.query_ball_point(P[i], radius)] = True
    return np.array(centres, dtype=int)


def compute_lambda(cloud: OrientedPointCloud) -> float:
    """Mean smallest covariance eigenvalue of each point with its 10 nearest neighbours."""
    P = cloud.points if isinstance(cloud, OrientedPointCloud) else np.asarray(cloud, dtype=float)
    if len(P) < LAMBDA_NEIGHBOURS + 1:
        raise InvalidInputError(f"need at least {LAMBDA_NEIGHBOURS + 1} points to compute lambda")
    _, nn = cKDTree(P).query(P, k=LAMBDA_NEIGHBOURS + 1)
    G = P[nn]  # (n, 11, 3); column 0 is the point itself
    D = G - G.mean(axis=1, keepdims=True)
    S = np.einsum("nki,nkj->nij", D, D) / LAMBDA_NEIGHBOURS
    return float(np.mean(np.maximum(min_eigenvalues_sym3(S), 0.0)))


def slim_fit(ball: Ball3, points, normals) -> BivariatePatch:
    """Patch minimising the bump-weighted squared residual over the samples in ``ball``."""
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    N = np.asarray(normals, dtype=float).reshape(-1, 3)
    r = np.linalg.norm(P - ball.centre, axis=1)
    inside = r < ball.radius
    if inside.sum() < MIN_FIT_POINTS:
        raise InvalidInputError(f"underdetermined fit: {inside.sum()} points in the ball, need {MIN_FIT_POINTS}")
    n = N[inside].mean(axis=0)
    norm = np.linalg.norm(n)
    if norm < 1e-9:
        raise InvalidInputError("normals in the ball cancel out; no local frame")
    w = bump_weight(r[inside], ball.radius)
    patch, _ = fit_bivariate(P[inside], w, ball.centre, n / norm, ball.radius)
    return patch


def rankings(ball: Ball3, patch: BivariatePatch, points, rho: float, lam: float, t_mdl: float) -> tuple[float, float]:
    """Residual ``eps(rho)`` over the samples within ``rho`` of the centre and ``E = eps + lam (t_mdl/rho)²``."""
    if not rho > 0:
        raise InvalidInputError("rho must be positive")
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    sel = np.linalg.norm(P - ball.centre, axis=1) <= rho
    f = patch.evaluate(P[sel]) if np.any(sel) else np.empty(0)
    eps = float(np.sum(np.square(f)))
    return eps, eps + lam * (t_mdl / rho) ** 2


def _plane_patch(centre, points, normals) -> BivariatePatch:
    n = normals.sum(axis=0)
    norm = np.linalg.norm(n)
    n = normals[0] if norm < 1e-12 else n / norm
    # plane through the centroid, expressed in the ball's frame
    patch = BivariatePatch.from_normal(centre, n)
    offset = float((points.mean(axis=0) - centre) @ patch.n)
    return BivariatePatch(patch.origin, patch.u, patch.v, patch.n, [0, 0, 0, 0, 0, offset])


def slim_build(cloud: OrientedPointCloud, params: SlimParams = SlimParams()) -> LocalImplicitRep:
    if cloud is None or len(cloud) == 0:
        raise InvalidInputError("empty point cloud")
    P, N = cloud.points, cloud.normals
    tree = cloud.tree
    diag = cloud.bounding_box().diagonal
    if diag == 0:
        diag = 1.0
    rho0 = params.rho0_fraction * diag
    t_mdl = params.t_mdl * diag
    lam = compute_lambda(cloud) if len(P) > LAMBDA_NEIGHBOURS else 0.0
    rng = np.random.default_rng(params.rng_seed)

    uncovered = np.ones(len(P), dtype=bool)
    balls, patches, records, levels = [], [], [], []
    k = 1
    radii = {0: rho0, 1: params.g * rho0}
    while uncovered.any():
        radii[k + 1] = params.g * radii[k]
        rho_prev, rho, rho_next = radii[k - 1], radii[k], radii[k + 1]
        at_floor = rho < params.floor_fraction * rho0
        U = np.flatnonzero(uncovered)
        centres = U[cover_with_balls(P[U], rho, rng)]
        level = []
        for ci in centres:
            ball = Ball3(P[ci], rho)
            support = np.asarray(tree.query_ball_point(ball.centre, rho), dtype=int)
            near = np.asarray(tree.query_ball_point(ball.centre, rho_prev), dtype=int)
            open_count = int(np.sum(np.linalg.norm(P[support] - ball.centre, axis=1) < rho))
            reason = None
            if open_count < MIN_FIT_POINTS:
                patch = _plane_patch(ball.centre, P[support], N[support])
                reason = "under-resolved"
            else:
                try:
                    patch = slim_fit(ball, P[support], N[support])
                except InvalidInputError:
                    patch = _plane_patch(ball.centre, P[support], N[support])
                    reason = "no-frame"
            eps = [rankings(ball, patch, P[near], r, lam, t_mdl) for r in (rho_prev, rho, rho_next)]
            (e0, E0), (e1, E1), (e2, E2) = eps
            ok = E2 > E1 < E0 and e2 < e1 < e0
            if ok:
                reason = None
            elif reason is None and at_floor:
                reason = "floor"
            if ok or reason is not None:
                uncovered[support] = False
                balls.append(ball)
                patches.append(patch)
                records.append({"level": k, "rho": [rho_prev, rho, rho_next], "eps": [e0, e1, e2],
                                "E": [E0, E1, E2], "forced": reason})
            elif params.levels_kept:
                level.append((ball, patch))
        if params.levels_kept:
            levels.append(tuple(level))
        k += 1

    forced = [i for i, r in enumerate(records) if r["forced"]]
    if forced:
        log.warning("%d of %d balls accepted without the ranking condition", len(forced), len(balls))
    info = {
        "generator": "slim",
        "params": asdict(params),
        "rho0": rho0,
        "lambda": lam,
        "t_mdl_length": t_mdl,
        "levels_run": k - 1,
        "acceptances": records,
        "forced": forced,
    }
    lo = np.min([b.centre - b.radius for b in balls], axis=0)
    hi = np.max([b.centre + b.radius for b in balls], axis=0)
    return LocalImplicitRep(RepKind.BALLS, tuple(balls), tuple(patches), Box3(lo, hi), fallback_cloud=cloud,
                            levels=tuple(levels) if params.levels_kept else None, info=info)


# ---------------------------------------------------------------------------
# blended evaluation
# ---------------------------------------------------------------------------


def blend_weights_pairs(rep: LocalImplicitRep, X) -> tuple[Array, Array, Array]:
    """``(point_index, ball_index, weight)`` for every ball whose open interior contains a point."""
    X = np.asarray(X, dtype=float).reshape(-1, 3)
    pt, ar = rep.containing_pairs(X)
    centres, radii = rep.area_spheres
    w = bump_weight(np.linalg.norm(X[pt] - centres[ar], axis=1), radii[ar])
    keep = w > 0
    return pt[keep], ar[keep], w[keep]


def fallback_values(cloud: OrientedPointCloud, X) -> Array:
    """Signed distance estimate from the nearest sample and its normal."""
    X = np.asarray(X, dtype=float).reshape(-1, 3)
    d, j = cloud.tree.query(X)
    side = np.sign(np.einsum("ij,ij->i", X - cloud.points[j], cloud.normals[j]))
    return side * d


def blended_field(rep: LocalImplicitRep, X) -> tuple[Array, Array]:
    """Partition-of-unity blend of the patches over the balls containing each point.

    Returns ``(values, covered)``; uncovered points use the nearest-sample fallback.
    """
    X = np.asarray(X, dtype=float).reshape(-1, 3)
    pt, ar, w = blend_weights_pairs(rep, X)
    num = np.zeros(len(X))
    den = np.zeros(len(X))
    if len(pt):
        F = rep.table.evaluate_pairs(ar, X[pt])
        np.add.at(num, pt, w * F)
        np.add.at(den, pt, w)
    covered = den > 0
    values = np.empty(len(X))
    values[covered] = num[covered] / den[covered]
    if np.any(~covered):
        values[~covered] = fallback_values(rep.fallback_cloud, X[~covered])
    return values, covered


def blended_eval(rep: LocalImplicitRep, q) -> tuple[float, bool]:
    v, c = blended_field(rep, np.asarray(q, dtype=float).reshape(1, 3))
    return float(v[0]), bool(c[0])


def level_patches(rep: LocalImplicitRep, k: int) -> tuple:
    """The ``(ball, patch)`` pairs stored at level ``k`` (1-based)."""
    if rep.levels is None:
        raise InvalidInputError("representation was built without multi-scale levels")
    if not 1 <= k <= len(rep.levels):
        raise InvalidInputError(f"level {k} not in 1..{len(rep.levels)}")
    return rep.levels[k - 1]


def slim_ray_intersect(rep: LocalImplicitRep, origin, direction) -> Array | None:
    """Blend of the patch hits of the balls overlapping the first ball along the ray."""
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    if not (np.all(np.isfinite(o)) and np.all(np.isfinite(d))) or abs(np.linalg.norm(d) - 1) > 1e-9:
        raise InvalidInputError("ray needs a finite origin and a unit direction")
    centres, radii = rep.area_spheres
    oc = o - centres
    b = oc @ d
    disc = b * b - (np.einsum("ij,ij->i", oc, oc) - radii**2)
    hit = disc >= 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    s_in = np.maximum(-b - sq, 0.0)
    s_out = -b + sq
    hit &= s_out >= 0
    if not np.any(hit):
        return None
    idx = np.flatnonzero(hit)
    first = idx[np.lexsort((idx, s_in[idx]))[0]]
    a1, b1 = s_in[first], s_out[first]
    group = idx[(s_in[idx] <= b1) & (s_out[idx] >= a1)]
    num, den = np.zeros(3), 0.0
    for j in group:
        roots = rep.procedures[j].ray_parameters(o, d)
        roots = roots[(roots >= s_in[j]) & (roots <= s_out[j])]
        if len(roots) == 0:
            continue
        q = o + roots[0] * d
        w = float(bump_weight(np.linalg.norm(q - centres[j]), radii[j]))
        if w > 0:
            num += w * q
            den += w
    if den == 0:
        return None
    return num / den
