"""Octree implicitization: adaptive cubes, each carrying a local quadratic fit.

Fits happen in a normalised frame where the root cube has diagonal 1; the
accepted procedures are mapped back to world coordinates at the end so that
world values approximate signed distances in world units.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidInputError
from .geometry import (
    BivariatePatch,
    Box3,
    LocalImplicitRep,
    MinOfPatches,
    OrientedPointCloud,
    Quadric3,
    RepKind,
    frame_from_normal,
    quadric_basis,
)
from .solvers import wls_fit

log = logging.getLogger(__name__)

Array = np.ndarray

ROOT_PAD = 1e-3
MIN_GRADIENT = 1e-12


@dataclass(frozen=True)
class MpuParams:
    alpha: float = 0.75
    n_min: int = 15
    eps0: float = 1e-4
    theta_sharp: float = 0.9
    theta_corner: float = 0.7
    max_depth: int = 12
    enlarge_factor: float = 1.3

    def __post_init__(self):
        # the support sphere of radius alpha*d contains the cube iff alpha >= 1/2
        if self.alpha < 0.5:
            raise InvalidInputError("alpha must be at least 1/2 so the support sphere contains its cube")
        if self.n_min < 7:
            raise InvalidInputError("n_min must be at least 7")
        if not self.eps0 > 0:
            raise InvalidInputError("eps0 must be positive")
        if self.max_depth < 0:
            raise InvalidInputError("max_depth must be non-negative")
        if not self.enlarge_factor > 1:
            raise InvalidInputError("enlarge_factor must exceed 1")


def quadratic_bspline(tau) -> Array:
    """Centred quadratic B-spline, supported on ``|tau| < 1.5``."""
    a = np.abs(np.asarray(tau, dtype=float))
    return np.where(a <= 0.5, 0.75 - a * a, np.where(a < 1.5, 0.5 * (1.5 - a) ** 2, 0.0))


def support_weights(points, centre, radius) -> Array:
    r = np.linalg.norm(np.asarray(points) - centre, axis=1)
    return quadratic_bspline(1.5 * r / radius)


def taubin_error(proc, points) -> float:
    """``max |f(p)| / |grad f(p)|``; infinite if some gradient vanishes."""
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(P) == 0:
        raise InvalidInputError("taubin_error needs at least one point")
    f = np.atleast_1d(proc.evaluate(P))
    g = np.linalg.norm(np.atleast_2d(proc.gradient(P)), axis=1)
    if np.any(g < MIN_GRADIENT):
        return math.inf
    return float(np.max(np.abs(f) / g))


# ---------------------------------------------------------------------------
# local fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocalFit:
    procedure: object
    case: str  # "quadric", "patch" or "sharp"
    n_pieces: int
    degenerate: bool


def _weighted_mean_normal(normals, weights) -> Array | None:
    n = (weights[:, None] * normals).sum(axis=0)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        n = normals.sum(axis=0)
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            return None
    return n / norm


def fit_bivariate(points, weights, origin, normal, scale: float = 1.0) -> tuple[BivariatePatch, bool]:
    """Height-field patch minimising ``sum w_i f(p_i)²`` in the frame ``(u, v, normal)`` at ``origin``.

    ``scale`` only conditions the system (coordinates are divided by it).
    Returns the patch and whether the normal equations were degenerate.
    """
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    w = np.asarray(weights, dtype=float).reshape(-1)
    u, v, n = frame_from_normal(normal)
    L = (P - origin) @ np.stack([u, v, n]).T / scale
    uu, vv, ww = L[:, 0], L[:, 1], L[:, 2]
    A = np.stack([uu * uu, uu * vv, vv * vv, uu, vv, np.ones_like(uu)], axis=1)
    fit = wls_fit(A, w, ww)
    c = fit.coeffs
    coeffs = [c[0] / scale, c[1] / scale, c[2] / scale, c[3], c[4], c[5] * scale]
    return BivariatePatch(origin, u, v, n, coeffs), fit.degenerate


def fit_general_quadric(points, normals, centre, radius, cube: Box3, weights) -> tuple[Quadric3, bool] | None:
    """Quadric minimising the weighted data term plus the off-surface anchor term.

    Anchors are the cube's corners and centre; an anchor is dropped when its
    six nearest samples disagree on which side it lies. Returns ``None`` when
    no anchor survives.
    """
    P = np.asarray(points, dtype=float)
    N = np.asarray(normals, dtype=float)
    Q = np.vstack([cube.corners(), cube.center])
    k = min(6, len(P))
    _, nn = cKDTree(P).query(Q, k=k)
    nn = np.asarray(nn).reshape(len(Q), k)
    s = np.einsum("qkj,qkj->qk", N[nn], Q[:, None, :] - P[nn])
    signs = np.sign(s)
    keep = np.all(signs == signs[:, :1], axis=1) & (signs[:, 0] != 0)
    if not np.any(keep):
        return None
    Q, d = Q[keep], s[keep].mean(axis=1)
    w = np.asarray(weights, dtype=float)
    if w.sum() <= 0:
        w = np.ones(len(P))
    A = np.vstack([quadric_basis((P - centre) / radius), quadric_basis((Q - centre) / radius)])
    b = np.concatenate([np.zeros(len(P)), d / radius])
    wt = np.concatenate([w / w.sum(), np.full(len(Q), 1.0 / len(Q))])
    fit = wls_fit(A, wt, b)
    return Quadric3(fit.coeffs).pulled_back(centre, 1.0 / radius, radius), fit.degenerate


def _piece(points, normals, centre, radius) -> tuple[BivariatePatch, bool]:
    """Patch for one sub-pointset of a sharp feature."""
    if len(points) < 3:
        n = normals.sum(axis=0)
        n = n / np.linalg.norm(n)
        return BivariatePatch.from_normal(points.mean(axis=0), n), True
    w = support_weights(points, centre, radius)
    if w.sum() <= 0:
        w = np.ones(len(points))
    n = _weighted_mean_normal(normals, w)
    patch, degenerate = fit_bivariate(points, w, centre, n, radius)
    return patch, degenerate


def _combine(pieces_pts, patches) -> MinOfPatches:
    """Intersection when every piece lies below the others (convex feature), union otherwise."""
    convex = True
    for k, pts in enumerate(pieces_pts):
        c = pts.mean(axis=0)
        for j, p in enumerate(patches):
            if j != k and p.evaluate(c) > 0:
                convex = False
    return MinOfPatches(tuple(patches), "max" if convex else "min")


def _most_opposed(normals) -> tuple[int, int, float]:
    D = normals @ normals.T
    i, j = np.unravel_index(int(np.argmin(D)), D.shape)
    return int(i), int(j), float(D[i, j])


def classify_and_fit_sharp(points, normals, centre, radius, params: MpuParams) -> LocalFit:
    """Edge / corner cascade: 1, 2, 3 or 4 height-field pieces."""
    P = np.asarray(points, dtype=float)
    N = np.asarray(normals, dtype=float)
    i1, i2, theta = _most_opposed(N)
    if theta >= params.theta_sharp:
        patch, deg = _piece(P, N, centre, radius)
        return LocalFit(patch, "sharp", 1, deg)
    n1, n2 = N[i1], N[i2]
    group = np.where(N @ n1 >= N @ n2, 0, 1)
    e = np.cross(n1, n2)
    e_norm = np.linalg.norm(e)
    if e_norm < 1e-12:
        # antiparallel pair; any direction orthogonal to n1 serves as edge guess
        e = frame_from_normal(n1)[0]
    else:
        e = e / e_norm
    if np.max(np.abs(N @ e)) > params.theta_corner:
        third = (np.abs(N @ n1) < np.abs(N @ e)) & (np.abs(N @ n2) < np.abs(N @ e))
        if np.any(third):
            group[third] = 2
            idx3 = np.flatnonzero(third)
            j3, j4, theta34 = _most_opposed(N[idx3])
            if theta34 < params.theta_sharp:
                n3, n4 = N[idx3[j3]], N[idx3[j4]]
                group[idx3] = np.where(N[idx3] @ n3 >= N[idx3] @ n4, 2, 3)
    sets = [np.flatnonzero(group == g) for g in range(4)]
    sets = [s for s in sets if len(s)]
    if len(sets) == 1:
        patch, deg = _piece(P, N, centre, radius)
        return LocalFit(patch, "sharp", 1, deg)
    patches, degenerate = [], False
    for s in sets:
        patch, deg = _piece(P[s], N[s], centre, radius)
        patches.append(patch)
        degenerate |= deg
    proc = _combine([P[s] for s in sets], patches)
    return LocalFit(proc, "sharp", len(patches), degenerate)


def mpu_local_fit(points, normals, centre, radius, cube: Box3, params: MpuParams) -> LocalFit | None:
    """Local approximation of the samples in the sphere ``(centre, radius)``; ``None`` on failure."""
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    N = np.asarray(normals, dtype=float).reshape(-1, 3)
    centre = np.asarray(centre, dtype=float)
    w = support_weights(P, centre, radius)
    n = _weighted_mean_normal(N, w)
    cos_max = -1.0 if n is None else float(np.min(N @ n))
    many = len(P) > 2 * params.n_min
    if many and cos_max <= 0.0:
        out = fit_general_quadric(P, N, centre, radius, cube, w)
        if out is None:
            return None
        return LocalFit(out[0], "quadric", 1, out[1])
    if many:
        patch, deg = fit_bivariate(P, w, centre, n, radius)
        return LocalFit(patch, "patch", 1, deg)
    return classify_and_fit_sharp(P, N, centre, radius, params)


# ---------------------------------------------------------------------------
# main loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AcceptedCube:
    box: Box3  # normalised coordinates
    depth: int
    fit: LocalFit
    support_count: int
    taubin: float  # over the support points, normalised units; nan when the support is empty
    flagged: bool


def _root_cube(cloud: OrientedPointCloud) -> tuple[Array, float]:
    lo, hi = cloud.points.min(axis=0), cloud.points.max(axis=0)
    side = float(np.max(hi - lo))
    if side == 0:
        side = 1.0
    side *= 1 + 2 * ROOT_PAD
    return 0.5 * (lo + hi), side


def mpu_build(cloud: OrientedPointCloud, params: MpuParams = MpuParams()) -> LocalImplicitRep:
    if cloud is None or len(cloud) == 0:
        raise InvalidInputError("empty point cloud")
    centre0, side = _root_cube(cloud)
    sigma = 1.0 / (side * math.sqrt(3.0))  # world -> normalised scale
    P = (cloud.points - centre0) * sigma
    N = cloud.normals
    tree = cKDTree(P)
    h = 0.5 / math.sqrt(3.0)
    root = Box3([-h, -h, -h], [h, h, h])

    accepted: list[AcceptedCube] = []
    work = deque([(root, 0)])
    while work:
        cube, depth = work.popleft()
        c = cube.center
        R = params.alpha * cube.diagonal
        in_c = tree.query_ball_point(c, R)
        support = in_c
        R_fit = R
        while len(support) < min(params.n_min, len(P)):
            R_fit *= params.enlarge_factor
            support = tree.query_ball_point(c, R_fit)
        support = np.sort(np.asarray(support, dtype=int))
        fit = mpu_local_fit(P[support], N[support], c, R_fit, cube, params)
        at_floor = depth >= params.max_depth
        if fit is None:
            if not at_floor:
                work.extend((child, depth + 1) for child in cube.octants())
                continue
            # best effort: a patch through the support, flagged
            w = support_weights(P[support], c, R_fit)
            n = _weighted_mean_normal(N[support], w)
            if n is None:
                n = np.array([0.0, 0.0, 1.0])
            patch, deg = fit_bivariate(P[support], np.where(w > 0, w, 1.0), c, n, R_fit)
            fit = LocalFit(patch, "fallback", 1, True)
        if len(in_c) == 0:
            accepted.append(AcceptedCube(cube, depth, fit, 0, math.nan, False))
            continue
        err = taubin_error(fit.procedure, P[np.asarray(in_c)])
        if err < params.eps0:
            accepted.append(AcceptedCube(cube, depth, fit, len(in_c), err, False))
        elif at_floor:
            log.warning("cube at depth %d accepted with Taubin error %.3g", depth, err)
            accepted.append(AcceptedCube(cube, depth, fit, len(in_c), err, True))
        else:
            work.extend((child, depth + 1) for child in cube.octants())

    return _assemble(cloud, accepted, centre0, sigma, params)


def _to_world(proc, centre0, sigma):
    if isinstance(proc, Quadric3):
        return proc.pulled_back(centre0, sigma, 1.0 / sigma)
    return proc.pulled_back(centre0, sigma)


def _assemble(cloud, accepted, centre0, sigma, params) -> LocalImplicitRep:
    areas, procs = [], []
    for a in accepted:
        areas.append(Box3(centre0 + a.box.lo / sigma, centre0 + a.box.hi / sigma))
        procs.append(_to_world(a.fit.procedure, centre0, sigma))
    errs = [a.taubin for a in accepted if a.support_count > 0]
    info = {
        "generator": "mpu",
        "params": asdict(params),
        "normalisation": {"centre": [float(x) for x in centre0], "scale": float(sigma)},
        "depths": [a.depth for a in accepted],
        "cases": [a.fit.case for a in accepted],
        "pieces": [a.fit.n_pieces for a in accepted],
        "support_counts": [a.support_count for a in accepted],
        "taubin_errors": [None if a.support_count == 0 else float(a.taubin) for a in accepted],
        "flagged": [i for i, a in enumerate(accepted) if a.flagged],
        "degenerate_fits": int(sum(a.fit.degenerate for a in accepted)),
        "max_taubin_error": float(max(errs)) if errs else 0.0,
    }
    lo = np.min([a.lo for a in areas], axis=0)
    hi = np.max([a.hi for a in areas], axis=0)
    return LocalImplicitRep(RepKind.OCTREE, tuple(areas), tuple(procs), Box3(lo, hi), info=info)
