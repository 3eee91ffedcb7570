"""Geometric primitives, local procedures and the local implicit representation.

A local implicit representation is a list of bounded areas (axis-aligned boxes
or balls) each paired with a scalar procedure; a point is inside the solid when
some area contains it and that area's procedure is non-positive there.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidInputError, ParseError

Array = np.ndarray

NORMAL_TOL = 1e-6
NORMAL_LOAD_TOL = 1e-3
FRAME_TOL = 1e-9


def _frozen(a) -> Array:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _point(x, name="point") -> Array:
    a = np.asarray(x, dtype=float)
    if a.shape != (3,):
        raise InvalidInputError(f"{name} must have 3 components, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} has non-finite components")
    return _frozen(a)


def _as_points(X) -> tuple[Array, bool]:
    """Return ``(X as (n, 3), was_single)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        return X.reshape(1, 3), True
    return X.reshape(-1, 3), False


def _unwrap(values: Array, single: bool):
    return float(values[0]) if single else values


# ---------------------------------------------------------------------------
# point clouds
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OrientedPointCloud:
    """Surface samples with unit outward normals."""

    points: Array
    normals: Array

    def __post_init__(self):
        p = np.array(self.points, dtype=float)
        n = np.array(self.normals, dtype=float)
        if p.ndim != 2 or p.shape[1] != 3 or p.shape != n.shape:
            raise InvalidInputError("points and normals must both be (N, 3) arrays")
        if len(p) < 1:
            raise InvalidInputError("a point cloud needs at least one point")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(n))):
            raise InvalidInputError("point cloud has non-finite coordinates")
        norms = np.linalg.norm(n, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > NORMAL_TOL)
        if len(bad):
            raise InvalidInputError(
                f"normal {bad[0]} has norm {norms[bad[0]]:.6g}; normals must be unit vectors"
            )
        p.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "normals", n)

    @classmethod
    def from_arrays(cls, points, normals) -> "OrientedPointCloud":
        """Build a cloud, normalising the normals first."""
        n = np.array(normals, dtype=float)
        norms = np.linalg.norm(n, axis=-1, keepdims=True)
        if np.any(norms == 0):
            raise InvalidInputError("zero-length normal")
        return cls(points, n / norms)

    def __len__(self) -> int:
        return len(self.points)

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.points)

    def bounding_box(self) -> "Box3":
        return Box3(self.points.min(axis=0), self.points.max(axis=0))

    def subset(self, idx) -> "OrientedPointCloud":
        return OrientedPointCloud(self.points[idx], self.normals[idx])


def read_xyzn(path) -> OrientedPointCloud:
    """Parse ``x y z nx ny nz`` lines; ``#`` starts a comment line."""
    path = Path(path)
    pts, nrm = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 6:
                raise ParseError(
                    f"expected 6 fields 'x y z nx ny nz', found {len(fields)}", lineno, path
                )
            try:
                vals = [float(f) for f in fields]
            except ValueError as exc:
                raise ParseError(f"not a number: {exc}", lineno, path) from None
            if not all(np.isfinite(vals)):
                raise ParseError("non-finite value", lineno, path)
            n = np.array(vals[3:])
            norm = float(np.linalg.norm(n))
            if abs(norm - 1.0) > NORMAL_LOAD_TOL:
                raise ParseError(f"normal has norm {norm:.6g}, not unit", lineno, path)
            pts.append(vals[:3])
            nrm.append(n / norm)
    if not pts:
        raise ParseError("no points found", None, path)
    return OrientedPointCloud(np.array(pts), np.array(nrm))


def write_xyzn(path, cloud: OrientedPointCloud) -> None:
    data = np.hstack([cloud.points, cloud.normals])
    np.savetxt(path, data, fmt="%.17g")


# ---------------------------------------------------------------------------
# areas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FaceFunction:
    """Signed distance ``P . n - d`` to one face plane of an axis-aligned box."""

    axis: int
    sigma: int
    offset: float

    @property
    def normal(self) -> Array:
        n = np.zeros(3)
        n[self.axis] = self.sigma
        return n

    def __call__(self, P):
        P = np.asarray(P, dtype=float)
        return self.sigma * P[..., self.axis] - self.offset


@dataclass(frozen=True, eq=False)
class Box3:
    lo: Array
    hi: Array

    def __post_init__(self):
        lo, hi = _point(self.lo, "lo"), _point(self.hi, "hi")
        if np.any(lo > hi):
            raise InvalidInputError(f"box min {lo} exceeds max {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __repr__(self):
        return f"Box3(lo={self.lo.tolist()}, hi={self.hi.tolist()})"

    @property
    def center(self) -> Array:
        return 0.5 * (self.lo + self.hi)

    @property
    def size(self) -> Array:
        return self.hi - self.lo

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.size))

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))

    @property
    def surface_area(self) -> float:
        a, b, c = self.size
        return float(2 * (a * b + b * c + a * c))

    def corners(self) -> Array:
        idx = np.array([[i >> 2 & 1, i >> 1 & 1, i & 1] for i in range(8)])
        return np.where(idx == 1, self.hi, self.lo)

    def contains(self, X, tol: float = 0.0):
        X, single = _as_points(X)
        inside = np.all((X >= self.lo - tol) & (X <= self.hi + tol), axis=1)
        return bool(inside[0]) if single else inside

    def distance(self, X):
        """Euclidean distance to the closed box (0 inside)."""
        X, single = _as_points(X)
        d = np.maximum(np.maximum(self.lo - X, X - self.hi), 0.0)
        return _unwrap(np.linalg.norm(d, axis=1), single)

    def contains_box(self, other: "Box3", tol: float = 0.0) -> bool:
        return bool(np.all(other.lo >= self.lo - tol) and np.all(other.hi <= self.hi + tol))

    def intersects(self, other: "Box3") -> bool:
        return bool(np.all(self.lo <= other.hi) and np.all(other.lo <= self.hi))

    def box_distance(self, other: "Box3") -> float:
        gap = np.maximum(np.maximum(self.lo - other.hi, other.lo - self.hi), 0.0)
        return float(np.linalg.norm(gap))

    def split(self, axis: int, position: float) -> tuple["Box3", "Box3"]:
        hi1 = self.hi.copy()
        hi1[axis] = position
        lo2 = self.lo.copy()
        lo2[axis] = position
        return Box3(self.lo, hi1), Box3(lo2, self.hi)

    def octants(self) -> list["Box3"]:
        c = self.center
        out = []
        for i in range(8):
            bits = np.array([i >> 2 & 1, i >> 1 & 1, i & 1], dtype=bool)
            out.append(Box3(np.where(bits, c, self.lo), np.where(bits, self.hi, c)))
        return out

    def expanded(self, margin: float) -> "Box3":
        return Box3(self.lo - margin, self.hi + margin)

    def ray_interval(self, origin, direction) -> tuple[float, float] | None:
        """Parameters ``(s_in, s_out)`` of the ray ``origin + s*direction, s >= 0`` inside the box."""
        o = np.asarray(origin, dtype=float)
        d = np.asarray(direction, dtype=float)
        s_in, s_out = 0.0, np.inf
        for k in range(3):
            if abs(d[k]) < 1e-300:
                if o[k] < self.lo[k] or o[k] > self.hi[k]:
                    return None
                continue
            a = (self.lo[k] - o[k]) / d[k]
            b = (self.hi[k] - o[k]) / d[k]
            if a > b:
                a, b = b, a
            s_in = max(s_in, a)
            s_out = min(s_out, b)
            if s_in > s_out:
                return None
        return s_in, s_out

    @classmethod
    def around(cls, points, pad: float = 0.0) -> "Box3":
        P = np.asarray(points, dtype=float).reshape(-1, 3)
        return cls(P.min(axis=0) - pad, P.max(axis=0) + pad)


def signed_face_functions(box: Box3) -> tuple[FaceFunction, ...]:
    """The six outward face functions, ordered (axis 0, -1), (axis 0, +1), (axis 1, -1), ..."""
    out = []
    for k in range(3):
        out.append(FaceFunction(k, -1, -float(box.lo[k])))
        out.append(FaceFunction(k, +1, float(box.hi[k])))
    return tuple(out)


def face_function(box: Box3, axis: int, sigma: int) -> FaceFunction:
    return signed_face_functions(box)[2 * axis + (1 if sigma > 0 else 0)]


@dataclass(frozen=True, eq=False)
class Ball3:
    centre: Array
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "centre", _point(self.centre, "centre"))
        r = float(self.radius)
        if not (r > 0 and np.isfinite(r)):
            raise InvalidInputError(f"ball radius must be positive, got {r}")
        object.__setattr__(self, "radius", r)

    def __repr__(self):
        return f"Ball3(centre={self.centre.tolist()}, radius={self.radius!r})"

    def contains(self, X, tol: float = 0.0):
        X, single = _as_points(X)
        inside = np.linalg.norm(X - self.centre, axis=1) <= self.radius + tol
        return bool(inside[0]) if single else inside

    def distance(self, X):
        X, single = _as_points(X)
        d = np.maximum(np.linalg.norm(X - self.centre, axis=1) - self.radius, 0.0)
        return _unwrap(d, single)

    def bounding_box(self) -> Box3:
        return Box3(self.centre - self.radius, self.centre + self.radius)

    def ray_interval(self, origin, direction) -> tuple[float, float] | None:
        o = np.asarray(origin, dtype=float) - self.centre
        d = np.asarray(direction, dtype=float)
        a = float(d @ d)
        b = float(o @ d)
        c = float(o @ o) - self.radius**2
        disc = b * b - a * c
        if disc < 0:
            return None
        sq = np.sqrt(disc)
        s0, s1 = (-b - sq) / a, (-b + sq) / a
        if s1 < 0:
            return None
        return max(s0, 0.0), s1


Area = Union[Box3, Ball3]


def area_bounding_box(area: Area) -> Box3:
    return area if isinstance(area, Box3) else area.bounding_box()


def area_bounding_sphere(area: Area) -> tuple[Array, float]:
    if isinstance(area, Ball3):
        return area.centre, area.radius
    return area.center, 0.5 * area.diagonal


# ---------------------------------------------------------------------------
# local procedures
# ---------------------------------------------------------------------------


def quadric_basis(X) -> Array:
    """Monomials ``x², y², z², xy, xz, yz, x, y, z, 1`` for each row of X."""
    X = np.asarray(X, dtype=float).reshape(-1, 3)
    x, y, z = X[:, 0], X[:, 1], X[:, 2]
    one = np.ones_like(x)
    return np.stack([x * x, y * y, z * z, x * y, x * z, y * z, x, y, z, one], axis=1)


@dataclass(frozen=True, eq=False)
class Quadric3:
    """General trivariate quadratic with coefficients on :func:`quadric_basis`."""

    coeffs: Array

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.shape != (10,):
            raise InvalidInputError("a quadric has exactly 10 coefficients")
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("quadric coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def evaluate(self, X):
        X, single = _as_points(X)
        return _unwrap(quadric_basis(X) @ self.coeffs, single)

    __call__ = evaluate

    def gradient(self, X) -> Array:
        X, single = _as_points(X)
        a, b, c, d, e, f, g, h, i, _ = self.coeffs
        x, y, z = X[:, 0], X[:, 1], X[:, 2]
        G = np.stack(
            [2 * a * x + d * y + e * z + g, 2 * b * y + d * x + f * z + h, 2 * c * z + e * x + f * y + i],
            axis=1,
        )
        return G[0] if single else G

    def matrix_form(self) -> tuple[Array, Array, float]:
        """``(A, b, c)`` with ``q(x) = xᵀAx + bᵀx + c``."""
        a, b, c, d, e, f, g, h, i, k = self.coeffs
        A = np.array([[a, d / 2, e / 2], [d / 2, b, f / 2], [e / 2, f / 2, c]])
        return A, np.array([g, h, i]), float(k)

    @classmethod
    def from_matrix_form(cls, A, b, c) -> "Quadric3":
        A = np.asarray(A, dtype=float)
        return cls(
            [A[0, 0], A[1, 1], A[2, 2], 2 * A[0, 1], 2 * A[0, 2], 2 * A[1, 2], b[0], b[1], b[2], c]
        )

    def pulled_back(self, centre, scale: float, value_scale: float = 1.0) -> "Quadric3":
        """Quadric of ``x -> value_scale * q((x - centre) * scale)``."""
        A, b, c = self.matrix_form()
        centre = np.asarray(centre, dtype=float)
        A2 = A * scale**2
        b2 = b * scale - 2 * scale**2 * (A @ centre)
        c2 = scale**2 * centre @ A @ centre - scale * b @ centre + c
        return Quadric3.from_matrix_form(A2 * value_scale, b2 * value_scale, c2 * value_scale)


def frame_from_normal(n) -> tuple[Array, Array, Array]:
    """Right-handed orthonormal ``(u, v, n)`` with a deterministic choice of ``u``."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    helper = np.zeros(3)
    helper[int(np.argmin(np.abs(n)))] = 1.0
    u = np.cross(n, helper)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    return u, v, n


@dataclass(frozen=True, eq=False)
class BivariatePatch:
    """Height-field quadric ``w - (c20 u² + c11 uv + c02 v² + c10 u + c01 v + c00)``.

    ``(u, v, w)`` are the coordinates of a point in the frame centred on
    ``origin`` with axes ``(u, v, n)``.
    """

    origin: Array
    u: Array
    v: Array
    n: Array
    coeffs: Array  # c20, c11, c02, c10, c01, c00

    def __post_init__(self):
        for name in ("origin", "u", "v", "n"):
            object.__setattr__(self, name, _point(getattr(self, name), name))
        F = np.stack([self.u, self.v, self.n])
        if not np.allclose(F @ F.T, np.eye(3), atol=FRAME_TOL, rtol=0):
            raise InvalidInputError("patch frame (u, v, n) is not orthonormal")
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.shape != (6,) or not np.all(np.isfinite(c)):
            raise InvalidInputError("a bivariate patch has 6 finite coefficients")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_normal(cls, origin, normal, coeffs=(0, 0, 0, 0, 0, 0)) -> "BivariatePatch":
        u, v, n = frame_from_normal(normal)
        return cls(origin, u, v, n, coeffs)

    @property
    def frame(self) -> Array:
        return np.stack([self.u, self.v, self.n])

    def local_coords(self, X) -> Array:
        X = np.asarray(X, dtype=float).reshape(-1, 3)
        return (X - self.origin) @ self.frame.T

    def height(self, uu, vv):
        c20, c11, c02, c10, c01, c00 = self.coeffs
        return c20 * uu * uu + c11 * uu * vv + c02 * vv * vv + c10 * uu + c01 * vv + c00

    def evaluate(self, X):
        X, single = _as_points(X)
        L = self.local_coords(X)
        return _unwrap(L[:, 2] - self.height(L[:, 0], L[:, 1]), single)

    __call__ = evaluate

    def gradient(self, X) -> Array:
        X, single = _as_points(X)
        L = self.local_coords(X)
        c20, c11, c02, c10, c01, _ = self.coeffs
        du = -(2 * c20 * L[:, 0] + c11 * L[:, 1] + c10)
        dv = -(c11 * L[:, 0] + 2 * c02 * L[:, 1] + c01)
        G = du[:, None] * self.u + dv[:, None] * self.v + self.n
        return G[0] if single else G

    def ray_parameters(self, origin, direction) -> Array:
        """Real ``s`` with ``f(origin + s*direction) = 0``, ascending."""
        o = self.local_coords(origin)[0]
        d = self.frame @ np.asarray(direction, dtype=float)
        c20, c11, c02, c10, c01, c00 = self.coeffs
        # f(s) = A s² + B s + C
        A = -(c20 * d[0] ** 2 + c11 * d[0] * d[1] + c02 * d[1] ** 2)
        B = d[2] - (2 * c20 * o[0] * d[0] + c11 * (o[0] * d[1] + o[1] * d[0]) + 2 * c02 * o[1] * d[1]
                    + c10 * d[0] + c01 * d[1])
        C = o[2] - self.height(o[0], o[1])
        scale = max(abs(A), abs(B), abs(C), 1e-300)
        if abs(A) <= 1e-14 * scale:
            if abs(B) <= 1e-300:
                return np.empty(0)
            return np.array([-C / B])
        disc = B * B - 4 * A * C
        if disc < 0:
            return np.empty(0)
        sq = np.sqrt(disc)
        # numerically stable pair
        q = -0.5 * (B + np.copysign(sq, B))
        roots = [q / A] if q == 0 else [q / A, C / q]
        return np.sort(np.array(roots))

    def pulled_back(self, centre, scale: float) -> "BivariatePatch":
        """Patch of ``x -> f((x - centre) * scale) / scale``."""
        c20, c11, c02, c10, c01, c00 = self.coeffs
        origin = np.asarray(centre, dtype=float) + self.origin / scale
        return BivariatePatch(
            origin, self.u, self.v, self.n,
            [c20 * scale, c11 * scale, c02 * scale, c10, c01, c00 / scale],
        )


@dataclass(frozen=True, eq=False)
class MinOfPatches:
    """Sharp feature: 2 to 4 height-field pieces combined pointwise.

    ``mode`` is ``"min"`` (union of the piece solids) or ``"max"``
    (intersection, used for convex edges and corners).
    """

    patches: tuple
    mode: str = "min"

    def __post_init__(self):
        patches = tuple(self.patches)
        if not 2 <= len(patches) <= 4:
            raise InvalidInputError("a sharp-feature procedure has 2, 3 or 4 pieces")
        if not all(isinstance(p, BivariatePatch) for p in patches):
            raise InvalidInputError("sharp-feature pieces must be bivariate patches")
        if self.mode not in ("min", "max"):
            raise InvalidInputError(f"unknown combination mode {self.mode!r}")
        object.__setattr__(self, "patches", patches)

    def piece_values(self, X) -> Array:
        X, _ = _as_points(X)
        return np.stack([p.evaluate(X) for p in self.patches], axis=1)

    def active_piece(self, X) -> Array:
        V = self.piece_values(X)
        return np.argmin(V, axis=1) if self.mode == "min" else np.argmax(V, axis=1)

    def evaluate(self, X):
        X, single = _as_points(X)
        V = self.piece_values(X)
        out = V.min(axis=1) if self.mode == "min" else V.max(axis=1)
        return _unwrap(out, single)

    __call__ = evaluate

    def gradient(self, X) -> Array:
        X, single = _as_points(X)
        k = self.active_piece(X)
        G = np.stack([p.gradient(X) for p in self.patches], axis=1)
        out = G[np.arange(len(X)), k]
        return out[0] if single else out

    def pulled_back(self, centre, scale: float) -> "MinOfPatches":
        return MinOfPatches(tuple(p.pulled_back(centre, scale) for p in self.patches), self.mode)


LocalProcedure = Union[Quadric3, BivariatePatch, MinOfPatches]


def eval_procedure(proc: LocalProcedure, P):
    return proc.evaluate(P)


def constant_procedure(value: float) -> Quadric3:
    c = np.zeros(10)
    c[9] = value
    return Quadric3(c)


# ---------------------------------------------------------------------------
# vectorised evaluation across many (area, point) pairs
# ---------------------------------------------------------------------------


class ProcedureTable:
    """Stacked coefficients so that ``F_i(x_j)`` for arbitrary pairs is one numpy pass."""

    def __init__(self, procedures: Sequence[LocalProcedure]):
        n = len(procedures)
        self.quadric_row = np.full(n, -1)
        self.piece_rows = np.full((n, 4), -1)
        self.use_max = np.zeros(n, dtype=bool)
        quads, origins, frames, pcoef = [], [], [], []
        for i, proc in enumerate(procedures):
            if isinstance(proc, Quadric3):
                self.quadric_row[i] = len(quads)
                quads.append(proc.coeffs)
                continue
            pieces = proc.patches if isinstance(proc, MinOfPatches) else (proc,)
            self.use_max[i] = isinstance(proc, MinOfPatches) and proc.mode == "max"
            for k, p in enumerate(pieces):
                self.piece_rows[i, k] = len(origins)
                origins.append(p.origin)
                frames.append(p.frame)
                pcoef.append(p.coeffs)
        self.quadrics = np.array(quads).reshape(-1, 10)
        self.origins = np.array(origins).reshape(-1, 3)
        self.frames = np.array(frames).reshape(-1, 3, 3)
        self.patch_coeffs = np.array(pcoef).reshape(-1, 6)

    def evaluate_pairs(self, area_idx, X) -> Array:
        area_idx = np.asarray(area_idx)
        X = np.asarray(X, dtype=float).reshape(-1, 3)
        out = np.empty(len(area_idx))
        qr = self.quadric_row[area_idx]
        isq = qr >= 0
        if np.any(isq):
            out[isq] = np.einsum("ij,ij->i", quadric_basis(X[isq]), self.quadrics[qr[isq]])
        rest = np.flatnonzero(~isq)
        if len(rest):
            rows = self.piece_rows[area_idx[rest]]
            vals = np.full(rows.shape, np.nan)
            for k in range(4):
                has = rows[:, k] >= 0
                if not np.any(has):
                    continue
                r = rows[has, k]
                d = X[rest[has]] - self.origins[r]
                L = np.einsum("nij,nj->ni", self.frames[r], d)
                c = self.patch_coeffs[r]
                u, v = L[:, 0], L[:, 1]
                h = c[:, 0] * u * u + c[:, 1] * u * v + c[:, 2] * v * v + c[:, 3] * u + c[:, 4] * v + c[:, 5]
                vals[has, k] = L[:, 2] - h
            use_max = self.use_max[area_idx[rest]]
            out[rest] = np.where(use_max, np.nanmax(vals, axis=1), np.nanmin(vals, axis=1))
        return out


# ---------------------------------------------------------------------------
# representation
# ---------------------------------------------------------------------------


class RepKind(str, enum.Enum):
    OCTREE = "octree"
    BALLS = "balls"


@dataclass(frozen=True, eq=False)
class LocalImplicitRep:
    """Areas paired with local procedures; the solid is ``{x : x in A_i and F_i(x) <= 0}``."""

    kind: RepKind
    areas: tuple
    procedures: tuple
    bound: Box3
    fallback_cloud: OrientedPointCloud | None = None
    levels: tuple | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        kind = RepKind(self.kind)
        object.__setattr__(self, "kind", kind)
        areas, procs = tuple(self.areas), tuple(self.procedures)
        if len(areas) != len(procs):
            raise InvalidInputError("areas and procedures differ in length")
        if not areas:
            raise InvalidInputError("a representation needs at least one area")
        want = Box3 if kind is RepKind.OCTREE else Ball3
        if not all(isinstance(a, want) for a in areas):
            raise InvalidInputError(f"{kind.value} representations hold only {want.__name__} areas")
        if kind is RepKind.BALLS and self.fallback_cloud is None:
            raise InvalidInputError("ball-cover representations need a fallback point cloud")
        scale = max(self.bound.diagonal, 1.0)
        for a in areas:
            if not self.bound.contains_box(area_bounding_box(a), tol=1e-9 * scale):
                raise InvalidInputError("bound does not contain every area")
        object.__setattr__(self, "areas", areas)
        object.__setattr__(self, "procedures", procs)

    def __len__(self) -> int:
        return len(self.areas)

    # -- stacked area data -------------------------------------------------

    @cached_property
    def table(self) -> ProcedureTable:
        return ProcedureTable(self.procedures)

    @cached_property
    def _area_arrays(self) -> tuple[Array, Array]:
        if self.kind is RepKind.BALLS:
            return (np.array([a.centre for a in self.areas]), np.array([a.radius for a in self.areas]))
        return (np.array([a.lo for a in self.areas]), np.array([a.hi for a in self.areas]))

    @cached_property
    def area_spheres(self) -> tuple[Array, Array]:
        """Bounding-sphere centres and radii of all areas."""
        if self.kind is RepKind.BALLS:
            return self._area_arrays
        lo, hi = self._area_arrays
        return 0.5 * (lo + hi), 0.5 * np.linalg.norm(hi - lo, axis=1)

    @cached_property
    def _area_tree(self) -> cKDTree:
        return cKDTree(self.area_spheres[0])

    def area_contains_pairs(self, area_idx, X) -> Array:
        area_idx = np.asarray(area_idx)
        X = np.asarray(X, dtype=float).reshape(-1, 3)
        a, b = self._area_arrays
        if self.kind is RepKind.BALLS:
            return np.linalg.norm(X - a[area_idx], axis=1) <= b[area_idx]
        return np.all((X >= a[area_idx]) & (X <= b[area_idx]), axis=1)

    def area_distance_pairs(self, area_idx, X) -> Array:
        area_idx = np.asarray(area_idx)
        X = np.asarray(X, dtype=float).reshape(-1, 3)
        a, b = self._area_arrays
        if self.kind is RepKind.BALLS:
            return np.maximum(np.linalg.norm(X - a[area_idx], axis=1) - b[area_idx], 0.0)
        d = np.maximum(np.maximum(a[area_idx] - X, X - b[area_idx]), 0.0)
        return np.linalg.norm(d, axis=1)

    def gated_pairs(self, area_idx, X) -> Array:
        """``F_i(x)`` where the area contains ``x``; a positive penalty growing with the distance to the area elsewhere."""
        F = self.table.evaluate_pairs(area_idx, X)
        dist = self.area_distance_pairs(area_idx, X)
        inside = self.area_contains_pairs(area_idx, X)
        return np.where(inside, F, np.maximum(F, 0.0) + dist)

    def containing_pairs(self, X) -> tuple[Array, Array]:
        """``(point_index, area_index)`` for every area that contains a point."""
        X, _ = _as_points(X)
        _, radii = self.area_spheres
        cand = self._area_tree.query_ball_point(X, float(radii.max()) * (1 + 1e-12) + 1e-300)
        counts = np.fromiter((len(c) for c in cand), dtype=int, count=len(X))
        if counts.sum() == 0:
            return np.empty(0, dtype=int), np.empty(0, dtype=int)
        pt = np.repeat(np.arange(len(X)), counts)
        ar = np.fromiter((i for c in cand for i in c), dtype=int, count=int(counts.sum()))
        keep = self.area_contains_pairs(ar, X[pt])
        pt, ar = pt[keep], ar[keep]
        order = np.lexsort((ar, pt))
        return pt[order], ar[order]

    def areas_containing(self, X) -> list[Array]:
        X, _ = _as_points(X)
        pt, ar = self.containing_pairs(X)
        splits = np.searchsorted(pt, np.arange(1, len(X)))
        return np.split(ar, splits)

    def field(self, X):
        """Minimum of ``F_i`` over the areas containing each point.

        Points covered by no area get a positive value (penalised value of the
        nearest areas), so the sign always gives membership.
        """
        X, single = _as_points(X)
        values = np.full(len(X), np.inf)
        pt, ar = self.containing_pairs(X)
        if len(pt):
            np.minimum.at(values, pt, self.table.evaluate_pairs(ar, X[pt]))
        idx = np.flatnonzero(~np.isfinite(values))
        if len(idx):
            k = min(8, len(self))
            _, near = self._area_tree.query(X[idx], k=k)
            near = np.asarray(near).reshape(len(idx), k)
            g = self.gated_pairs(near.reshape(-1), np.repeat(X[idx], k, axis=0)).reshape(len(idx), k)
            values[idx] = g.min(axis=1)
        return _unwrap(values, single)

    def contains(self, X):
        f = self.field(X)
        return f <= 0

    def uncovered(self, points) -> Array:
        """Indices of the given points that lie in no area."""
        X, _ = _as_points(points)
        pt, _ = self.containing_pairs(X)
        return np.setdiff1d(np.arange(len(X)), pt)

    @classmethod
    def solid_box(cls, box: Box3) -> "LocalImplicitRep":
        """A block: one box area whose procedure is the constant -1."""
        return cls(RepKind.OCTREE, (box,), (constant_procedure(-1.0),), box)
