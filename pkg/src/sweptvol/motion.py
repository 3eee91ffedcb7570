"""Rigid motions ``T(t) = Translation(v(t)) o Rotation(alpha(t), beta(t), gamma(t))``.

All six component functions are piecewise polynomials on a common domain
``[a, b]``. Rotations use ``Rx(alpha) @ Ry(beta) @ Rz(gamma)`` with

    Ry(beta) = [[cos b, 0, -sin b], [0, 1, 0], [sin b, 0, cos b]]

so that ``beta(t) = pi*t`` reproduces the capsule example's matrix verbatim.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, InvalidInputError
from .geometry import Ball3, Box3, LocalImplicitRep, OrientedPointCloud, Quadric3, RepKind

Array = np.ndarray

MAX_DEGREE = 5
CONTINUITY_TOL = 1e-9
DOMAIN_SLACK = 1e-12
COMPONENTS = ("vx", "vy", "vz", "alpha", "beta", "gamma")


@dataclass(frozen=True, eq=False)
class PiecewisePoly:
    """Piecewise polynomial; segment ``j`` is ``sum_k coeffs[j, k] * (t - knots[j])**k``."""

    knots: Array
    coeffs: Array

    def __post_init__(self):
        knots = np.array(self.knots, dtype=float).reshape(-1)
        coeffs = np.array(self.coeffs, dtype=float)
        if coeffs.ndim == 1:
            coeffs = coeffs.reshape(1, -1)
        if len(knots) < 2 or coeffs.shape[0] != len(knots) - 1:
            raise InvalidInputError("need m+1 knots for m polynomial segments")
        if coeffs.shape[1] > MAX_DEGREE + 1:
            extra = coeffs[:, MAX_DEGREE + 1 :]
            if np.any(extra != 0):
                raise InvalidInputError(f"polynomial degree is capped at {MAX_DEGREE}")
            coeffs = coeffs[:, : MAX_DEGREE + 1]
        if coeffs.shape[1] < MAX_DEGREE + 1:
            coeffs = np.hstack([coeffs, np.zeros((coeffs.shape[0], MAX_DEGREE + 1 - coeffs.shape[1]))])
        if not (np.all(np.isfinite(knots)) and np.all(np.isfinite(coeffs))):
            raise InvalidInputError("knots and coefficients must be finite")
        steps = np.diff(knots)
        degenerate = len(knots) == 2 and steps[0] == 0
        if not degenerate and np.any(steps <= 0):
            raise InvalidInputError("knots must be strictly increasing")
        for j in range(len(knots) - 2):
            left = _horner(coeffs[j], steps[j])
            right = coeffs[j + 1, 0]
            if abs(left - right) > CONTINUITY_TOL * max(1.0, abs(left)):
                raise InvalidInputError(
                    f"discontinuity at knot t={knots[j + 1]!r}: {left!r} vs {right!r}"
                )
        knots.setflags(write=False)
        coeffs.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def constant(cls, value: float, a: float, b: float) -> "PiecewisePoly":
        return cls([a, b], [[value]])

    @classmethod
    def linear(cls, v0: float, v1: float, a: float, b: float) -> "PiecewisePoly":
        slope = 0.0 if b == a else (v1 - v0) / (b - a)
        return cls([a, b], [[v0, slope]])

    @classmethod
    def from_segments(cls, segments) -> "PiecewisePoly":
        """Build from ``[{"span": [t0, t1], "coeffs": [c0, ...]}, ...]`` in time order."""
        if not segments:
            raise InvalidInputError("a piecewise polynomial needs at least one segment")
        knots = [float(segments[0]["span"][0])]
        rows = []
        for seg in segments:
            t0, t1 = (float(x) for x in seg["span"])
            if abs(t0 - knots[-1]) > DOMAIN_SLACK * max(1.0, abs(t0)):
                raise InvalidInputError(f"segments are not contiguous at t={t0!r}")
            knots.append(t1)
            c = [float(x) for x in seg["coeffs"]]
            if not c:
                raise InvalidInputError("empty coefficient list")
            if len(c) > MAX_DEGREE + 1:
                raise InvalidInputError(f"polynomial degree is capped at {MAX_DEGREE}")
            rows.append(c + [0.0] * (MAX_DEGREE + 1 - len(c)))
        return cls(knots, rows)

    def to_segments(self) -> list[dict]:
        out = []
        for j in range(len(self.knots) - 1):
            c = self.coeffs[j]
            nz = np.flatnonzero(c)
            deg = int(nz[-1]) if len(nz) else 0
            out.append({"span": [float(self.knots[j]), float(self.knots[j + 1])],
                        "coeffs": [float(x) for x in c[: deg + 1]]})
        return out

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def n_segments(self) -> int:
        return len(self.knots) - 1

    def segment_index(self, t) -> Array:
        j = np.searchsorted(self.knots, t, side="right") - 1
        return np.clip(j, 0, self.n_segments - 1)

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        j = self.segment_index(t_arr)
        tau = t_arr - self.knots[j]
        c = self.coeffs[j]
        out = c[..., -1]
        for k in range(MAX_DEGREE - 1, -1, -1):
            out = out * tau + c[..., k]
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self) -> "PiecewisePoly":
        k = np.arange(1, MAX_DEGREE + 1)
        d = self.coeffs[:, 1:] * k
        return PiecewisePoly._raw(self.knots, np.hstack([d, np.zeros((self.n_segments, 1))]))

    @classmethod
    def _raw(cls, knots: Array, coeffs: Array) -> "PiecewisePoly":
        # derivatives may jump at knots, so skip the continuity check
        out = object.__new__(cls)
        coeffs = np.ascontiguousarray(coeffs, dtype=float)
        coeffs.setflags(write=False)
        object.__setattr__(out, "knots", knots)
        object.__setattr__(out, "coeffs", coeffs)
        return out

    def is_constant(self) -> bool:
        return bool(np.all(self.coeffs[:, 1:] == 0)) and bool(np.all(self.coeffs[:, 0] == self.coeffs[0, 0]))

    def _pieces_over(self, t0: float, t1: float):
        """Yield ``(segment, tau_lo, tau_hi)`` for the segments meeting ``[t0, t1]``."""
        for j in range(self.n_segments):
            k0, k1 = self.knots[j], self.knots[j + 1]
            lo, hi = max(t0, k0), min(t1, k1)
            if lo > hi:
                continue
            yield j, lo - k0, hi - k0

    def abs_bound(self, t0: float, t1: float) -> float:
        """Upper bound on ``|p(t)|`` over ``[t0, t1]`` from coefficient magnitudes."""
        best = 0.0
        for j, _, tau_hi in self._pieces_over(t0, t1):
            powers = tau_hi ** np.arange(MAX_DEGREE + 1)
            best = max(best, float(np.abs(self.coeffs[j]) @ powers))
        return best

    def value_range(self, t0: float, t1: float) -> tuple[float, float]:
        """Exact ``(min, max)`` over ``[t0, t1]`` via roots of the derivative."""
        lo_v, hi_v = np.inf, -np.inf
        for j, a, b in self._pieces_over(t0, t1):
            c = self.coeffs[j]
            cand = [a, b]
            d = (c[1:] * np.arange(1, MAX_DEGREE + 1))[::-1]
            # negligible leading terms make the companion matrix overflow
            nz = np.flatnonzero(np.abs(d) > 1e-13 * np.abs(d).max()) if np.any(d) else []
            if len(nz):
                d = d[nz[0]:]
                if len(d) > 1:
                    # extra candidates are harmless, so near-real roots count as real
                    r = np.roots(d).real
                    cand.extend(r[(r >= a) & (r <= b)])
            vals = np.polyval(c[::-1], np.array(cand))
            lo_v, hi_v = min(lo_v, vals.min()), max(hi_v, vals.max())
        return float(lo_v), float(hi_v)


def _horner(c, tau):
    out = 0.0
    for ck in c[::-1]:
        out = out * tau + ck
    return out


def euler_matrix(alpha, beta, gamma) -> Array:
    """``Rx(alpha) @ Ry(beta) @ Rz(gamma)``; broadcasts over array arguments."""
    alpha, beta, gamma = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (alpha, beta, gamma)))
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    # Rx @ Ry
    m = np.empty(alpha.shape + (3, 3))
    xy = np.stack(
        [
            np.stack([cb, np.zeros_like(cb), -sb], -1),
            np.stack([-sa * sb, ca, -sa * cb], -1),
            np.stack([ca * sb, sa, ca * cb], -1),
        ],
        -2,
    )
    m[..., :, 0] = xy[..., :, 0] * cg[..., None] + xy[..., :, 1] * sg[..., None]
    m[..., :, 1] = -xy[..., :, 0] * sg[..., None] + xy[..., :, 1] * cg[..., None]
    m[..., :, 2] = xy[..., :, 2]
    return m


@dataclass(frozen=True, eq=False)
class Isometry:
    rotation: Array
    translation: Array

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        v = np.array(self.translation, dtype=float).reshape(3)
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9, rtol=0):
            raise InvalidInputError("rotation is not orthogonal")
        if abs(np.linalg.det(R) - 1) > 1e-9:
            raise InvalidInputError("rotation is not proper (det != +1)")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", v)

    def apply(self, P) -> Array:
        return np.asarray(P, dtype=float) @ self.rotation.T + self.translation

    def inverse_apply(self, P) -> Array:
        return (np.asarray(P, dtype=float) - self.translation) @ self.rotation

    def inverse(self) -> "Isometry":
        return Isometry(self.rotation.T, -self.rotation.T @ self.translation)


@dataclass(frozen=True, eq=False)
class RigidMotion:
    domain: tuple
    vx: PiecewisePoly
    vy: PiecewisePoly
    vz: PiecewisePoly
    alpha: PiecewisePoly
    beta: PiecewisePoly
    gamma: PiecewisePoly

    def __post_init__(self):
        a, b = (float(x) for x in self.domain)
        if not (np.isfinite(a) and np.isfinite(b)) or a > b:
            raise InvalidInputError(f"invalid motion domain [{a}, {b}]")
        object.__setattr__(self, "domain", (a, b))
        slack = DOMAIN_SLACK * max(1.0, abs(a), abs(b))
        for name in COMPONENTS:
            p = getattr(self, name)
            if not isinstance(p, PiecewisePoly):
                raise InvalidInputError(f"component {name} is not a piecewise polynomial")
            pa, pb = p.domain
            if abs(pa - a) > slack or abs(pb - b) > slack:
                raise InvalidInputError(f"component {name} is defined on [{pa}, {pb}], not [{a}, {b}]")

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_functions(cls, domain, **polys) -> "RigidMotion":
        a, b = domain
        comps = {n: polys.get(n, PiecewisePoly.constant(0.0, a, b)) for n in COMPONENTS}
        return cls((a, b), **comps)

    @classmethod
    def identity(cls, a: float = 0.0, b: float = 1.0) -> "RigidMotion":
        return cls.from_functions((a, b))

    @classmethod
    def constant(cls, angles, translation, a: float = 0.0, b: float = 1.0) -> "RigidMotion":
        polys = {n: PiecewisePoly.constant(float(x), a, b) for n, x in zip(COMPONENTS, list(translation) + list(angles))}
        return cls((a, b), **polys)

    @classmethod
    def linear(cls, angles0, angles1, translation0, translation1, a: float = 0.0, b: float = 1.0) -> "RigidMotion":
        start = list(translation0) + list(angles0)
        end = list(translation1) + list(angles1)
        polys = {n: PiecewisePoly.linear(float(s), float(e), a, b) for n, s, e in zip(COMPONENTS, start, end)}
        return cls((a, b), **polys)

    # -- evaluation --------------------------------------------------------

    @property
    def components(self) -> tuple[PiecewisePoly, ...]:
        return tuple(getattr(self, n) for n in COMPONENTS)

    @property
    def duration(self) -> float:
        return self.domain[1] - self.domain[0]

    def is_static(self) -> bool:
        return all(p.is_constant() for p in self.components)

    def _check(self, t) -> Array:
        t = np.asarray(t, dtype=float)
        a, b = self.domain
        slack = DOMAIN_SLACK * max(1.0, abs(a), abs(b))
        if np.any(~np.isfinite(t)) or np.any(t < a - slack) or np.any(t > b + slack):
            raise DomainError(f"time outside the motion domain [{a}, {b}]")
        return np.clip(t, a, b)

    def translation(self, t) -> Array:
        t = self._check(t)
        return np.stack([self.vx(t), self.vy(t), self.vz(t)], axis=-1)

    def angles(self, t) -> Array:
        t = self._check(t)
        return np.stack([self.alpha(t), self.beta(t), self.gamma(t)], axis=-1)

    def rotation(self, t) -> Array:
        t = self._check(t)
        return euler_matrix(self.alpha(t), self.beta(t), self.gamma(t))

    def __call__(self, t: float) -> Isometry:
        return Isometry(self.rotation(float(t)), self.translation(float(t)))

    def apply(self, t: float, P) -> Array:
        return np.asarray(P, dtype=float) @ self.rotation(t).T + self.translation(t)

    def inverse_apply(self, t: float, P) -> Array:
        return (np.asarray(P, dtype=float) - self.translation(t)) @ self.rotation(t)

    def frames(self, ts) -> tuple[Array, Array]:
        """Rotations ``(n, 3, 3)`` and translations ``(n, 3)`` at many times."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        return self.rotation(ts), self.translation(ts)

    def inverse_apply_times(self, ts, P) -> Array:
        """``T(t)^-1 P`` for one point at each of the times ``ts``: shape ``(n, 3)``."""
        R, v = self.frames(ts)
        return np.einsum("nji,nj->ni", R, np.asarray(P, dtype=float) - v)

    def speed_bound(self, t0: float, t1: float, r: float) -> float:
        return motion_speed_bound(self, t0, t1, r)

    def axis_speed_bounds(self, t0: float, t1: float, r: float) -> Array:
        """Per-coordinate bounds on ``|d/dt T(t)(P)_k|`` for ``|P| <= r``."""
        self._check([t0, t1])
        lin = np.array([p.derivative().abs_bound(t0, t1) for p in (self.vx, self.vy, self.vz)])
        ang = sum(p.derivative().abs_bound(t0, t1) for p in (self.alpha, self.beta, self.gamma))
        return lin + r * ang

    # -- serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        d = {"domain": [self.domain[0], self.domain[1]]}
        for n in COMPONENTS:
            d[n] = getattr(self, n).to_segments()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RigidMotion":
        try:
            a, b = (float(x) for x in d["domain"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"motion needs a two-element 'domain': {exc}") from None
        comps = {}
        for n in COMPONENTS:
            segs = d.get(n)
            comps[n] = PiecewisePoly.constant(0.0, a, b) if segs is None else PiecewisePoly.from_segments(segs)
        return cls((a, b), **comps)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "RigidMotion":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(data)


def eval_motion(T: RigidMotion, t: float) -> Isometry:
    return T(t)


def inverse_apply(T: RigidMotion, t: float, P) -> Array:
    return T.inverse_apply(t, P)


def motion_speed_bound(T: RigidMotion, t0: float, t1: float, r: float) -> float:
    """Bound on ``|d/dt T(t)(P)|`` over ``[t0, t1]`` for every ``|P| <= r``.

    Each factor of ``Rx Ry Rz`` has a derivative of operator norm equal to the
    angular rate, so the rotational part is at most ``r (|a'| + |b'| + |g'|)``.
    """
    T._check([t0, t1])
    if t0 > t1:
        raise DomainError("empty interval")
    if r < 0:
        raise InvalidInputError("radius must be non-negative")
    lin = math.sqrt(sum(p.derivative().abs_bound(t0, t1) ** 2 for p in (T.vx, T.vy, T.vz)))
    ang = sum(p.derivative().abs_bound(t0, t1) for p in (T.alpha, T.beta, T.gamma))
    return lin + r * ang


# ---------------------------------------------------------------------------
# capsule example
# ---------------------------------------------------------------------------

CAPSULE_QUADRICS = (
    (0, 1, 1, 0, 0, 0, -1, 0, 0, -2),  # y² + z² - x - 2
    (0, 1, 1, 0, 0, 0, 0, 0, 0, -1),  # y² + z² - 1
    (0, 1, 1, 0, 0, 0, 1, 0, 0, -2),  # y² + z² + x - 2
)
CAPSULE_CENTRES = ((-2.0, 0.0, 0.0), (0.0, 0.0, 0.0), (2.0, 0.0, 0.0))


def _capsule_surface_samples(n_ring: int = 24, n_axial: int = 9) -> OrientedPointCloud:
    pts, nrm = [], []
    phis = np.linspace(0, 2 * np.pi, n_ring, endpoint=False)
    for x in np.linspace(-1, 1, n_axial):
        for phi in phis:
            pts.append([x, np.cos(phi), np.sin(phi)])
            nrm.append([0, np.cos(phi), np.sin(phi)])
    for side in (-1, 1):
        # paraboloid cap y² + z² = 2 - |x| for |x| in [1, 2]
        for s in np.linspace(1, 0, n_axial)[:-1]:
            r = s
            x = side * (2 - r * r)
            for phi in phis:
                y, z = r * np.cos(phi), r * np.sin(phi)
                pts.append([x, y, z])
                nrm.append([side, 2 * y, 2 * z])
        pts.append([2.0 * side, 0, 0])
        nrm.append([side, 0, 0])
    return OrientedPointCloud.from_arrays(np.array(pts), np.array(nrm))


def capsule_example() -> tuple[LocalImplicitRep, RigidMotion]:
    """The three-ball capsule and its half-turn-while-translating motion on ``[0, 1]``."""
    r = math.sqrt(2.0)
    areas = tuple(Ball3(c, r) for c in CAPSULE_CENTRES)
    procs = tuple(Quadric3(q) for q in CAPSULE_QUADRICS)
    bound = Box3([-2 - r, -r, -r], [2 + r, r, r])
    base = LocalImplicitRep(RepKind.BALLS, areas, procs, bound, fallback_cloud=_capsule_surface_samples(),
                            info={"generator": "capsule-example"})
    motion = RigidMotion.from_functions(
        (0.0, 1.0),
        vy=PiecewisePoly.linear(0.0, 16.0, 0.0, 1.0),
        beta=PiecewisePoly.linear(0.0, math.pi, 0.0, 1.0),
    )
    return base, motion
