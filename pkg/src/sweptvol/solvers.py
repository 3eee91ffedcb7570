"""Numerical kernels: weighted least squares, 1-D roots and minima, 3x3 eigenvalues."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import BracketError, InvalidInputError

Array = np.ndarray

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
RANK_TOL = 1e-10
RIDGE = 1e-8
FLAT_DERIVATIVE = 1e-14


@dataclass(frozen=True)
class SolverConfig:
    eps_root: float = 1e-9
    eps_value: float = 1e-9
    max_iter: int = 200
    time_samples_per_unit: int = 64
    rng_seed: int = 0

    def __post_init__(self):
        if not (self.eps_root > 0 and self.eps_value > 0):
            raise InvalidInputError("solver tolerances must be positive")
        if self.max_iter < 8:
            raise InvalidInputError("max_iter must be at least 8")
        if self.time_samples_per_unit <= 0:
            raise InvalidInputError("time_samples_per_unit must be positive")
        if self.rng_seed < 0:
            raise InvalidInputError("rng_seed must be non-negative")


DEFAULT_CONFIG = SolverConfig()


# ---------------------------------------------------------------------------
# weighted least squares
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightedFit:
    coeffs: Array
    degenerate: bool
    residual: float


def weighted_residual(A, w, b, c) -> float:
    r = np.asarray(A, dtype=float) @ np.asarray(c, dtype=float) - np.asarray(b, dtype=float)
    return float(np.sum(np.asarray(w, dtype=float) * r * r))


def wls_fit(A, w, b) -> WeightedFit:
    """Minimise ``sum_i w_i (A_i . c - b_i)²`` through the normal equations.

    A near-singular normal matrix (smallest/largest eigenvalue below 1e-10)
    gets a ridge of ``1e-8 * trace / n`` and the fit is marked degenerate.
    """
    A = np.asarray(A, dtype=float)
    w = np.asarray(w, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.ndim != 2 or A.shape[0] != len(w) or len(w) != len(b):
        raise InvalidInputError("design matrix, weights and targets disagree in length")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
        raise InvalidInputError("non-finite row in least-squares system")
    if np.any(w < 0):
        raise InvalidInputError("negative least-squares weight")
    if not np.any(w > 0):
        raise InvalidInputError("all least-squares weights are zero")
    n = A.shape[1]
    Aw = A * w[:, None]
    N = A.T @ Aw
    rhs = Aw.T @ b
    evals = np.linalg.eigvalsh(N)
    top = evals[-1]
    degenerate = bool(top <= 0 or evals[0] < RANK_TOL * top)
    if degenerate:
        N = N + (RIDGE * max(np.trace(N), 1e-300) / n) * np.eye(n)
    try:
        c = cho_solve(cho_factor(N), rhs)
    except LinAlgError:
        c = np.linalg.lstsq(N, rhs, rcond=None)[0]
        degenerate = True
    return WeightedFit(c, degenerate, weighted_residual(A, w, b, c))


# ---------------------------------------------------------------------------
# 1-D root finding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RootInfo:
    root: float
    iterations: int
    bracket: tuple[float, float]
    method: str


def bisection_bound(span: float, eps_root: float) -> int:
    """Maximal iteration count allowed for a bracket of width ``span``."""
    if span <= eps_root:
        return 2
    return math.ceil(math.log2(span / eps_root)) + 2


def bisect_root(f: Callable[[float], float], t0: float, t1: float, cfg: SolverConfig = DEFAULT_CONFIG,
                *, eps_root: float | None = None, eps_value: float | None = None, f0=None, f1=None,
                full_output: bool = False):
    """Root of ``f`` in ``[t0, t1]`` by sign-based bisection.

    Stops when ``|f(mid)| <= eps_value`` or the bracket is narrower than
    ``eps_root``. With ``full_output`` the final bracket is returned too, with
    ``bracket[0]`` on the side of ``f(t0)``'s sign.
    """
    eps_root = cfg.eps_root if eps_root is None else eps_root
    eps_value = cfg.eps_value if eps_value is None else eps_value
    lo, hi = float(t0), float(t1)
    flo = f(lo) if f0 is None else f0
    fhi = f(hi) if f1 is None else f1

    def done(root, it, a, b):
        return RootInfo(root, it, (a, b), "bisection") if full_output else root

    if flo == 0:
        return done(lo, 0, lo, lo)
    if fhi == 0:
        return done(hi, 0, hi, hi)
    if np.sign(flo) == np.sign(fhi) or not (np.isfinite(flo) and np.isfinite(fhi)):
        raise BracketError(f"no sign change on [{t0}, {t1}]: f = {flo!r}, {fhi!r}")
    side = np.sign(flo)
    it = 0
    while abs(hi - lo) > eps_root and it < cfg.max_iter:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        fm = f(mid)
        it += 1
        if abs(fm) <= eps_value:
            return done(mid, it, mid, mid)
        if np.sign(fm) == side:
            lo = mid
        else:
            hi = mid
    return done(0.5 * (lo + hi), it, lo, hi)


def newton_root(f: Callable[[float], float], t_init: float, t0: float, t1: float,
                cfg: SolverConfig = DEFAULT_CONFIG, df: Callable[[float], float] | None = None,
                *, full_output: bool = False):
    """Newton's method inside ``[t0, t1]``, falling back to bisection.

    Bisection takes over when an iterate leaves the bracket, the derivative
    is flat, or an iterate fails to halve ``|f|`` (slow convergence near
    multiple roots).
    """
    if not t0 <= t_init <= t1:
        raise InvalidInputError("initial guess outside the bracket")

    def deriv(t):
        if df is not None:
            return df(t)
        h = max(1e-7, 1e-7 * abs(t))
        return (f(t + h) - f(t - h)) / (2 * h)

    def fallback(it):
        info = bisect_root(f, t0, t1, cfg, full_output=True)
        if full_output:
            return RootInfo(info.root, it + info.iterations, info.bracket, "newton->bisection")
        return info.root

    t = float(t_init)
    ft = f(t)
    for it in range(1, cfg.max_iter + 1):
        if abs(ft) <= cfg.eps_value:
            return RootInfo(t, it, (t, t), "newton") if full_output else t
        d = deriv(t)
        if not np.isfinite(d) or abs(d) < FLAT_DERIVATIVE:
            return fallback(it)
        t_new = t - ft / d
        if not t0 <= t_new <= t1:
            return fallback(it)
        f_new = f(t_new)
        if abs(t_new - t) <= cfg.eps_root and abs(f_new) <= abs(ft):
            return RootInfo(t_new, it, (t_new, t_new), "newton") if full_output else t_new
        if abs(f_new) > 0.5 * abs(ft):
            return fallback(it)
        t, ft = t_new, f_new
    return fallback(cfg.max_iter)


# ---------------------------------------------------------------------------
# 1-D minimisation
# ---------------------------------------------------------------------------


def sample_count(span: float, cfg: SolverConfig) -> int:
    return max(8, math.ceil(cfg.time_samples_per_unit * span))


def _golden_iterations(width: float, eps: float) -> int:
    if width <= eps:
        return 0
    return math.ceil(math.log(eps / width) / math.log(INV_PHI))


def minimize_1d(f: Callable[[float], float], t0: float, t1: float,
                cfg: SolverConfig = DEFAULT_CONFIG) -> tuple[float, float]:
    """Global-ish minimum: uniform samples, then golden section around the best one."""
    t0, t1 = float(t0), float(t1)
    if t1 < t0:
        raise InvalidInputError("empty interval")
    if t1 == t0:
        return t0, float(f(t0))
    ts = np.linspace(t0, t1, sample_count(t1 - t0, cfg))
    vals = np.array([f(t) for t in ts])
    k = int(np.argmin(vals))
    best_t, best_v = float(ts[k]), float(vals[k])
    a, b = ts[max(k - 1, 0)], ts[min(k + 1, len(ts) - 1)]
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(min(_golden_iterations(b - a, cfg.eps_root), cfg.max_iter)):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    for t, v in ((c, fc), (d, fd)):
        if v < best_v:
            best_t, best_v = float(t), float(v)
    return best_t, best_v


def minimize_1d_batch(F: Callable[[Array, Array], Array], t0, t1, cfg: SolverConfig = DEFAULT_CONFIG,
                      *, refine: bool = True) -> tuple[Array, Array]:
    """Row-wise :func:`minimize_1d` for many intervals at once.

    ``F(ts, rows)`` evaluates the function of row ``rows[k]`` at ``ts[k]``.
    Returns ``(t_best, f_best)`` per row.
    """
    t0 = np.asarray(t0, dtype=float).reshape(-1)
    t1 = np.asarray(t1, dtype=float).reshape(-1)
    m = len(t0)
    if m == 0:
        return np.empty(0), np.empty(0)
    span = t1 - t0
    counts = np.where(span > 0, np.maximum(8, np.ceil(cfg.time_samples_per_unit * span)), 1).astype(int)
    rows = np.repeat(np.arange(m), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    local = np.arange(len(rows)) - starts[rows]
    denom = np.maximum(counts - 1, 1)[rows]
    ts = t0[rows] + span[rows] * (local / denom)
    vals = F(ts, rows)
    # argmin per row
    order = np.lexsort((vals, rows))
    first = order[starts]
    best_t, best_v = ts[first].copy(), vals[first].copy()
    if not refine:
        return best_t, best_v
    k = local[first]
    step = np.where(counts > 1, span / denom[first], 0.0)
    a = np.maximum(t0, best_t - step * (k > 0))
    b = np.minimum(t1, best_t + step * (k < counts - 1))
    width = float(np.max(b - a))
    n_iter = min(_golden_iterations(width, cfg.eps_root), cfg.max_iter)
    if n_iter == 0:
        return best_t, best_v
    idx = np.arange(m)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = F(c, idx), F(d, idx)
    for _ in range(n_iter):
        left = fc < fd
        # left: keep [a, d]; right: keep [c, b]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = np.where(left, b - INV_PHI * (b - a), d)
        new_d = np.where(left, c, a + INV_PHI * (b - a))
        new_fc = np.where(left, np.nan, fd)
        new_fd = np.where(left, fc, np.nan)
        probe = np.where(left, new_c, new_d)
        fp = F(probe, idx)
        fc = np.where(left, fp, new_fc)
        fd = np.where(left, new_fd, fp)
        c, d = new_c, new_d
    for t, v in ((c, fc), (d, fd)):
        better = v < best_v
        best_t = np.where(better, t, best_t)
        best_v = np.where(better, v, best_v)
    return best_t, best_v


# ---------------------------------------------------------------------------
# symmetric 3x3 eigenvalues
# ---------------------------------------------------------------------------


def _check_symmetric(S: Array) -> None:
    scale = max(1.0, float(np.max(np.abs(S))))
    if np.max(np.abs(S - np.swapaxes(S, -1, -2))) > 1e-9 * scale:
        raise InvalidInputError("matrix is not symmetric")


def min_eigenvalues_sym3(S) -> Array:
    """Smallest eigenvalue of each symmetric 3x3 matrix in ``S`` (shape ``(..., 3, 3)``).

    Trigonometric closed form for the roots of the characteristic cubic.
    """
    S = np.asarray(S, dtype=float)
    _check_symmetric(S)
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    q = np.trace(S, axis1=-2, axis2=-1) / 3.0
    p1 = S[..., 0, 1] ** 2 + S[..., 0, 2] ** 2 + S[..., 1, 2] ** 2
    p2 = ((S[..., 0, 0] - q) ** 2 + (S[..., 1, 1] - q) ** 2 + (S[..., 2, 2] - q) ** 2 + 2 * p1)
    p = np.sqrt(p2 / 6.0)
    safe = np.where(p > 0, p, 1.0)
    B = (S - q[..., None, None] * np.eye(3)) / safe[..., None, None]
    r = np.clip(np.linalg.det(B) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    lam = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    return np.where(p > 0, lam, q)


def min_eigenvalue_sym3(S) -> float:
    S = np.asarray(S, dtype=float)
    if S.shape != (3, 3):
        raise InvalidInputError("expected a 3x3 matrix")
    return float(min_eigenvalues_sym3(S))


def min_eigenpair_sym3(S) -> tuple[float, Array]:
    """Smallest eigenvalue and a unit eigenvector.

    The eigenvector is the largest cross product of two rows of ``S - lam I``;
    when those rows are nearly parallel (repeated eigenvalue) any unit vector
    in the null space is returned via ``eigh``.
    """
    S = np.asarray(S, dtype=float)
    lam = min_eigenvalue_sym3(S)
    M = S - lam * np.eye(3)
    crosses = np.array([np.cross(M[0], M[1]), np.cross(M[0], M[2]), np.cross(M[1], M[2])])
    norms = np.linalg.norm(crosses, axis=1)
    k = int(np.argmax(norms))
    scale = max(float(np.linalg.norm(M)), 1e-300)
    if norms[k] > 1e-6 * scale * scale:
        return lam, crosses[k] / norms[k]
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    return lam, V[:, 0]
