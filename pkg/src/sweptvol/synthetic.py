"""Seeded generators of oriented point clouds with known geometry."""

from __future__ import annotations

import numpy as np

from .geometry import OrientedPointCloud


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sphere_cloud(n: int, radius: float = 1.0, centre=(0.0, 0.0, 0.0), seed=0,
                 inward: bool = False) -> OrientedPointCloud:
    rng = _rng(seed)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    pts = np.asarray(centre, dtype=float) + radius * d
    return OrientedPointCloud(pts, -d if inward else d)


def fibonacci_sphere_cloud(n: int, radius: float = 1.0, centre=(0.0, 0.0, 0.0)) -> OrientedPointCloud:
    """Near-uniform deterministic sphere sampling."""
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    r = np.sqrt(1 - z * z)
    phi = np.pi * (1 + 5**0.5) * k
    d = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    return OrientedPointCloud(np.asarray(centre, dtype=float) + radius * d, d)


def cylinder_cloud(n: int, radius: float = 1.0, half_length: float = 1.5, seed=0) -> OrientedPointCloud:
    """Closed cylinder ``y² + z² <= r²``, ``|x| <= L``; samples spread by area."""
    rng = _rng(seed)
    side = 2 * np.pi * radius * 2 * half_length
    cap = np.pi * radius**2
    n_cap = int(round(n * cap / (side + 2 * cap)))
    n_side = n - 2 * n_cap
    phi = rng.uniform(0, 2 * np.pi, n_side)
    x = rng.uniform(-half_length, half_length, n_side)
    pts = [np.stack([x, radius * np.cos(phi), radius * np.sin(phi)], 1)]
    nrm = [np.stack([np.zeros(n_side), np.cos(phi), np.sin(phi)], 1)]
    for s in (-1.0, 1.0):
        r = radius * np.sqrt(rng.uniform(0, 1, n_cap))
        a = rng.uniform(0, 2 * np.pi, n_cap)
        pts.append(np.stack([np.full(n_cap, s * half_length), r * np.cos(a), r * np.sin(a)], 1))
        nrm.append(np.tile([s, 0.0, 0.0], (n_cap, 1)))
    return OrientedPointCloud(np.vstack(pts), np.vstack(nrm))


def cylinder_signed_distance(X, radius: float = 1.0, half_length: float = 1.5):
    """Exact signed distance to the closed cylinder of :func:`cylinder_cloud`."""
    X = np.asarray(X, dtype=float).reshape(-1, 3)
    dr = np.linalg.norm(X[:, 1:], axis=1) - radius
    dx = np.abs(X[:, 0]) - half_length
    outside = np.hypot(np.maximum(dr, 0), np.maximum(dx, 0))
    return np.where((dr <= 0) & (dx <= 0), np.maximum(dr, dx), outside)


def _face_samples(rng, n, plane_normals, face, radius):
    """Points of the face ``p . n_face = 0`` inside every other half-space, within ``radius``."""
    nf = plane_normals[face]
    others = [m for k, m in enumerate(plane_normals) if k != face]
    out = []
    while sum(len(o) for o in out) < n:
        p = rng.uniform(-radius, radius, size=(4 * n, 3))
        p -= np.outer(p @ nf, nf)
        ok = np.linalg.norm(p, axis=1) <= radius
        for m in others:
            ok &= p @ m < 0
        out.append(p[ok])
    return np.vstack(out)[:n]


def polyhedral_corner_cloud(normals, n_per_face: int, radius: float = 1.0, seed=0,
                            concave: bool = False) -> OrientedPointCloud:
    """Faces of the cone ``{p : p . n_k <= 0 for all k}`` around the origin.

    With ``concave`` the solid is the complement and the normals flip.
    """
    rng = _rng(seed)
    N = np.asarray(normals, dtype=float)
    N = N / np.linalg.norm(N, axis=1, keepdims=True)
    pts, nrm = [], []
    for k in range(len(N)):
        p = _face_samples(rng, n_per_face, N, k, radius)
        pts.append(p)
        nrm.append(np.tile(-N[k] if concave else N[k], (len(p), 1)))
    return OrientedPointCloud(np.vstack(pts), np.vstack(nrm))


def dihedral_normals(opening_deg: float) -> np.ndarray:
    """Outward normals of a wedge with interior angle ``opening_deg`` along the z axis."""
    a = np.radians(180.0 - opening_deg) / 2
    return np.array([[np.cos(a), np.sin(a), 0.0], [np.cos(a), -np.sin(a), 0.0]])


def dihedral_cloud(n_per_face: int, opening_deg: float = 90.0, radius: float = 1.0, seed=0,
                   concave: bool = False) -> OrientedPointCloud:
    return polyhedral_corner_cloud(dihedral_normals(opening_deg), n_per_face, radius, seed, concave)


CUBE_CORNER_NORMALS = np.eye(3)


def cube_corner_cloud(n_per_face: int, radius: float = 1.0, seed=0) -> OrientedPointCloud:
    return polyhedral_corner_cloud(CUBE_CORNER_NORMALS, n_per_face, radius, seed)


def pyramid_normals(h: float = 0.6) -> np.ndarray:
    return np.array([[1, 0, h], [-1, 0, h], [0, 1, h], [0, -1, h]], dtype=float)


def pyramid_cloud(n_per_face: int, h: float = 0.6, radius: float = 1.0, seed=0) -> OrientedPointCloud:
    return polyhedral_corner_cloud(pyramid_normals(h), n_per_face, radius, seed)


def noisy_plane_cloud(n: int, sigma: float, size: float = 1.0, seed=0) -> OrientedPointCloud:
    rng = _rng(seed)
    xy = rng.uniform(-size, size, size=(n, 2))
    z = rng.normal(0, sigma, n)
    return OrientedPointCloud(np.column_stack([xy, z]), np.tile([0.0, 0.0, 1.0], (n, 1)))


def paraboloid_cloud(n: int, c20: float, c02: float, c11: float = 0.0, size: float = 0.5,
                     seed=0) -> OrientedPointCloud:
    """Graph ``z = c20 x² + c11 xy + c02 y²`` with upward normals."""
    rng = _rng(seed)
    x, y = rng.uniform(-size, size, size=(2, n))
    z = c20 * x * x + c11 * x * y + c02 * y * y
    g = np.stack([-(2 * c20 * x + c11 * y), -(c11 * x + 2 * c02 * y), np.ones(n)], 1)
    return OrientedPointCloud.from_arrays(np.column_stack([x, y, z]), g)
