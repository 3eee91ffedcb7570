"""Fit an MPU representation to a sampled sphere and measure its fit error and sign accuracy."""

import argparse
import time

import numpy as np

from sweptvol.mpu import MpuParams, mpu_build
from sweptvol.synthetic import sphere_cloud


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=10_000)
    ap.add_argument("--eps0", type=float, default=MpuParams().eps0)
    args = ap.parse_args()

    cloud = sphere_cloud(args.points, seed=0)
    start = time.perf_counter()
    rep = mpu_build(cloud, MpuParams(eps0=args.eps0))
    print(f"{len(rep)} leaf cubes in {time.perf_counter() - start:.2f}s")
    print(f"max Taubin error {rep.info['max_taubin_error']:.3e}  flagged {len(rep.info['flagged'])}")

    rng = np.random.default_rng(1)
    X = rng.uniform(-1.5, 1.5, (20_000, 3))
    r = np.linalg.norm(X, axis=1)
    X, r = X[np.abs(r - 1.0) > 0.02], r[np.abs(r - 1.0) > 0.02]
    agree = np.mean(rep.contains(X) == (r <= 1.0))
    print(f"sign agreement off a 0.02 band: {agree:.5f}")
    print(f"max |f| on the input points: {np.max(np.abs(rep.field(cloud.points))):.3e}")


if __name__ == "__main__":
    main()
