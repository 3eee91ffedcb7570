"""Cut the capsule's swept volume out of a block and write the difference as a scalar grid."""

import argparse

import numpy as np

from sweptvol.geometry import Box3, LocalImplicitRep
from sweptvol.motion import capsule_example
from sweptvol.query import GridSpec, contains, subtract
from sweptvol.serialization import write_grid
from sweptvol.sweep import build_swept_rep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dims", type=int, default=48)
    ap.add_argument("--output", default="block_minus_sweep.svgrid")
    args = ap.parse_args()

    base, motion = capsule_example()
    swept = build_swept_rep(base, motion)
    obj = LocalImplicitRep.solid_box(Box3([-3.0, 2.0, -1.0], [3.0, 14.0, 1.0]))
    spec = GridSpec(obj.bound, (args.dims,) * 3)
    grid = subtract(obj, swept, spec)
    write_grid(args.output, spec.dims, spec.box, grid.values)
    cell = np.prod((spec.box.hi - spec.box.lo) / (np.array(spec.dims) - 1))
    kept = np.sum(grid.inside)
    in_block = obj.contains(spec.points())
    cut = np.sum(in_block & contains(swept, spec.points()))
    print(f"block samples {np.sum(in_block)} = kept {kept} + removed {cut}")
    print(f"remaining volume ~ {kept * cell:.3f} of {np.prod(spec.box.hi - spec.box.lo):.3f}")
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
