"""Command-line interface: ``sweptvol implicitize|sweep|query|example``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import DomainError, InvalidInputError, SweptVolError
from .geometry import Box3, read_xyzn
from .motion import capsule_example
from .mpu import MpuParams, mpu_build
from .query import GridSpec, Ray, membership, ray_intersect_all, ray_intersect_first, sample_grid, subtract, \
    time_witnesses
from .serialization import (dumps, jsonable, load_motion, load_rep, load_swept, read_grid, save_rep, save_swept,
                            swept_from_dict, write_grid, write_grid_ascii)
from .slim import SlimParams, blended_field, slim_build
from .sweep import SweepParams, WeightGrid, build_swept_rep

log = logging.getLogger("sweptvol")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class NumericFailure(SweptVolError):
    """The run finished but produced fits or structures that fail their quality checks."""


def thread_cap() -> int:
    raw = os.environ.get("SWEPTVOL_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InvalidInputError(f"SWEPTVOL_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise InvalidInputError("SWEPTVOL_THREADS must be at least 1")
    return n


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(output, argv, inputs: dict, params: dict, seed, timings: dict, outputs: list) -> Path:
    manifest = {
        "command": ["sweptvol", *argv],
        "inputs": {name: {"path": str(p), "sha256": file_hash(p)} for name, p in inputs.items()},
        "parameters": params,
        "seed": seed,
        "threads": thread_cap(),
        "timings": timings,
        "outputs": [str(p) for p in outputs],
    }
    path = Path(str(output) + ".manifest.json")
    path.write_text(dumps(manifest))
    return path


def emit(obj, stream=None) -> None:
    stream = sys.stdout if stream is None else stream
    stream.write(json.dumps(jsonable(obj), allow_nan=True) + "\n")


# ---------------------------------------------------------------------------
# implicitize
# ---------------------------------------------------------------------------


def cmd_implicitize(args, argv) -> int:
    t0 = time.perf_counter()
    cloud = read_xyzn(args.input)
    if args.method == "mpu":
        params = MpuParams(alpha=args.alpha, n_min=args.nmin, eps0=args.eps0, max_depth=args.max_depth)
        rep = mpu_build(cloud, params)
        seed = None
    else:
        params = SlimParams(rho0_fraction=args.rho0, t_mdl=args.t_mdl, rng_seed=args.seed,
                            levels_kept=args.levels)
        rep = slim_build(cloud, params)
        seed = args.seed
    build = time.perf_counter() - t0
    save_rep(rep, args.output)
    write_manifest(args.output, argv, {"cloud": args.input}, asdict(params), seed, {"build": build},
                   [args.output])
    summary = {"patches": len(rep), "method": args.method}
    failed = False
    if args.method == "mpu":
        summary["max_taubin_error"] = rep.info["max_taubin_error"]
        summary["flagged"] = len(rep.info["flagged"])
        failed = summary["flagged"] > 0
    else:
        values, covered = blended_field(rep, cloud.points)
        rho0 = rep.info["rho0"]
        summary["covered_fraction"] = float(np.mean(covered))
        summary["uncovered_points"] = int(len(rep.uncovered(cloud.points)))
        summary["within_1pct_rho0"] = float(np.mean(np.abs(values) < 0.01 * rho0))
        summary["forced"] = len(rep.info["forced"])
        failed = any(r["forced"] == "floor" for r in rep.info["acceptances"])
    emit(summary)
    if failed:
        raise NumericFailure("some patches were accepted without meeting the fit criterion")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _weight_from_grid(path) -> WeightGrid:
    dims, box, values = read_grid(path)
    nx, ny, nz = dims
    return WeightGrid(box.lo, box.hi, values.reshape(nz, ny, nx).transpose(2, 1, 0))


def _intervals_contained(inner: list, outer: list, slack: float) -> bool:
    return all(any(o0 - slack <= i0 and i1 <= o1 + slack for o0, o1 in outer) for i0, i1 in inner)


def verify_fast_contains_exact(base, motion, params: SweepParams, exact_rep) -> bool:
    """Rebuild in fast mode on the same cells' areas and check every exact interval is covered."""
    from .sweep import _ContactProblem

    lo = np.array([c.box.lo for c in exact_rep.cells for _ in c.areas]).reshape(-1, 3)
    hi = np.array([c.box.hi for c in exact_rep.cells for _ in c.areas]).reshape(-1, 3)
    areas = np.concatenate([c.areas for c in exact_rep.cells]) if len(lo) else np.empty(0, int)
    if len(areas) == 0:
        return True
    fast = _ContactProblem(base, motion, lo, hi, areas,
                           SweepParams(**{**params.__dict__, "fast_mode": True}))
    windows = [np.array([motion.domain])] * len(areas)
    got = fast.solve(windows)
    k = 0
    for c in exact_rep.cells:
        for j in range(len(c)):
            if not _intervals_contained([tuple(c.intervals[j])], [tuple(r) for r in got[k]], params.contact_tol):
                return False
            k += 1
    return True


def cmd_sweep(args, argv) -> int:
    base = load_rep(args.base)
    motion = load_motion(args.motion)
    weight = _weight_from_grid(args.weight_grid) if args.weight_grid else None
    params = SweepParams(time_samples=args.time_samples, contact_tol=args.contact_tol, fast_mode=args.fast,
                         weight=weight, max_cells=args.max_cells, seed_splits_along_path=args.seed_splits)
    t0 = time.perf_counter()
    rep = build_swept_rep(base, motion, params)
    timings = dict(rep.info.get("timings", {}))
    timings["total"] = time.perf_counter() - t0
    save_swept(rep, args.output)
    inputs = {"base": args.base, "motion": args.motion}
    if args.weight_grid:
        inputs["weight_grid"] = args.weight_grid
    pdict = {k: v for k, v in params.__dict__.items() if k not in ("weight", "solver")}
    pdict["solver"] = asdict(params.solver)
    write_manifest(args.output, argv, inputs, pdict, None, timings, [args.output])
    summary = {"cells": len(rep.cells), "mean_entries": rep.info["mean_entries"], "cost": rep.info["cost"],
               "notes": rep.info["notes"]}
    for note in rep.info["notes"]:
        print(f"note: {note}", file=sys.stderr)
    if args.verify:
        exact_rep = rep if not args.fast else build_swept_rep(base, motion, SweepParams(
            **{**params.__dict__, "fast_mode": False}))
        summary["fast_contains_exact"] = verify_fast_contains_exact(base, motion, params, exact_rep)
    emit(summary)
    if args.verify and not summary["fast_contains_exact"]:
        raise NumericFailure("fast-mode intervals do not cover the exact intervals")
    return EXIT_OK


# ---------------------------------------------------------------------------
# query
# ---------------------------------------------------------------------------


def _coords(values, n, what) -> np.ndarray:
    if len(values) != n:
        raise InvalidInputError(f"{what} needs {n} numbers, got {len(values)}")
    try:
        out = np.array([float(v) for v in values])
    except ValueError:
        raise InvalidInputError(f"{what}: malformed coordinate in {values}") from None
    if not np.all(np.isfinite(out)):
        raise InvalidInputError(f"{what}: coordinates must be finite")
    return out


def _points_arg(args) -> np.ndarray:
    if args.points_file:
        rows = []
        for lineno, line in enumerate(Path(args.points_file).read_text().splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append(_coords(line.split(), 3, f"{args.points_file}:{lineno}"))
            except (InvalidInputError, DomainError) as e:
                raise InvalidInputError(str(e)) from None
        return np.array(rows).reshape(-1, 3)
    if not args.coords:
        raise InvalidInputError("give a point as three numbers or --points-file")
    return _coords(args.coords, 3, "point")[None]


def _grid_box(args, default: Box3) -> Box3:
    if args.box:
        b = _coords(args.box, 6, "--box")
        return Box3(b[:3], b[3:])
    return default


def _write_any_grid(args, spec: GridSpec, values) -> None:
    if args.ascii:
        write_grid_ascii(args.output, spec.dims, spec.box, values)
    else:
        write_grid(args.output, spec.dims, spec.box, values)


def _load_any(path):
    data = json.loads(Path(path).read_text())
    if str(data.get("format", "")).startswith("sweptvol/swept"):
        return swept_from_dict(data)
    return load_rep(path)


def cmd_query(args, argv) -> int:
    rep = load_swept(args.swept)
    if args.query == "point":
        X = _points_arg(args)
        m = membership(rep, X)
        for k in range(len(X)):
            r = m[k]
            emit({"point": X[k], "inside": r.inside, "far": r.far, "distance": r.signed_distance,
                  "exact": r.exact, "witness": None if r.witness is None else
                  {"area": r.witness[0], "t": r.witness[1]}})
    elif args.query == "times":
        X = _points_arg(args)
        for P in X:
            emit({"point": P, "intervals": time_witnesses(rep, P)})
    elif args.query == "ray":
        v = _coords(args.coords, 6, "ray")
        ray = Ray.toward(v[:3], v[3:])
        if args.all:
            hits = ray_intersect_all(rep, ray)
            emit({"ray": v, "hits": [{"point": p, "s": s, "grazing": g}
                                     for p, s, g in zip(hits.points, hits.s, hits.grazing)]})
        else:
            p = ray_intersect_first(rep, ray)
            emit({"ray": v, "hit": p})
    elif args.query in ("subtract", "export-grid"):
        dims = tuple(int(d) for d in args.dims)
        t0 = time.perf_counter()
        inputs = {"swept": args.swept}
        if args.query == "subtract":
            obj = _load_any(args.object)
            inputs["object"] = args.object
            spec = GridSpec(_grid_box(args, obj.bound), dims)
            grid = subtract(obj, rep, spec)
        else:
            spec = GridSpec(_grid_box(args, rep.bound), dims)
            grid = sample_grid(rep, spec)
        _write_any_grid(args, spec, grid.values)
        write_manifest(args.output, argv, inputs, {"dims": dims, "box": [spec.box.lo, spec.box.hi],
                                                    "ascii": args.ascii},
                       None, {"sample": time.perf_counter() - t0}, [args.output])
        for w in grid.warnings:
            print(f"warning: {w}", file=sys.stderr)
        emit({"output": args.output, "dims": dims, "inside_samples": int(np.sum(grid.inside)),
              "warnings": list(grid.warnings)})
    return EXIT_OK


# ---------------------------------------------------------------------------
# example
# ---------------------------------------------------------------------------


def cmd_example(args, argv) -> int:
    base, motion = capsule_example()
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_rep(base, out / "capsule_base.json")
    motion.save(out / "capsule_motion.json")
    emit({"base": out / "capsule_base.json", "motion": out / "capsule_motion.json"})
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sweptvol", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    imp = sub.add_parser("implicitize", help="fit a local implicit representation to an oriented point cloud")
    imp.add_argument("--method", choices=("mpu", "slim"), required=True)
    imp.add_argument("--input", required=True, help="cloud file with lines 'x y z nx ny nz'")
    imp.add_argument("--output", required=True)
    d_mpu, d_slim = MpuParams(), SlimParams()
    imp.add_argument("--eps0", type=float, default=d_mpu.eps0)
    imp.add_argument("--nmin", type=int, default=d_mpu.n_min)
    imp.add_argument("--alpha", type=float, default=d_mpu.alpha)
    imp.add_argument("--max-depth", type=int, default=d_mpu.max_depth)
    imp.add_argument("--t-mdl", type=float, default=d_slim.t_mdl)
    imp.add_argument("--rho0", type=float, default=d_slim.rho0_fraction,
                     help="initial ball radius as a fraction of the bounding-box diagonal")
    imp.add_argument("--seed", type=int, default=d_slim.rng_seed)
    imp.add_argument("--levels", action="store_true", help="keep rejected fits of every level")
    imp.set_defaults(func=cmd_implicitize)

    sw = sub.add_parser("sweep", help="build the swept-volume structure of a representation under a motion")
    d_sw = SweepParams()
    sw.add_argument("--base", required=True)
    sw.add_argument("--motion", required=True)
    sw.add_argument("--output", required=True)
    sw.add_argument("--fast", action="store_true", help="face-only contact tests (over-covers)")
    sw.add_argument("--time-samples", type=int, default=d_sw.time_samples)
    sw.add_argument("--contact-tol", type=float, default=d_sw.contact_tol)
    sw.add_argument("--max-cells", type=int, default=d_sw.max_cells)
    sw.add_argument("--weight-grid", help="SVGRID1 file of non-negative weights")
    sw.add_argument("--seed-splits", action="store_true", help="seed splits along the path of the base centre")
    sw.add_argument("--verify", action="store_true", help="check fast-mode intervals cover exact ones")
    sw.set_defaults(func=cmd_sweep)

    q = sub.add_parser("query", help="query a swept volume")
    qs = q.add_subparsers(dest="query", required=True)
    for name, help_ in (("point", "membership of points"), ("times", "time intervals containing a point")):
        s = qs.add_parser(name, help=help_)
        s.add_argument("coords", nargs="*")
        s.add_argument("--points-file")
        s.add_argument("--swept", required=True)
    r = qs.add_parser("ray", help="ray intersections")
    r.add_argument("coords", nargs=6, metavar="V", help="origin x y z, direction x y z")
    r.add_argument("--all", action="store_true")
    r.add_argument("--swept", required=True)
    for name in ("subtract", "export-grid"):
        s = qs.add_parser(name)
        s.add_argument("--swept", required=True)
        if name == "subtract":
            s.add_argument("--object", required=True, help="representation or swept-volume file")
        s.add_argument("--dims", nargs=3, type=int, default=(64, 64, 64))
        s.add_argument("--box", nargs=6, metavar="B", help="lo x y z, hi x y z")
        s.add_argument("--output", required=True)
        s.add_argument("--ascii", action="store_true")
    q.set_defaults(func=cmd_query)

    ex = sub.add_parser("example", help="write example inputs")
    exs = ex.add_subparsers(dest="example", required=True)
    cap = exs.add_parser("capsule", help="three-ball capsule and its screw motion")
    cap.add_argument("--output-dir", default=".")
    ex.set_defaults(func=cmd_example)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        thread_cap()
        return args.func(args, argv)
    except (InvalidInputError, DomainError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except NumericFailure as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except SweptVolError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
