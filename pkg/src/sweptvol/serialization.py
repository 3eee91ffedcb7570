"""JSON files for representations and swept volumes; binary and text scalar grids."""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, ParseError
from .geometry import (Ball3, BivariatePatch, Box3, LocalImplicitRep, MinOfPatches, OrientedPointCloud, Quadric3,
                       RepKind)
from .motion import RigidMotion
from .solvers import SolverConfig
from .sweep import SplitTree, SweepParams, SweptCell, SweptVolumeRep, WeightGrid

FORMAT_REP = "sweptvol/local-implicit/1"
FORMAT_SWEPT = "sweptvol/swept/1"
GRID_MAGIC = b"SVGRID1"
GRID_ASCII_MAGIC = "SVGRID1-ASCII"


def jsonable(obj):
    """Plain JSON types for numpy values, dataclasses and enums."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, RepKind):
        return obj.value
    if isinstance(obj, Path):
        return str(obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return jsonable(dataclasses.asdict(obj))
    return obj


def dumps(data) -> str:
    return json.dumps(jsonable(data), indent=1, sort_keys=False, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# areas and procedures
# ---------------------------------------------------------------------------


def area_to_dict(area) -> dict:
    if isinstance(area, Box3):
        return {"box": [area.lo.tolist(), area.hi.tolist()]}
    return {"ball": [area.centre.tolist(), area.radius]}


def area_from_dict(d: dict):
    if "box" in d:
        return Box3(*d["box"])
    if "ball" in d:
        return Ball3(*d["ball"])
    raise InvalidInputError(f"unknown area record {sorted(d)}")


def _patch_to_dict(p: BivariatePatch) -> dict:
    return {"origin": p.origin.tolist(), "u": p.u.tolist(), "v": p.v.tolist(), "n": p.n.tolist(),
            "coeffs": p.coeffs.tolist()}


def procedure_to_dict(proc) -> dict:
    if isinstance(proc, Quadric3):
        return {"quadric": proc.coeffs.tolist()}
    if isinstance(proc, BivariatePatch):
        return {"patch": _patch_to_dict(proc)}
    if isinstance(proc, MinOfPatches):
        return {"pieces": [_patch_to_dict(p) for p in proc.patches], "mode": proc.mode}
    raise InvalidInputError(f"cannot serialise procedure {type(proc).__name__}")


def procedure_from_dict(d: dict):
    if "quadric" in d:
        return Quadric3(d["quadric"])
    if "patch" in d:
        return BivariatePatch(**d["patch"])
    if "pieces" in d:
        return MinOfPatches(tuple(BivariatePatch(**p) for p in d["pieces"]), d.get("mode", "min"))
    raise InvalidInputError(f"unknown procedure record {sorted(d)}")


# ---------------------------------------------------------------------------
# local implicit representations
# ---------------------------------------------------------------------------


def rep_to_dict(rep: LocalImplicitRep) -> dict:
    d = {
        "format": FORMAT_REP,
        "kind": rep.kind.value,
        "bound": [rep.bound.lo.tolist(), rep.bound.hi.tolist()],
        "patches": [{"area": area_to_dict(a), "procedure": procedure_to_dict(p)}
                    for a, p in zip(rep.areas, rep.procedures)],
        "info": jsonable(rep.info),
    }
    if rep.fallback_cloud is not None:
        d["fallback_cloud"] = {"points": rep.fallback_cloud.points.tolist(),
                               "normals": rep.fallback_cloud.normals.tolist()}
    if rep.levels is not None:
        d["levels"] = [[{"area": area_to_dict(a), "procedure": procedure_to_dict(p)} for a, p in level]
                       for level in rep.levels]
    return d


def rep_from_dict(d: dict) -> LocalImplicitRep:
    if d.get("format") != FORMAT_REP:
        raise InvalidInputError(f"not a local implicit representation file (format {d.get('format')!r})")
    try:
        areas = tuple(area_from_dict(p["area"]) for p in d["patches"])
        procs = tuple(procedure_from_dict(p["procedure"]) for p in d["patches"])
        cloud = None
        if "fallback_cloud" in d:
            cloud = OrientedPointCloud(d["fallback_cloud"]["points"], d["fallback_cloud"]["normals"])
        levels = None
        if "levels" in d:
            levels = tuple(tuple((area_from_dict(p["area"]), procedure_from_dict(p["procedure"])) for p in level)
                           for level in d["levels"])
        return LocalImplicitRep(RepKind(d["kind"]), areas, procs, Box3(*d["bound"]), fallback_cloud=cloud,
                                levels=levels, info=d.get("info", {}))
    except (KeyError, TypeError) as e:
        raise InvalidInputError(f"malformed representation record: {e}") from e


def save_rep(rep: LocalImplicitRep, path) -> None:
    Path(path).write_text(dumps(rep_to_dict(rep)))


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, line=e.lineno, path=str(path)) from e
    except OSError as e:
        raise InvalidInputError(f"cannot read {path}: {e}") from e


def load_rep(path) -> LocalImplicitRep:
    return rep_from_dict(_load_json(path))


def load_motion(path) -> RigidMotion:
    return RigidMotion.from_dict(_load_json(path))


# ---------------------------------------------------------------------------
# swept volumes
# ---------------------------------------------------------------------------


def weight_to_dict(w: WeightGrid | None):
    if w is None:
        return None
    return {"lo": w.lo.tolist(), "hi": w.hi.tolist(), "values": w.values.tolist()}


def weight_from_dict(d) -> WeightGrid | None:
    if d is None:
        return None
    return WeightGrid(d["lo"], d["hi"], np.asarray(d["values"], dtype=float))


def params_to_dict(p: SweepParams) -> dict:
    d = {f.name: getattr(p, f.name) for f in dataclasses.fields(p) if f.name not in ("weight", "solver")}
    d["weight"] = weight_to_dict(p.weight)
    d["solver"] = dataclasses.asdict(p.solver)
    return d


def params_from_dict(d: dict) -> SweepParams:
    d = dict(d)
    d["weight"] = weight_from_dict(d.get("weight"))
    d["solver"] = SolverConfig(**d.get("solver", {}))
    return SweepParams(**d)


def swept_to_dict(rep: SweptVolumeRep) -> dict:
    t = rep.tree
    return {
        "format": FORMAT_SWEPT,
        "bound": [rep.bound.lo.tolist(), rep.bound.hi.tolist()],
        "base": rep_to_dict(rep.base),
        "motion": rep.motion.to_dict(),
        "params": params_to_dict(rep.params),
        "tree": {"axis": t.axis.tolist(), "pos": t.pos.tolist(), "left": t.left.tolist(),
                 "right": t.right.tolist(), "cell": t.cell.tolist()},
        "cells": [{"box": [c.box.lo.tolist(), c.box.hi.tolist()], "areas": c.areas.tolist(),
                   "intervals": c.intervals.tolist()} for c in rep.cells],
        # wall-clock timings would make repeated runs differ; they go to run manifests instead
        "info": jsonable({k: v for k, v in rep.info.items() if k != "timings"}),
    }


def swept_from_dict(d: dict) -> SweptVolumeRep:
    if d.get("format") != FORMAT_SWEPT:
        raise InvalidInputError(f"not a swept volume file (format {d.get('format')!r})")
    try:
        cells = tuple(SweptCell(Box3(*c["box"]), np.asarray(c["areas"], dtype=int),
                                np.asarray(c["intervals"], dtype=float).reshape(-1, 2)) for c in d["cells"])
        tree = SplitTree(**d["tree"])
        return SweptVolumeRep(Box3(*d["bound"]), tree, cells, rep_from_dict(d["base"]),
                              RigidMotion.from_dict(d["motion"]), params_from_dict(d["params"]), d.get("info", {}))
    except (KeyError, TypeError) as e:
        raise InvalidInputError(f"malformed swept volume record: {e}") from e


def save_swept(rep: SweptVolumeRep, path) -> None:
    Path(path).write_text(dumps(swept_to_dict(rep)))


def load_swept(path) -> SweptVolumeRep:
    return swept_from_dict(_load_json(path))


# ---------------------------------------------------------------------------
# scalar grids
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<7s3I6d")


def write_grid(path, dims, box: Box3, values) -> None:
    """Binary grid: magic, 3 x uint32 dims, 6 x float64 bounds, float64 samples x-fastest."""
    values = np.ascontiguousarray(values, dtype="<f8").reshape(-1)
    dims = tuple(int(n) for n in dims)
    if len(values) != dims[0] * dims[1] * dims[2]:
        raise InvalidInputError("grid sample count does not match its dimensions")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(GRID_MAGIC, *dims, *box.lo, *box.hi))
        fh.write(values.tobytes())


def read_grid(path) -> tuple[tuple[int, int, int], Box3, np.ndarray]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ParseError("grid file shorter than its header", path=str(path))
    magic, nx, ny, nz, *b = _HEADER.unpack_from(data)
    if magic != GRID_MAGIC:
        raise ParseError(f"bad grid magic {magic!r}", path=str(path))
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if len(values) != nx * ny * nz:
        raise ParseError(f"expected {nx * ny * nz} samples, found {len(values)}", path=str(path))
    return (nx, ny, nz), Box3(b[:3], b[3:]), values.copy()


def write_grid_ascii(path, dims, box: Box3, values) -> None:
    values = np.asarray(values, dtype=float).reshape(-1)
    lines = [GRID_ASCII_MAGIC, " ".join(str(int(n)) for n in dims),
             " ".join(repr(float(x)) for x in (*box.lo, *box.hi))]
    lines += [repr(float(v)) for v in values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid_ascii(path) -> tuple[tuple[int, int, int], Box3, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != GRID_ASCII_MAGIC:
        raise ParseError("missing SVGRID1-ASCII header", line=1, path=str(path))
    try:
        dims = tuple(int(x) for x in lines[1].split())
        b = [float(x) for x in lines[2].split()]
        values = np.array([float(x) for x in lines[3:]])
    except (ValueError, IndexError) as e:
        raise ParseError(f"malformed grid text: {e}", path=str(path)) from e
    if len(dims) != 3 or len(b) != 6 or len(values) != dims[0] * dims[1] * dims[2]:
        raise ParseError("grid header and sample count disagree", path=str(path))
    return dims, Box3(b[:3], b[3:]), values
