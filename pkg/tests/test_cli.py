import json

import numpy as np
import pytest

from sweptvol.cli import EXIT_INPUT, EXIT_OK, main
from sweptvol.geometry import write_xyzn
from sweptvol.serialization import read_grid, read_grid_ascii
from sweptvol.synthetic import sphere_cloud


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, [json.loads(line) for line in out.splitlines() if line.strip()], err


@pytest.fixture(scope="module")
def capsule_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("capsule")
    assert main(["example", "capsule", "--output-dir", str(d)]) == EXIT_OK
    assert main(["sweep", "--base", str(d / "capsule_base.json"), "--motion", str(d / "capsule_motion.json"),
                 "--output", str(d / "swept.json")]) == EXIT_OK
    return d


@pytest.fixture(scope="module")
def sphere_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cloud") / "sphere.xyzn"
    write_xyzn(path, sphere_cloud(1500, seed=0))
    return path


def test_implicitize_mpu(tmp_path, capsys, sphere_file):
    code, out, _ = _run(capsys, "implicitize", "--method", "mpu", "--input", sphere_file,
                        "--output", tmp_path / "rep.json")
    assert code == EXIT_OK
    assert out[0]["max_taubin_error"] < 1e-4 and out[0]["flagged"] == 0
    manifest = json.loads((tmp_path / "rep.json.manifest.json").read_text())
    assert manifest["inputs"]["cloud"]["sha256"]


def test_implicitize_slim_is_deterministic(tmp_path, capsys, sphere_file):
    for name in ("a.json", "b.json"):
        code, out, _ = _run(capsys, "implicitize", "--method", "slim", "--input", sphere_file,
                            "--output", tmp_path / name)
        assert code == EXIT_OK and out[0]["uncovered_points"] == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_implicitize_missing_normals_column(tmp_path, capsys):
    (tmp_path / "bad.xyzn").write_text("# header\n0 0 1 0 0 1\n1 0 0 1 0\n")
    code, _, err = _run(capsys, "implicitize", "--method", "mpu", "--input", tmp_path / "bad.xyzn",
                        "--output", tmp_path / "rep.json")
    assert code == EXIT_INPUT
    assert "bad.xyzn:3:" in err


def test_implicitize_missing_file(tmp_path, capsys):
    code, _, _ = _run(capsys, "implicitize", "--method", "mpu", "--input", tmp_path / "nope.xyzn",
                      "--output", tmp_path / "rep.json")
    assert code == EXIT_INPUT


def test_sweep_capsule(capsys, capsule_files):
    d = capsule_files
    code, out, _ = _run(capsys, "sweep", "--base", d / "capsule_base.json", "--motion", d / "capsule_motion.json",
                        "--output", d / "again.json")
    assert code == EXIT_OK and out[0]["cells"] >= 1 and out[0]["notes"] == []
    assert (d / "again.json").read_bytes() == (d / "swept.json").read_bytes()


def test_sweep_fast_verify(tmp_path, capsys, capsule_files):
    d = capsule_files
    code, out, _ = _run(capsys, "sweep", "--base", d / "capsule_base.json", "--motion", d / "capsule_motion.json",
                        "--output", tmp_path / "fast.json", "--fast", "--verify")
    assert code == EXIT_OK and out[0]["fast_contains_exact"] is True


def test_sweep_degenerate_motion_notes(tmp_path, capsys, capsule_files):
    (tmp_path / "still.json").write_text(json.dumps({"domain": [0.5, 0.5]}))
    code, out, err = _run(capsys, "sweep", "--base", capsule_files / "capsule_base.json",
                          "--motion", tmp_path / "still.json", "--output", tmp_path / "s.json")
    assert code == EXIT_OK and len(out[0]["notes"]) == 1
    assert err.startswith("note:")


def test_query_point(capsys, capsule_files):
    code, out, _ = _run(capsys, "query", "point", "0", "8", "0", "--swept", capsule_files / "swept.json")
    assert code == EXIT_OK and out[0]["inside"] is True
    code, out, _ = _run(capsys, "query", "point", "100", "100", "100", "--swept", capsule_files / "swept.json")
    assert out[0]["inside"] is False and out[0]["far"] is True


def test_query_points_file(tmp_path, capsys, capsule_files):
    (tmp_path / "p.txt").write_text("0 8 0\n# comment\n100 100 100\n")
    code, out, _ = _run(capsys, "query", "point", "--points-file", tmp_path / "p.txt",
                        "--swept", capsule_files / "swept.json")
    assert code == EXIT_OK and [o["inside"] for o in out] == [True, False]
    (tmp_path / "p.txt").write_text("0 8 0\n1 2\n")
    code, _, err = _run(capsys, "query", "point", "--points-file", tmp_path / "p.txt",
                        "--swept", capsule_files / "swept.json")
    assert code == EXIT_INPUT and "p.txt:2" in err


def test_query_malformed_coords(capsys, capsule_files):
    code, _, err = _run(capsys, "query", "point", "0", "x", "0", "--swept", capsule_files / "swept.json")
    assert code == EXIT_INPUT and "malformed" in err


def test_query_times_and_ray(capsys, capsule_files):
    code, out, _ = _run(capsys, "query", "times", "0", "8", "0", "--swept", capsule_files / "swept.json")
    (a, b), = out[0]["intervals"]
    assert a == pytest.approx(7 / 16, abs=1e-4) and b == pytest.approx(9 / 16, abs=1e-4)
    code, out, _ = _run(capsys, "query", "ray", "0", "-10", "0", "0", "1", "0", "--swept",
                        capsule_files / "swept.json")
    assert out[0]["hit"] == pytest.approx([0.0, -1.0, 0.0], abs=1e-3)
    code, out, _ = _run(capsys, "query", "ray", "0", "-10", "0", "0", "1", "0", "--all", "--swept",
                        capsule_files / "swept.json")
    assert [h["s"] for h in out[0]["hits"]] == pytest.approx([9.0, 27.0], abs=1e-3)


def test_export_grid(tmp_path, capsys, capsule_files):
    code, out, _ = _run(capsys, "query", "export-grid", "--swept", capsule_files / "swept.json",
                        "--dims", 64, 64, 64, "--output", tmp_path / "g.bin")
    assert code == EXIT_OK
    raw = (tmp_path / "g.bin").read_bytes()
    assert raw[:7] == b"SVGRID1"
    dims, box, values = read_grid(tmp_path / "g.bin")
    assert dims == (64, 64, 64) and len(values) == 64 ** 3
    assert out[0]["inside_samples"] == int(np.sum(values <= 0))


def test_subtract_ascii_far_object(tmp_path, capsys, capsule_files):
    code, out, err = _run(capsys, "query", "subtract", "--swept", capsule_files / "swept.json",
                          "--object", capsule_files / "capsule_base.json", "--dims", 8, 8, 8,
                          "--box", 40, 40, 40, 41, 41, 41, "--ascii", "--output", tmp_path / "g.txt")
    assert code == EXIT_OK
    dims, _, values = read_grid_ascii(tmp_path / "g.txt")
    assert dims == (8, 8, 8) and np.all(values > 0)


def test_subtract_self_is_empty(tmp_path, capsys, capsule_files):
    code, out, _ = _run(capsys, "query", "subtract", "--swept", capsule_files / "swept.json",
                        "--object", capsule_files / "swept.json", "--dims", 16, 16, 16, "--output", tmp_path / "g")
    assert code == EXIT_OK and out[0]["inside_samples"] == 0


def test_bad_thread_env(monkeypatch, capsys, capsule_files):
    monkeypatch.setenv("SWEPTVOL_THREADS", "zero")
    code, _, _ = _run(capsys, "query", "point", "0", "8", "0", "--swept", capsule_files / "swept.json")
    assert code == EXIT_INPUT
