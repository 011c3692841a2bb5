import json

import numpy as np
import pytest

from convexshape import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    return code, capsys.readouterr()


def test_solve_writes_outputs(tmp_path, capsys):
    code, out = run(capsys, "solve", "mahler_symmetric", "--out", str(tmp_path))
    assert code == 0
    assert {p.name for p in tmp_path.iterdir()} == {
        "mahler_symmetric.json", "mahler_symmetric_vertices.csv", "mahler_symmetric.svg"}
    d = json.loads((tmp_path / "mahler_symmetric.json").read_text())
    assert d["success"] and d["schema_version"] == 1
    assert d["metrics"]["objective"] == pytest.approx(8.0, rel=1e-4)
    V = np.loadtxt(tmp_path / "mahler_symmetric_vertices.csv", delimiter=",", skiprows=1)
    assert np.allclose(V, d["vertices"])
    svg = (tmp_path / "mahler_symmetric.svg").read_text()
    assert svg.count("<path") == 2
    assert "status=converged" in out.out


def test_solve_descriptor_file(tmp_path, capsys):
    desc = {"schema_version": 1, "name": "disk.v1", "parametrization": "support", "n": 32,
            "functional": {"name": "perimeter"},
            "constraints": [{"type": "inclusion", "inner": {"kind": "disk", "radius": 1.0}}]}
    f = tmp_path / "d.json"
    f.write_text(json.dumps(desc))
    code, _ = run(capsys, "solve", str(f), "--out", str(tmp_path / "o"))
    assert code == 0
    assert (tmp_path / "o" / "disk.v1.json").exists()


@pytest.mark.parametrize("text", ["{broken", json.dumps({"schema_version": 1, "n": 4})])
def test_invalid_descriptor_exits_2_without_files(tmp_path, capsys, text):
    f = tmp_path / "bad.json"
    f.write_text(text)
    code, out = run(capsys, "solve", str(f), "--out", str(tmp_path / "out"))
    assert code == 2
    assert "invalid descriptor" in out.err
    assert not (tmp_path / "out").exists()


def test_infeasible_descriptor_exits_2(tmp_path, capsys):
    desc = {"schema_version": 1, "name": "x", "parametrization": "support", "n": 32,
            "functional": {"name": "area"},
            "constraints": [{"type": "width", "lower": 2.0},
                            {"type": "inclusion", "outer": {"kind": "disk", "radius": 0.5}}]}
    f = tmp_path / "d.json"
    f.write_text(json.dumps(desc))
    code, out = run(capsys, "solve", str(f), "--out", str(tmp_path / "out"))
    assert code == 2 and "width" in out.err
    assert not (tmp_path / "out").exists()


def test_solver_failure_exit_3(tmp_path, capsys):
    desc = {"schema_version": 1, "name": "short", "parametrization": "support", "n": 64,
            "functional": {"name": "area"}, "optimizer": {"max_iter": 2},
            "constraints": [{"type": "constant_width", "width": 1.0}, {"type": "centering"}],
            "init": {"perturbation": 0.3}}
    f = tmp_path / "d.json"
    f.write_text(json.dumps(desc))
    code, _ = run(capsys, "solve", str(f), "--out", str(tmp_path))
    assert code == 3
    assert json.loads((tmp_path / "short.json").read_text())["success"] is False


def test_verify_writes_report(tmp_path, capsys):
    code, out = run(capsys, "verify", "--suite", "identities", "--out", str(tmp_path))
    assert code == 0
    rep = json.loads((tmp_path / "verify_identities.json").read_text())
    assert rep["passed"]
    assert "PASS identities/identity.rigorous_triangle_area" in out.out


def test_verify_failure_exit_4(tmp_path, capsys, monkeypatch):
    from convexshape import oracle
    real = oracle.rigorous_area_closed_form
    monkeypatch.setattr(oracle, "rigorous_area_closed_form", lambda *a: 1.01 * real(*a))
    code, out = run(capsys, "verify", "--suite", "identities", "--out", str(tmp_path))
    assert code == 4
    assert "FAIL identities/identity.rigorous_triangle_area" in out.out


def test_sample_reuleaux(tmp_path, capsys):
    f = tmp_path / "r.csv"
    assert run(capsys, "sample", "reuleaux", "--n", "240", "--out", str(f))[0] == 0
    data = np.loadtxt(f, delimiter=",")
    assert data.shape == (240, 2)
    from convexshape.support import convexity_constraints
    p = data[:, 1]
    assert convexity_constraints(240).slack(p).min() >= -1e-12
    assert np.allclose(p + np.roll(p, 120), 1.0)


def test_sample_disk_to_stdout(capsys):
    code, out = run(capsys, "sample", '{"kind": "disk", "radius": 2.5}', "--n", "12")
    assert code == 0
    data = np.loadtxt(out.out.splitlines(), delimiter=",")
    assert np.allclose(data[:, 1], 2.5)


def test_sample_square_gauge(capsys):
    code, out = run(capsys, "sample", '{"kind": "square", "side": 2.0}', "--n", "16", "--kind", "gauge")
    assert code == 0
    th, g = np.loadtxt(out.out.splitlines(), delimiter=",").T
    assert np.allclose(g, np.maximum(np.abs(np.cos(th)), np.abs(np.sin(th))))


@pytest.mark.parametrize("argv", [["sample", "blob", "--n", "8"], ["sample", "disk", "--n", "2"]])
def test_sample_errors(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_render_heat_map(tmp_path, capsys):
    from convexshape.problems import load_descriptor
    desc = load_descriptor("problem9_f1").to_dict()
    th = np.linspace(0, 2 * np.pi, desc["n"], endpoint=False)
    V = np.column_stack([0.5 * np.cos(th), 0.5 * np.sin(th)])
    res = tmp_path / "r.json"
    res.write_text(json.dumps({"descriptor": desc, "vertices": V.tolist(), "x": [0.5] * desc["n"]}))
    code, _ = run(capsys, "render", str(res), str(tmp_path / "r.svg"), "--mesh", str(tmp_path / "m.txt"))
    assert code == 0
    svg = (tmp_path / "r.svg").read_text()
    assert svg.count("<rect") == 3600 and svg.count("<path") == 1
    assert (tmp_path / "m.txt").stat().st_size > 0


def test_render_missing_file(tmp_path, capsys):
    code, out = run(capsys, "render", str(tmp_path / "none.json"), str(tmp_path / "x.svg"))
    assert code == 2 and "no such result" in out.err
    assert not (tmp_path / "x.svg").exists()
