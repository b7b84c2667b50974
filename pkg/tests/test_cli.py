import json
import math
import os
import subprocess
import sys

import numpy as np

from triport.cli import main
from triport.io import dumps_json, read_grid_csv


def run(args, capsys=None):
    code = main([str(a) for a in args])
    out = capsys.readouterr().out if capsys else None
    return code, out


# --- tritter-check ----------------------------------------------------------------

def test_tritter_check_passes(capsys):
    code, out = run(["tritter-check"], capsys)
    assert code == 0
    report = json.loads(out)
    for key in ("unitarity", "moduli", "ft_identity", "decomposition"):
        assert report[key]["residual"] <= 1e-12
    assert report["passed"] is True


def test_tritter_check_detects_perturbation(tmp_path):
    out = tmp_path / "check.json"
    code, _ = run(["tritter-check", "--perturb", "1e-4", "--out", out])
    assert code == 1
    report = json.loads(out.read_text())
    assert report["unitarity"]["residual"] > 1e-5
    assert report["unitarity"]["passed"] is False


# --- grid ---------------------------------------------------------------------------

def test_grid_csv_layout_and_q_peak(tmp_path):
    out = tmp_path / "a.csv"
    assert run(["grid", "--out", out])[0] == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "# -2,4,-3,3,61,61,alpha_plane"
    assert len(lines) == 62
    assert all(len(ln.split(",")) == 61 for ln in lines[1:])
    grid = read_grid_csv(out.read_text())
    i, j = grid.spec.cell_index(1.0, 0.0)
    assert abs(grid.values[i, j] - 1 / math.pi) < 1e-12
    assert grid.values[i, j] == grid.values.max()
    # rows run along x at fixed y, y ascending
    row0 = [float(v) for v in lines[1].split(",")]
    assert row0 == list(grid.values[:, 0])


def test_grid_number_probe_zero(tmp_path):
    out = tmp_path / "c.csv"
    assert run(["grid", "--probe", "number:1", "--out", out])[0] == 0
    grid = read_grid_csv(out.read_text())
    assert grid.values[grid.spec.cell_index(1.0, 0.0)] <= 1e-9


def test_grid_squeezed_probe_normalization(tmp_path):
    out = tmp_path / "b.json"
    args = ["grid", "--probe", "squeezed-nbar:1", "--window=-5,7,-7,7", "--nx", 121, "--ny", 141]
    assert run([*args, "--format", "json", "--out", out])[0] == 0
    data = json.loads(out.read_text())
    s = data["spec"]
    assert data["axis_label"] == "alpha_plane"
    vals = np.array(data["values"])
    assert vals.shape == (121, 141)
    area = (s["x_max"] - s["x_min"]) * (s["y_max"] - s["y_min"]) / (s["nx"] * s["ny"])
    assert abs(vals.sum() * area - 1) < 1e-3


def test_grid_ppm(tmp_path):
    out = tmp_path / "a.ppm"
    assert run(["phasespace-grid", "--nx", 20, "--ny", 10, "--format", "ppm", "--out", out])[0] == 0
    data = out.read_bytes()
    head = b"P6\n20 10\n255\n"
    assert data.startswith(head)
    assert len(data) == len(head) + 20 * 10 * 3
    assert max(data[len(head):]) == 255


def test_grid_wigner_and_q_modes(capsys):
    code, out = run(["grid", "--probe", "wigner", "--signal", "number:1", "--nx", 3, "--ny", 3,
                     "--window=-1,1,-1,1"], capsys)
    assert code == 0
    centre = float(out.splitlines()[2].split(",")[1])
    assert abs(centre + 2) < 1e-12
    code, out = run(["grid", "--probe", "q", "--signal", "vacuum", "--nx", 3, "--ny", 3,
                     "--window=-1,1,-1,1"], capsys)
    assert abs(float(out.splitlines()[2].split(",")[1]) - 1 / math.pi) < 1e-15


def test_grid_invalid_window(tmp_path, capsys):
    code, _ = run(["grid", "--window=3,1,0,1", "--out", tmp_path / "x.csv"], capsys)
    assert code == 1
    assert not (tmp_path / "x.csv").exists()


def test_grid_unwritable_path_leaves_nothing(tmp_path, capsys):
    target = tmp_path / "missing" / "x.csv"
    code, _ = run(["grid", "--nx", 4, "--ny", 4, "--out", target], capsys)
    assert code == 1
    assert list(tmp_path.iterdir()) == []


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"signal": "vacuum", "nx": 5, "ny": 7, "window": [-1, 1, -1, 1]}))
    out = tmp_path / "g.csv"
    assert run(["grid", "--config", cfg, "--ny", 4, "--out", out])[0] == 0
    grid = read_grid_csv(out.read_text())
    assert (grid.spec.nx, grid.spec.ny) == (5, 4)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"colour": "red"}))
    assert run(["grid", "--config", bad])[0] == 1


# --- simulate -----------------------------------------------------------------------

SIM = ["simulate", "--z-mag", 12, "--signal", "vacuum", "--probe", "vacuum", "--samples", 100_000, "--seed", 1]


def test_simulate_is_reproducible(tmp_path, capsys):
    assert run([*SIM, "--out", tmp_path / "a"], capsys)[0] == 0
    assert run([*SIM, "--out", tmp_path / "b", "--threads", 3], capsys)[0] == 0
    for name in ("report.json", "empirical.csv", "reference.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    for key in ("l1", "max_abs", "n_samples", "z_mag", "seed", "mass_deficit", "clipped_fraction"):
        assert key in report


def test_simulate_report_reruns_from_embedded_config(tmp_path, capsys):
    assert run([*SIM, "--samples", 5000, "--out", tmp_path / "a"], capsys)[0] == 0
    report = tmp_path / "a" / "report.json"
    assert run(["simulate", "--config", report, "--out", tmp_path / "b"], capsys)[0] == 0
    assert report.read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_simulate_threads_from_environment(tmp_path, capsys, monkeypatch):
    assert run([*SIM, "--samples", 5000, "--out", tmp_path / "a"], capsys)[0] == 0
    monkeypatch.setenv("TRIPORT_THREADS", "4")
    assert run([*SIM, "--samples", 5000, "--out", tmp_path / "b"], capsys)[0] == 0
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_simulate_error_codes(tmp_path, capsys):
    assert run([*SIM, "--count-cutoff", 30, "--out", tmp_path / "a"], capsys)[0] == 1
    assert run(["simulate", "--z-mag", 4, "--signal", "coherent:3", "--cutoff-sp", 2,
                "--out", tmp_path / "b"], capsys)[0] == 2
    assert not (tmp_path / "b").exists()


def test_simulate_coherent_signal_converges(tmp_path, capsys):
    base = ["simulate", "--signal", "coherent:1", "--probe", "vacuum", "--samples", 1_000_000, "--seed", 5]
    assert run([*base, "--z-mag", 12, "--out", tmp_path / "z12"], capsys)[0] == 0
    assert run([*base, "--z-mag", 3, "--out", tmp_path / "z3"], capsys)[0] == 0
    l1_12 = json.loads((tmp_path / "z12" / "report.json").read_text())["l1"]
    l1_3 = json.loads((tmp_path / "z3" / "report.json").read_text())["l1"]
    assert l1_12 <= 0.08
    assert l1_3 > l1_12


# --- converge -----------------------------------------------------------------------

def test_converge_csv(tmp_path, capsys):
    out, rep = tmp_path / "c.csv", tmp_path / "c.json"
    assert run(["converge", "--z", "3,6,12", "--out", out, "--report", rep], capsys)[0] == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# slope=")
    rows = [ln.split(",") for ln in lines[2:]]
    assert len(rows) == 3
    l1 = [float(r[1]) for r in rows]
    assert l1[0] > l1[1] > l1[2]
    slope = float(lines[0].split("=")[1])
    assert -1.3 <= slope <= -0.7
    assert json.loads(rep.read_text())["slope"] == slope


def test_converge_needs_three_values(capsys):
    assert run(["converge", "--z", "3,6"], capsys)[0] == 1


# --- plumbing -----------------------------------------------------------------------

def test_json_numbers_have_17_digits():
    text = dumps_json({"a": 0.1, "b": [1, 2.5], "c": None})
    assert "0.10000000000000001" in text
    assert json.loads(text) == {"a": 0.1, "b": [1, 2.5], "c": None}


def test_console_entry_point():
    env = dict(os.environ)
    proc = subprocess.run(
        [sys.executable, "-m", "triport.cli", "tritter-check"], capture_output=True, text=True, env=env
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["passed"] is True
