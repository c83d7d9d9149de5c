import csv
import json

import pytest

from contact_kappa.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_TOLERANCE, main

HEIS = {"name": "heisenberg"}
TWISTED = {"gauthier": {"u": "x^2+y^2", "v": "z*(x^2+y^2)"}, "box": [[-0.5, 0.5]] * 3}
QUADRATIC = {"kind": "steering", "law": "3*t^2", "span": [-0.45, 0.45]}
FLAT_LIFT = {
    "isoperimetric": {"surface_frame": [["1", "0"], ["0", "1"]], "one_form": ["-y/2", "x/2"]},
    "box": [[-2, 2]] * 3,
}


def run_cli(tmp_path, experiment, config, *extra):
    tmp_path.mkdir(parents=True, exist_ok=True)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    out = tmp_path / "out"
    code = main([experiment, "--config", str(path), "--out", str(out), *extra])
    summary = json.loads((out / "summary.json").read_text()) if (out / "summary.json").exists() else None
    return code, summary, out


def csv_header(out):
    with open(out / "samples.csv") as fh:
        return next(csv.reader(fh))


def test_check_structure_heisenberg(tmp_path):
    code, rep, out = run_cli(tmp_path, "check-structure", {"structure": HEIS, "experiment": {"type": "check-structure"}})
    assert code == EXIT_OK and rep["passed"]
    s = rep["summary"]
    assert s["chi"] == 0.0 and s["c12_0"] == 1.0 and s["reeb"] == [0.0, 0.0, 1.0]
    assert csv_header(out) == ["x", "y", "z", "eta1", "iota1", "chi", "c12_0", "c01_0", "c02_0"]


def test_check_structure_twisted(tmp_path):
    cfg = {"structure": TWISTED, "experiment": {"type": "check-structure", "point": [0.1, 0.2, 0.0]}}
    code, rep, _ = run_cli(tmp_path, "check-structure", cfg)
    assert code == EXIT_OK
    assert rep["summary"]["chi"] == pytest.approx(0.40907490215506287, abs=1e-12)


def test_expand_reports_coefficient(tmp_path):
    cfg = {"structure": HEIS, "curve": QUADRATIC, "experiment": {"type": "expand", "t0": 0}}
    code, rep, out = run_cli(tmp_path, "expand", cfg)
    assert code == EXIT_OK
    assert rep["summary"]["C_star"] == pytest.approx(0.05)
    assert rep["summary"]["relative_error"] < 0.05
    assert csv_header(out) == ["eps", "d", "d2", "C"]


def test_curve_on_flat_lift(tmp_path):
    cfg = {
        "structure": FLAT_LIFT,
        "curve": {"kind": "steering", "law": "t", "p0": [0, -1, 0], "span": [0, 6]},
        "experiment": {"type": "curve", "expect_h": 1.0},
    }
    code, rep, out = run_cli(tmp_path, "curve", cfg)
    assert code == EXIT_OK
    assert csv_header(out) == ["t", "x", "y", "z", "theta", "h", "k"]


def test_tolerance_failure_exit(tmp_path):
    cfg = {"structure": HEIS, "curve": {"kind": "steering", "law": "t", "span": [0, 1]}, "experiment": {"type": "curve", "expect_h": 2.0}}
    code, rep, _ = run_cli(tmp_path, "curve", cfg)
    assert code == EXIT_TOLERANCE and not rep["passed"]


def test_geodesic_csv_and_conjugate_time(tmp_path):
    cfg = {"structure": HEIS, "experiment": {"type": "geodesic", "phi": 0.3, "h0": 1.0, "length": 3.0, "expect_conjugate_time": 6.283185307179586}}
    code, rep, out = run_cli(tmp_path, "geodesic", cfg)
    assert code == EXIT_OK
    assert rep["summary"]["conjugate_time"] == pytest.approx(2 * 3.141592653589793, abs=1e-6)
    assert csv_header(out) == ["t", "x", "y", "z", "h1", "h2", "h0", "H"]


def test_malformed_expression(tmp_path, capsys):
    cfg = {"structure": {"frame": {"x1": ["1", "0", "x*("], "x2": ["0", "1", "x/2"]}}, "experiment": {"type": "check-structure"}}
    code, rep, _ = run_cli(tmp_path, "check-structure", cfg)
    assert code == EXIT_CONFIG and rep is None
    err = capsys.readouterr().err
    assert "config error" in err and "^" in err


@pytest.mark.parametrize(
    "cfg",
    [
        {"structure": HEIS, "bogus": 1, "experiment": {"type": "check-structure"}},
        {"structure": {"name": "sphere"}, "experiment": {"type": "check-structure"}},
        {"structure": HEIS, "experiment": {"type": "check-structure", "colour": "red"}},
        {"structure": HEIS, "experiment": {"type": "geodesic", "phi": 0, "h0": 0, "length": 1}},
        {"structure": {"frame": {"x1": ["1", "0", "0"], "x2": ["0", "1", "0"]}}, "experiment": {"type": "check-structure"}},
    ],
)
def test_config_errors(tmp_path, cfg):
    code, _, _ = run_cli(tmp_path, "check-structure", cfg)
    assert code == EXIT_CONFIG


def test_numeric_failure_exit(tmp_path):
    cfg = {"structure": HEIS, "experiment": {"type": "jacobi-asymptotics", "phi": 0.2, "h0": 1.0, "t_grid": [2e-4, 1e-4]}}
    code, rep, _ = run_cli(tmp_path, "jacobi-asymptotics", cfg)
    assert code == EXIT_NUMERIC and rep is None


def test_same_seed_same_summary(tmp_path):
    cfg = {"structure": HEIS, "experiment": {"type": "distance", "random_targets": {"n": 3, "radius": 0.4}}}
    first = run_cli(tmp_path / "a", "distance", cfg, "--seed", "11")
    second = run_cli(tmp_path / "b", "distance", cfg, "--seed", "11")
    a = (first[2] / "summary.json").read_text()
    b = (second[2] / "summary.json").read_text()
    strip = lambda text: {k: v for k, v in json.loads(text).items() if k not in ("timings", "artifacts")}  # noqa: E731
    assert strip(a) == strip(b)
    assert (first[2] / "samples.csv").read_bytes() == (second[2] / "samples.csv").read_bytes()
    assert first[1]["seed"] == 11


def test_distance_with_oracle(tmp_path):
    cfg = {"structure": HEIS, "experiment": {"type": "distance", "targets": [[0.3, 0, 0], [0.1, 0.2, 0.05]], "oracle": True}}
    code, rep, out = run_cli(tmp_path, "distance", cfg)
    assert code == EXIT_OK
    assert rep["summary"]["results"][0]["d"] == pytest.approx(0.3, abs=1e-12)
    assert rep["summary"]["max_oracle_gap"] < 1e-6


def test_floats_round_trip(tmp_path):
    cfg = {"structure": TWISTED, "experiment": {"type": "check-structure", "point": [0.1, 0.2, 0.0]}}
    _, _, out = run_cli(tmp_path, "check-structure", cfg)
    text = (out / "summary.json").read_text()
    assert "0.40907490215506" in text
    with open(out / "samples.csv") as fh:
        rows = list(csv.reader(fh))[1:]
    assert all(len(r) == 9 for r in rows)


def test_jacobi_and_theta_and_deviation(tmp_path):
    assert run_cli(tmp_path / "j", "jacobi-asymptotics", {"structure": TWISTED, "experiment": {"type": "jacobi-asymptotics", "p": [0.1, 0.2, 0.0], "phi": 0.7, "h0": 1.0}})[0] == EXIT_OK
    assert run_cli(tmp_path / "t", "theta", {"structure": HEIS, "curve": QUADRATIC, "experiment": {"type": "theta", "t0": 0}})[0] == EXIT_OK
    dev = {
        "structure": TWISTED,
        "curve": {"kind": "deviation", "h_law": "1+t", "theta0": 0.3, "p0": [0.1, 0.2, 0.0], "span": [0, 0.4]},
        "experiment": {"type": "deviation-limit"},
    }
    assert run_cli(tmp_path / "d", "deviation-limit", dev)[0] == EXIT_OK
