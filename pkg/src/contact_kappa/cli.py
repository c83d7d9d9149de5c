"""Command-line runner: ``contact-kappa <experiment> --config run.json [--out DIR] [--seed N]``.

Every run validates the JSON config against :data:`CONFIG_SCHEMA`, executes
one experiment, and writes ``summary.json`` plus ``samples.csv`` to the
output directory.  Exit codes: 0 all checks pass, 1 a tolerance check failed,
2 the config is invalid, 3 the numerics failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
import warnings
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .curves import (
    NonContactError,
    curve_from_geodesic,
    integrate_prescribed_deviation,
    integrate_steered,
    isoperimetric_structure,
)
from .distance import (
    AmbiguousMinimizerWarning,
    InfeasibleError,
    NotSmoothPointError,
    OutOfChartError,
    ShootingError,
    direct_method_oracle,
    shoot_distance,
)
from .expansion import (
    NoiseDominatedError,
    SingularSystemError,
    SweepError,
    default_epsilon_grid,
    deviation_limit_check,
    epsilon_sweep,
    fit_expansion,
    radial_asymptotics,
    theta_profile,
)
from .expr import ExpressionError, ExpressionSyntaxError
from .geodesics import IntegrationError, conjugate_time, integrate_with_variations
from .jet import JetDomainError
from .structure import (
    DegenerateFrameError,
    ReebOverrideError,
    SingularBasisError,
    build_structure,
    gauthier,
    heisenberg,
    rotate_eta,
    rotate_iota,
    rotated_frame,
)

EXPERIMENTS = (
    "check-structure",
    "curve",
    "geodesic",
    "distance",
    "expand",
    "theta",
    "jacobi-asymptotics",
    "deviation-limit",
)

DEFAULT_TOLERANCES = {
    "structure": 1e-9,
    "hamiltonian": 1e-10,
    "conjugate": 1e-6,
    "curve": 1e-8,
    "oracle": 1e-6,
    "expansion": 0.05,
    "theta": 0.05,
    "asymptotics": 0.03,
    "sigma": 0.01,
    "deviation": 0.05,
}

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_expr = {"type": "string", "minLength": 1}
_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_vec2 = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_expr3 = {"type": "array", "items": _expr, "minItems": 3, "maxItems": 3}
_expr2 = {"type": "array", "items": _expr, "minItems": 2, "maxItems": 2}
_box = {"type": "array", "items": _vec2, "minItems": 3, "maxItems": 3}
_grid = {"type": "array", "items": {"type": "number"}, "minItems": 1}


def _closed(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["structure"],
    "properties": {
        "structure": {
            "oneOf": [
                _closed({"name": {"const": "heisenberg"}, "box": _box}, ["name"]),
                _closed({"gauthier": _closed({"u": _expr, "v": _expr}), "box": _box}, ["gauthier"]),
                _closed(
                    {
                        "frame": _closed({"x1": _expr3, "x2": _expr3, "reeb": _expr3, "name": {"type": "string"}}, ["x1", "x2"]),
                        "box": _box,
                    },
                    ["frame"],
                ),
                _closed(
                    {
                        "isoperimetric": _closed(
                            {"surface_frame": {"type": "array", "items": _expr2, "minItems": 2, "maxItems": 2}, "one_form": _expr2},
                            ["surface_frame", "one_form"],
                        ),
                        "box": _box,
                    },
                    ["isoperimetric"],
                ),
            ]
        },
        "curve": {
            "oneOf": [
                _closed({"kind": {"const": "steering"}, "law": _expr, "p0": _vec3, "span": _vec2}, ["kind", "law", "span"]),
                _closed(
                    {"kind": {"const": "deviation"}, "h_law": _expr, "theta0": {"type": "number"}, "p0": _vec3, "span": _vec2},
                    ["kind", "h_law", "span"],
                ),
                _closed(
                    {"kind": {"const": "geodesic"}, "phi": {"type": "number"}, "h0": {"type": "number"},
                     "length": {"type": "number", "exclusiveMinimum": 0}, "p0": _vec3},
                    ["kind", "phi", "h0", "length"],
                ),
            ]
        },
        "experiment": _closed(
            {
                "type": {"enum": list(EXPERIMENTS)},
                "point": _vec3,
                "p": _vec3,
                "q": _vec3,
                "targets": {"type": "array", "items": _vec3},
                "random_targets": _closed(
                    {"n": {"type": "integer", "minimum": 1}, "radius": {"type": "number", "exclusiveMinimum": 0}},
                    ["n", "radius"],
                ),
                "oracle": {"type": "boolean"},
                "phi": {"type": "number"},
                "h0": {"type": "number"},
                "length": {"type": "number", "exclusiveMinimum": 0},
                "conjugate_t_max": {"type": "number", "exclusiveMinimum": 0},
                "expect_conjugate_time": {"type": "number"},
                "expect_h": {"type": "number"},
                "expect_k": {"type": "number"},
                "t0": {"type": "number"},
                "eps": _grid,
                "eps_max": {"type": "number", "exclusiveMinimum": 0},
                "eps_ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "eps_min": {"type": "number", "exclusiveMinimum": 0},
                "t_grid": _grid,
                "n_samples": {"type": "integer", "minimum": 2},
                "n_angles": {"type": "integer", "minimum": 1},
            }
        ),
        "tolerances": _closed({k: {"type": "number", "exclusiveMinimum": 0} for k in DEFAULT_TOLERANCES}),
        "seed": {"type": "integer", "minimum": 0},
        "output": _closed({"dir": {"type": "string"}}),
    },
}


class ConfigError(ValueError):
    """The run configuration is malformed or inconsistent."""


_CONFIG_ERRORS = (
    ConfigError,
    ExpressionError,
    DegenerateFrameError,
    ReebOverrideError,
    SingularBasisError,
    NonContactError,
    OutOfChartError,
)
_NUMERIC_ERRORS = (
    IntegrationError,
    ShootingError,
    InfeasibleError,
    NotSmoothPointError,
    NoiseDominatedError,
    SingularSystemError,
    SweepError,
    JetDomainError,
    np.linalg.LinAlgError,
)


# --- output -----------------------------------------------------------------------


def _plain(obj):
    """Convert numpy containers and scalars to plain Python values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def format_float(x):
    return f"{x:.17g}" if math.isfinite(x) else "null"


def dumps(obj, indent=0):
    """JSON text with floats written to 17 significant digits."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + dumps(v, indent + 1) for v in obj) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# --- config -> objects ------------------------------------------------------------


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("config failed validation:\n  " + "\n  ".join(lines))
    return cfg


def make_structure(block):
    box = block.get("box")
    if "name" in block:
        return heisenberg(box=box)
    if "gauthier" in block:
        g = block["gauthier"]
        return gauthier(g.get("u", "0"), g.get("v", "0"), box=box)
    if "frame" in block:
        f = block["frame"]
        return build_structure(f["x1"], f["x2"], name=f.get("name", "custom"), reeb_override=f.get("reeb"), box=box)
    iso = block["isoperimetric"]
    return isoperimetric_structure(iso["surface_frame"], iso["one_form"], box=box)


def make_curve(structure, block):
    if block is None:
        raise ConfigError("this experiment needs a 'curve' section")
    p0 = block.get("p0", [0.0, 0.0, 0.0])
    if block["kind"] == "steering":
        return integrate_steered(structure, p0, block["law"], tuple(block["span"]))
    if block["kind"] == "deviation":
        return integrate_prescribed_deviation(structure, p0, block.get("theta0", 0.0), block["h_law"], tuple(block["span"]))
    traj = integrate_with_variations(structure, p0, block["phi"], block["h0"], block["length"])
    return curve_from_geodesic(traj)


def _eps_grid(exp):
    if "eps" in exp:
        return np.asarray(exp["eps"], dtype=float)
    return default_epsilon_grid(exp.get("eps_max", 0.4), exp.get("eps_ratio", 0.8), exp.get("eps_min", 0.08))


class Checks:
    """Named pass/fail records against declared tolerances."""

    def __init__(self):
        self.items = {}

    def add(self, name, value, tolerance, passed=None):
        ok = bool(value <= tolerance) if passed is None else bool(passed)
        self.items[name] = {"value": value, "tolerance": tolerance, "passed": ok}

    def flag(self, name, passed):
        self.items[name] = {"passed": bool(passed)}

    @property
    def passed(self):
        return all(c["passed"] for c in self.items.values())


# --- experiments ------------------------------------------------------------------
# each returns (summary dict, csv header, csv rows)


def run_check_structure(structure, cfg, exp, tol, checks, rng):
    point = np.asarray(exp.get("point", [0.0, 0.0, 0.0]), dtype=float)
    consts = structure.structure_constants(point).c
    tors = structure.torsion_invariants(point)
    reeb = structure.reeb_field(point).value
    grid = structure.probe_grid()
    data = structure.frame_data(grid)
    c = data.c
    norm_err = float(np.max(np.abs(c[:, 1, 2, 0] - 1.0)))
    reeb_err = float(max(np.max(np.abs(c[:, 0, 1, 0])), np.max(np.abs(c[:, 0, 2, 0]))))
    eta1 = c[:, 1, 0, 1]
    iota1 = 0.5 * (c[:, 2, 0, 1] + c[:, 1, 0, 2])
    chi2 = eta1**2 + iota1**2
    angles = rng.uniform(0.0, 2 * np.pi, exp.get("n_angles", 3))
    rot_err, inv_err = 0.0, 0.0
    for th in angles:
        turned = rotated_frame(structure, float(th)).frame_data(grid).c
        eta = turned[:, 1, 0, 1]
        iota = 0.5 * (turned[:, 2, 0, 1] + turned[:, 1, 0, 2])
        rot_err = max(rot_err, float(np.max(np.abs(eta - rotate_eta(eta1, iota1, th)))))
        rot_err = max(rot_err, float(np.max(np.abs(iota - rotate_iota(eta1, iota1, th)))))
        inv_err = max(inv_err, float(np.max(np.abs(eta**2 + iota**2 - chi2))))
    checks.add("c12_0_is_one", norm_err, tol["structure"])
    checks.add("c0i_0_vanish", reeb_err, tol["structure"])
    checks.add("rotation_law", rot_err, tol["structure"])
    checks.add("chi_frame_independent", inv_err, tol["structure"])
    summary = {
        "structure": structure.name,
        "point": point,
        "reeb": reeb,
        "c12_0": float(consts[1, 2, 0]),
        "eta1": tors.eta1,
        "iota1": tors.iota1,
        "chi": tors.chi,
        "structure_constants": consts,
        "probe_points": len(grid),
        "angles_tested": len(angles),
    }
    header = ["x", "y", "z", "eta1", "iota1", "chi", "c12_0", "c01_0", "c02_0"]
    rows = [
        [*q, e, i, math.sqrt(x), cc[1, 2, 0], cc[0, 1, 0], cc[0, 2, 0]]
        for q, e, i, x, cc in zip(grid, eta1, iota1, chi2, c)
    ]
    return summary, header, rows


def _curve_grid(curve, exp):
    if "t_grid" in exp:
        return np.asarray(exp["t_grid"], dtype=float)
    lo, hi = curve.span
    return np.linspace(lo, hi, exp.get("n_samples", 41))


def run_curve(structure, cfg, exp, tol, checks, rng):
    curve = make_curve(structure, cfg.get("curve"))
    t = _curve_grid(curve, exp)
    q = curve.position(t)
    th = curve.angle(t)
    h = curve.characteristic_deviation(t)
    k = curve.geodesic_curvature(t)
    if "expect_h" in exp:
        checks.add("deviation_matches", float(np.max(np.abs(h - exp["expect_h"]))), tol["curve"])
    if "expect_k" in exp:
        checks.add("curvature_matches", float(np.max(np.abs(k - exp["expect_k"]))), tol["curve"])
    summary = {
        "kind": cfg["curve"]["kind"],
        "span": list(curve.span),
        "h_range": [float(h.min()), float(h.max())],
        "k_range": [float(k.min()), float(k.max())],
        "endpoint": q[-1],
    }
    rows = [[ti, *qi, a, hi, ki] for ti, qi, a, hi, ki in zip(t, q, th, h, k)]
    return summary, ["t", "x", "y", "z", "theta", "h", "k"], rows


def run_geodesic(structure, cfg, exp, tol, checks, rng):
    p = np.asarray(exp.get("p", [0.0, 0.0, 0.0]), dtype=float)
    phi, h0 = exp.get("phi", 0.0), exp.get("h0", 0.0)
    length = exp.get("length", 1.0)
    traj = integrate_with_variations(structure, p, phi, h0, length, rtol=1e-12, atol=1e-12)
    t = np.asarray(exp["t_grid"], dtype=float) if "t_grid" in exp else np.linspace(0.0, length, exp.get("n_samples", 41))
    states = traj.states(t)
    energy = 0.5 * (states[:, 3] ** 2 + states[:, 4] ** 2)
    drift = float(np.max(np.abs(energy - 0.5)))
    checks.add("hamiltonian_conserved", drift, tol["hamiltonian"])
    summary = {"p": p, "phi": phi, "h0": h0, "length": length, "endpoint": states[-1], "energy_drift": drift}
    if "conjugate_t_max" in exp or "expect_conjugate_time" in exp:
        t_max = exp.get("conjugate_t_max", 1.5 * exp.get("expect_conjugate_time", length))
        tc = conjugate_time(structure, p, phi, h0, t_max)
        summary["conjugate_time"] = tc
        if "expect_conjugate_time" in exp:
            err = math.inf if tc is None else abs(tc - exp["expect_conjugate_time"])
            checks.add("conjugate_time", err, tol["conjugate"])
    header = ["t", "x", "y", "z", "h1", "h2", "h0", "H"]
    rows = [[ti, *s, e] for ti, s, e in zip(t, states, energy)]
    return summary, header, rows


def run_distance(structure, cfg, exp, tol, checks, rng):
    p = np.asarray(exp.get("p", [0.0, 0.0, 0.0]), dtype=float)
    targets = [np.asarray(q, dtype=float) for q in exp.get("targets", [])]
    if "q" in exp:
        targets.insert(0, np.asarray(exp["q"], dtype=float))
    if "random_targets" in exp:
        n, radius = exp["random_targets"]["n"], exp["random_targets"]["radius"]
        for _ in range(n):
            v = rng.normal(size=3)
            targets.append(p + radius * rng.uniform() ** (1 / 3) * v / np.linalg.norm(v))
    if not targets:
        raise ConfigError("distance experiment needs 'q', 'targets' or 'random_targets'")
    use_oracle = exp.get("oracle", False)
    rows, results, worst = [], [], 0.0
    for q in targets:
        res = shoot_distance(structure, p, q)
        results.append({
            "q": q, "d": res.d, "phi": res.phi, "h0": res.h0, "t": res.t, "residual": res.residual,
            "n_solutions_found": res.n_solutions_found, "conjugate_margin": res.conjugate_margin,
            "margin_is_lower_bound": res.margin_is_lower_bound, "ambiguous": res.ambiguous,
        })
        row = [*q, res.d, res.phi, res.h0, res.residual, res.n_solutions_found, int(res.ambiguous)]
        if use_oracle:
            od = direct_method_oracle(structure, p, q)
            worst = max(worst, abs(od - res.d))
            row += [od, od - res.d]
        rows.append(row)
    header = ["qx", "qy", "qz", "d", "phi", "h0", "residual", "n_solutions", "ambiguous"]
    summary = {"p": p, "n_targets": len(targets), "results": results}
    if use_oracle:
        header += ["oracle_d", "oracle_minus_shooting"]
        summary["max_oracle_gap"] = worst
        checks.add("oracle_agreement", worst, tol["oracle"])
    return summary, header, rows


def run_expand(structure, cfg, exp, tol, checks, rng):
    curve = make_curve(structure, cfg.get("curve"))
    t0 = exp.get("t0", 0.0)
    table = epsilon_sweep(structure, curve, t0, _eps_grid(exp))
    k = float(curve.geodesic_curvature(t0))
    rep = fit_expansion(table, k)
    if abs(k) > 1e-9:
        checks.add("coefficient_matches", rep.relative_error, tol["expansion"])
    else:
        checks.add("coefficient_below_noise", abs(rep.fitted), rep.noise_floor)
    checks.flag("d2_not_above_eps2", rep.d2_bounded)
    summary = {
        "t0": t0,
        "k": k,
        "C_fitted": rep.fitted,
        "C_star": rep.predicted,
        "relative_error": rep.relative_error,
        "uncertainty": rep.uncertainty,
        "noise_floor": rep.noise_floor,
        "averaged": rep.averaged,
        "model": rep.model,
    }
    rows = [[e, d, d * d, c] for e, d, c in zip(table.eps, table.d, rep.coefficients)]
    return summary, ["eps", "d", "d2", "C"], rows


def run_theta(structure, cfg, exp, tol, checks, rng):
    curve = make_curve(structure, cfg.get("curve"))
    t0 = exp.get("t0", 0.0)
    prof = theta_profile(structure, curve, t0, _eps_grid(exp))
    if abs(prof.predicted) > 1e-9:
        checks.add("second_derivative_matches", prof.relative_error, tol["theta"])
        checks.flag("theta_shrinks", prof.theta_shrinks)
        checks.flag("theta_over_eps_shrinks", prof.slope_shrinks)
    else:
        checks.add("theta_vanishes", float(np.max(np.abs(prof.theta))), tol["theta"])
    summary = {
        "t0": t0,
        "theta_first_derivative": prof.first_derivative,
        "theta_second_derivative": prof.second_derivative,
        "predicted": prof.predicted,
        "relative_error": prof.relative_error,
    }
    rows = [[e, th, th / e, r] for e, th, r in zip(prof.eps, prof.theta, prof.varrho)]
    return summary, ["eps", "theta", "theta_over_eps", "varrho"], rows


def run_jacobi_asymptotics(structure, cfg, exp, tol, checks, rng):
    p = np.asarray(exp.get("p", [0.0, 0.0, 0.0]), dtype=float)
    t_grid = exp.get("t_grid")
    rep = radial_asymptotics(structure, p, exp.get("phi", 0.0), exp.get("h0", 1.0), t_grid)
    i = rep.smallest_good_index()
    for name, err in rep.errors().items():
        checks.add(f"{name}_limit", err, tol["asymptotics"])
    for name, ok in rep.converged().items():
        checks.flag(f"{name}_converges", ok)
    checks.flag("delta2_jc_bounded", rep.reeb_bounded())
    checks.add("sigma_perp_scaling", abs(rep.sigma_perp_scaled[i] - 0.5) / 0.5, tol["sigma"])
    checks.add("sigma_zero_scaling", abs(rep.sigma_zero_scaled[i] + 1 / 6) * 6, tol["sigma"])
    summary = {
        "t_smallest_good": rep.t[i],
        "delta_c": rep.delta_c[i],
        "delta2_c_gamma_reeb": rep.delta2_c_gamma_reeb[i],
        "delta2_hc": rep.delta2_hc[i],
        "sigma_perp_over_t2": rep.sigma_perp_scaled[i],
        "sigma_zero_over_t3": rep.sigma_zero_scaled[i],
        "condition_numbers": rep.condition,
        "targets": list(rep.targets),
    }
    header = ["t", "delta_c", "delta2_c_gamma_reeb", "delta2_hc", "delta2_jc", "sigma_perp_over_t2",
              "sigma_zero_over_t3", "condition", "well_conditioned"]
    rows = [
        list(r[:-1]) + [int(r[-1])]
        for r in zip(rep.t, rep.delta_c, rep.delta2_c_gamma_reeb, rep.delta2_hc, rep.delta2_jc,
                     rep.sigma_perp_scaled, rep.sigma_zero_scaled, rep.condition, rep.well_conditioned)
    ]
    return summary, header, rows


def run_deviation_limit(structure, cfg, exp, tol, checks, rng):
    curve = make_curve(structure, cfg.get("curve"))
    t0 = exp.get("t0", 0.0)
    t = np.asarray(exp.get("t_grid", [0.4, 0.2, 0.1, 0.05]), dtype=float)
    table = deviation_limit_check(structure, curve, t, t0)
    nearest = int(np.argmin(np.abs(t - t0)))
    gap = abs(table.varrho[nearest] - table.deviation_at_start)
    checks.add("varrho_reaches_deviation", gap, tol["deviation"])
    checks.flag("monotone", table.monotone)
    summary = {"t0": t0, "h_at_t0": table.deviation_at_start, "varrho_nearest": table.varrho[nearest], "gap": gap}
    rows = [[ti, r, table.deviation_at_start] for ti, r in zip(t, table.varrho)]
    return summary, ["t", "varrho", "h_at_t0"], rows


RUNNERS = {
    "check-structure": run_check_structure,
    "curve": run_curve,
    "geodesic": run_geodesic,
    "distance": run_distance,
    "expand": run_expand,
    "theta": run_theta,
    "jacobi-asymptotics": run_jacobi_asymptotics,
    "deviation-limit": run_deviation_limit,
}


# --- entry points -----------------------------------------------------------------


def run(experiment, config_path, out_dir=None, seed=None):
    """Execute one experiment; returns ``(exit code, report dict or None)``."""
    started = time.perf_counter()
    try:
        cfg = load_config(config_path)
        exp = dict(cfg.get("experiment", {}))
        declared = exp.pop("type", experiment)
        if declared != experiment:
            raise ConfigError(f"config declares experiment {declared!r} but {experiment!r} was requested")
        if seed is None:
            seed = cfg.get("seed", 0)
        out = Path(out_dir or cfg.get("output", {}).get("dir", "."))
        tol = {**DEFAULT_TOLERANCES, **cfg.get("tolerances", {})}
        structure = make_structure(cfg["structure"])
    except _CONFIG_ERRORS as exc:
        _report_config_error(exc)
        return EXIT_CONFIG, None

    checks = Checks()
    rng = np.random.default_rng(seed)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", AmbiguousMinimizerWarning)
            summary, header, rows = RUNNERS[experiment](structure, cfg, exp, tol, checks, rng)
    except _CONFIG_ERRORS as exc:
        _report_config_error(exc)
        return EXIT_CONFIG, None
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC, None

    out.mkdir(parents=True, exist_ok=True)
    summary_path, samples_path = out / "summary.json", out / "samples.csv"
    write_csv(samples_path, header, rows)
    report = {
        "version": __version__,
        "experiment": experiment,
        "config": cfg,
        "seed": seed,
        "tolerances": tol,
        "summary": summary,
        "checks": checks.items,
        "passed": checks.passed,
        "warnings": sorted({str(w.message) for w in caught}),
        "artifacts": {"summary": str(summary_path), "samples": str(samples_path)},
        "timings": {"wall_seconds": time.perf_counter() - started},
    }
    summary_path.write_text(dumps(_plain(report)) + "\n")
    status = "PASS" if checks.passed else "FAIL"
    print(f"{experiment}: {status} ({len(checks.items)} checks) -> {summary_path}")
    for name, c in checks.items.items():
        if not c["passed"]:
            print(f"  failed: {name} {c}", file=sys.stderr)
    return (EXIT_OK if checks.passed else EXIT_TOLERANCE), report


def _report_config_error(exc):
    print(f"config error: {exc}", file=sys.stderr)
    if isinstance(exc, ExpressionSyntaxError):
        print(f"  {exc.source}", file=sys.stderr)
        print(f"  {' ' * exc.offset}^", file=sys.stderr)


def build_parser():
    parser = argparse.ArgumentParser(prog="contact-kappa", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (default: config output.dir or .)")
        p.add_argument("--seed", type=int, default=None, help="seed for randomized checks (non-negative)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("config error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    code, _ = run(args.experiment, args.config, args.out, args.seed)
    return code


if __name__ == "__main__":
    sys.exit(main())
