"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines print even without ``-s``).
"""

import math

import numpy as np
import pytest

from contact_kappa.curves import (
    integrate_prescribed_deviation,
    integrate_steered,
    isoperimetric_lift,
    normal_coordinate_limit,
)
from contact_kappa.distance import direct_method_oracle, shoot_distance
from contact_kappa.expansion import (
    default_epsilon_grid,
    epsilon_sweep,
    fit_expansion,
    radial_asymptotics,
    theta_profile,
)
from contact_kappa.geodesics import (
    conjugate_time,
    frame_momenta,
    hamiltonian_rhs,
    initial_covector,
    integrate_batch,
    integrate_with_variations,
    jacobi_fields,
)
from contact_kappa.structure import rotate_eta, rotate_iota, rotated_frame

from conftest import TEST_POINT
from oracles import fd_jet


@pytest.fixture
def report(capsys):
    def emit(number, name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {name}: {detail}")
        assert ok, detail

    return emit


@pytest.fixture(scope="module")
def quadratic_curve(heis):
    return integrate_steered(heis, (0, 0, 0), "3*t^2", (-0.45, 0.45))


def test_1_expansion_coefficient(heis, quadratic_curve, report):
    table = epsilon_sweep(heis, quadratic_curve, 0.0, default_epsilon_grid())
    rep = fit_expansion(table, float(quadratic_curve.geodesic_curvature(0.0)), "theta=3t^2")
    report(1, "sixth-order coefficient", rep.relative_error < 0.05 and rep.predicted == pytest.approx(0.05),
           f"C = {rep.fitted:.7g} vs C* = {rep.predicted:.7g} (rel err {rep.relative_error:.2e}, tol 5e-2)")


def test_2_geodesic_null_case(heis, report):
    curve = integrate_prescribed_deviation(heis, (0, 0, 0), 0.0, "1", (-0.45, 0.45))
    table = epsilon_sweep(heis, curve, 0.0, default_epsilon_grid())
    gap = float(np.max(np.abs(table.d - np.abs(table.eps))))
    rep = fit_expansion(table, 0.0, "h0=1 geodesic")
    ok = gap < 1e-10 and abs(rep.fitted) < rep.noise_floor
    report(2, "geodesic null case", ok,
           f"max|d - eps| = {gap:.2e} (tol 1e-10), |C| = {abs(rep.fitted):.2e} < floor {rep.noise_floor:.2e}")


def test_3_theta_regularity(heis, quadratic_curve, report):
    prof = theta_profile(heis, quadratic_curve, 0.0, default_epsilon_grid())
    ok = prof.relative_error < 0.05 and prof.theta_shrinks and prof.slope_shrinks
    report(3, "theta''(0) = k/6", ok,
           f"theta''(0) = {prof.second_derivative:.6g} vs {prof.predicted:.6g} (rel err {prof.relative_error:.2e}); "
           f"theta monotone {prof.theta_shrinks}, theta/eps monotone {prof.slope_shrinks}")


@pytest.mark.parametrize("which", ["heis", "twisted"])
def test_4_bracket_asymptotics(request, which, report):
    structure = request.getfixturevalue(which)
    p = (0, 0, 0) if which == "heis" else TEST_POINT
    rep = radial_asymptotics(structure, p, 0.7, 1.0)
    i = rep.smallest_good_index()
    errs = rep.errors()
    ok = max(errs.values()) < 0.03 and rep.reeb_bounded()
    cols = ", ".join(f"{name} {err:.1e}" for name, err in errs.items())
    report(4, f"bracket asymptotics ({structure.name})", ok,
           f"at t = {rep.t[i]:.3g}: rel errors {cols} (tol 3e-2); JGamma c bounded {rep.reeb_bounded()}")


@pytest.mark.parametrize("which", ["heis", "twisted"])
def test_5_sigma_scalings(request, which, report):
    structure = request.getfixturevalue(which)
    p = (0, 0, 0) if which == "heis" else TEST_POINT
    traj = integrate_with_variations(structure, p, 0.7, 1.0, 0.05, rtol=1e-13, atol=1e-13)
    rec = jacobi_fields(traj, [0.05])
    perp, zero = rec.sigma[0, 0] / 0.05**2, rec.sigma[0, 1] / 0.05**3
    ok = abs(perp / 0.5 - 1) < 0.01 and abs(zero / (-1 / 6) - 1) < 0.01
    report(5, f"sigma scalings ({structure.name})", ok,
           f"sigma_perp/t^2 = {perp:.6g}, sigma_0/t^3 = {zero:.6g} at t = 0.05 (tol 1%)")


def test_6_conjugate_times(heis, report):
    t1 = conjugate_time(heis, (0, 0, 0), 0.3, 1.0, 7.0)
    t2 = conjugate_time(heis, (0, 0, 0), 0.3, 2.0, 10.0)
    ok = abs(t1 - 2 * math.pi) < 1e-6 and abs(t2 - math.pi) < 1e-6
    report(6, "Heisenberg conjugate times", ok,
           f"h0=1: {t1:.12f} (err {abs(t1 - 2 * math.pi):.1e}); h0=2: {t2:.12f} (err {abs(t2 - math.pi):.1e})")


def _ball(rng, n, radius, centre):
    out = []
    while len(out) < n:
        v = rng.uniform(-radius, radius, 3)
        if 0.02 < np.linalg.norm(v) <= radius:
            out.append(np.asarray(centre) + v)
    return out


@pytest.mark.parametrize("which,n,radius,tol", [("heis", 20, 0.5, 1e-6), ("twisted", 10, 0.2, 1e-5)])
def test_7_oracle_equivalence(request, which, n, radius, tol, report):
    structure = request.getfixturevalue(which)
    p = np.zeros(3) if which == "heis" else np.array(TEST_POINT)
    rng = np.random.default_rng(20261016)
    gaps = []
    for q in _ball(rng, n, radius, p):
        shot = shoot_distance(structure, p, q).d
        oracle = direct_method_oracle(structure, p, q)
        gaps.append(oracle - shot)
    gaps = np.array(gaps)
    ok = np.max(np.abs(gaps)) < tol and np.min(gaps) > -1e-9
    report(7, f"shooting vs direct method ({structure.name}, {n} targets)", ok,
           f"max |gap| = {np.max(np.abs(gaps)):.2e} (tol {tol:g}), min gap = {np.min(gaps):.2e}")


def _invariant_suite(heis, twisted):
    errs = {}
    rng = np.random.default_rng(8)

    worst = 0.0
    for structure, centre, span in ((heis, np.zeros(3), 2.0), (twisted, np.array(TEST_POINT), 0.3)):
        p = centre + rng.uniform(-0.05, 0.05, 3)
        phi, h0 = rng.uniform(-np.pi, np.pi, 100), rng.uniform(-1.5, 1.5, 100)
        q, lam, _ = integrate_batch(structure, p, initial_covector(structure, p, phi, h0), rng.uniform(0.1, span, 100))
        h1, h2, _ = frame_momenta(structure, q, lam)
        worst = max(worst, float(np.max(np.abs(0.5 * (h1**2 + h2**2) - 0.5))))
    errs["hamiltonian"] = (worst, 1e-10)

    grid = twisted.probe_grid()
    c = twisted.frame_data(grid).c
    eta1, iota1 = c[:, 1, 0, 1], 0.5 * (c[:, 2, 0, 1] + c[:, 1, 0, 2])
    rot, inv = 0.0, 0.0
    for angle in rng.uniform(0, 2 * np.pi, 3):
        t = rotated_frame(twisted, float(angle)).frame_data(grid).c
        eta, iota = t[:, 1, 0, 1], 0.5 * (t[:, 2, 0, 1] + t[:, 1, 0, 2])
        rot = max(rot, np.max(np.abs(eta - rotate_eta(eta1, iota1, angle))), np.max(np.abs(iota - rotate_iota(eta1, iota1, angle))))
        inv = max(inv, np.max(np.abs(eta**2 + iota**2 - eta1**2 - iota1**2)))
    errs["rotation law"] = (float(rot), 1e-9)
    errs["eta^2+iota^2 invariance"] = (float(inv), 1e-9)
    errs["c12^0 = 1"] = (float(np.max(np.abs(c[:, 1, 2, 0] - 1))), 1e-9)
    errs["c0i^0 = 0"] = (float(np.max(np.abs(c[:, 0, 1:, 0]))), 1e-9)

    point = np.array(TEST_POINT)
    jets = twisted.horizontal_jets(point[None], 3)
    frame = lambda x: np.stack(twisted.horizontal_frame(x))  # noqa: E731
    rel = 0.0
    for order, h in ((1, 1e-5), (2, 1e-4), (3, 1e-2)):
        fd = np.moveaxis(fd_jet(frame, point, h)[order - 1], list(range(order)), list(range(-order, 0)))
        rel = max(rel, np.linalg.norm(jets[order][0] - fd) / np.linalg.norm(jets[order][0]))
    errs["jet vs finite differences (relative)"] = (float(rel), 1e-6)

    a = integrate_prescribed_deviation(twisted, TEST_POINT, 0.4, "sin(t)", (0, 0.5), tol=1e-10)
    b = integrate_prescribed_deviation(twisted, TEST_POINT, 0.4, "sin(t)", (0, 0.5), tol=1e-13)
    ts = np.linspace(0, 0.5, 26)
    trip = max(np.max(np.abs(a.position(ts) - b.position(ts))), np.max(np.abs(b.characteristic_deviation(ts) - np.sin(ts))))
    errs["uniqueness and round trip"] = (float(trip), 1e-8)

    traj = integrate_with_variations(twisted, TEST_POINT, 2.0, 0.4, 0.5)
    s = traj.states(np.linspace(0, 0.5, 6))
    eta_gap = max(abs(hamiltonian_rhs(twisted, si)[5] - twisted.directional_eta(si[:3], math.atan2(si[4], si[3]))) for si in s)
    errs["dh0/dt = eta"] = (float(eta_gap), 1e-8)

    limits = []
    for structure in (heis, twisted):
        curve = integrate_prescribed_deviation(structure, (0, 0, 0), 0.5, "2 + t", (0, 0.3))
        limit, _ = normal_coordinate_limit(curve, [0.08, 0.04, 0.02, 0.01])
        limits.append(abs(limit - 2.0))
    errs["normal-coordinate limit"] = (float(max(limits)), 1e-3)
    return errs


def test_8_invariant_suites(heis, twisted, report):
    errs = _invariant_suite(heis, twisted)
    failed = [name for name, (err, tol) in errs.items() if not err < tol]
    detail = "; ".join(f"{name} {err:.1e}/{tol:g}" for name, (err, tol) in errs.items())
    report(8, "invariant suites", not failed, detail + (f"; failing: {failed}" if failed else ""))


def test_9_isoperimetric_lift(report):
    _, curve = isoperimetric_lift((("1", "0"), ("0", "1")), ("-y/2", "x/2"), "t", base_point=(0.0, -1.0), span=(0, 2 * math.pi), box=((-2, 2),) * 3)
    gap = float(np.max(np.abs(curve.characteristic_deviation(np.linspace(0, 2 * math.pi, 101)) - 1.0)))
    report(9, "lift of the unit circle has h = 1", gap < 1e-8, f"max|h - 1| = {gap:.2e} (tol 1e-8)")
