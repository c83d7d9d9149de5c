import numpy as np
import pytest

from contact_kappa.curves import curve_from_geodesic, integrate_prescribed_deviation, integrate_steered
from contact_kappa.expansion import (
    NoiseDominatedError,
    SingularSystemError,
    SweepError,
    default_epsilon_grid,
    deviation_limit_check,
    epsilon_sweep,
    fit_expansion,
    radial_asymptotics,
    radial_integral_check,
    theta_profile,
    theta_values,
)
from contact_kappa.geodesics import integrate_with_variations

from conftest import TEST_POINT

SHORT_GRID = np.array([s * m for m in (0.3, 0.2, 0.15, 0.1) for s in (1, -1)])


@pytest.fixture(scope="module")
def quadratic_curve(heis):
    return integrate_steered(heis, (0, 0, 0), "3*t^2", (-0.5, 0.5))


def test_default_grid_shape():
    g = default_epsilon_grid()
    assert len(g) == 16
    assert g[0] == 0.4 and g[1] == -0.4
    assert abs(g[-1]) == pytest.approx(0.4 * 0.8**7)
    assert np.all(np.diff(np.abs(g[::2])) < 0)


def test_synthetic_table_recovers_coefficient():
    eps = default_epsilon_grid()
    d2 = eps**2 - 0.05 * eps**6 + 0.01 * eps**8
    rep = fit_expansion((eps, d2), 6.0)
    assert rep.predicted == pytest.approx(0.05)
    assert rep.fitted == pytest.approx(0.05, abs=1e-4)
    assert rep.d2_bounded


def test_two_sided_average_cancels_odd_remainder():
    eps = default_epsilon_grid()
    d2 = eps**2 - 0.05 * eps**6 + 0.3 * eps**7 + 0.01 * eps**8
    assert fit_expansion((eps, d2), 6.0).fitted == pytest.approx(0.05, abs=1e-4)


def test_zero_curvature_fit_sits_below_noise_floor():
    eps = default_epsilon_grid()
    noise = np.random.default_rng(0).uniform(-1e-12, 1e-12, eps.shape)
    rep = fit_expansion((eps, eps**2 + noise), 0.0)
    assert rep.predicted == 0.0
    assert abs(rep.fitted) < rep.noise_floor


def test_noise_dominated_sequence_is_rejected():
    eps = default_epsilon_grid()
    wobble = np.where(np.arange(len(eps)) % 4 < 2, 1e-7, -1e-7) * eps**6
    d2 = eps**2 - 0.05 * eps**6 + wobble * 1e3
    with pytest.raises(NoiseDominatedError):
        fit_expansion((eps, d2), 6.0)


def test_fit_needs_four_pairs():
    eps = np.array([0.3, -0.3, 0.2, -0.2, 0.1, -0.1])
    with pytest.raises(ValueError):
        fit_expansion((eps, eps**2), 0.0)


@pytest.mark.parametrize("bad", [[0.3, -0.3, 0.0, 0.1], [0.1, -0.1, 0.3, -0.3]])
def test_grid_validation(heis, bad):
    c = integrate_steered(heis, (0, 0, 0), "0", (-0.5, 0.5))
    with pytest.raises(ValueError):
        epsilon_sweep(heis, c, 0.0, np.array(bad))


def test_sweep_failure_reports_eps(twisted):
    c = integrate_steered(twisted, (0.4, 0.0, 0.0), "0", (-0.2, 0.2))
    with pytest.raises(SweepError) as info:
        epsilon_sweep(twisted, c, 0.0, np.array([0.15, -0.15]))
    assert info.value.eps == pytest.approx(0.15)


def test_geodesic_distance_is_arc_length(heis):
    c = integrate_prescribed_deviation(heis, (0, 0, 0), 0.3, "0.8", (-0.5, 0.5))
    table = epsilon_sweep(heis, c, 0.0, SHORT_GRID)
    assert np.max(np.abs(table.d - np.abs(SHORT_GRID))) < 1e-11


def test_quadratic_steering_leading_order(heis, quadratic_curve):
    table = epsilon_sweep(heis, quadratic_curve, 0.0, np.array([0.2, -0.2]))
    gap = 0.04 - table.d2
    assert gap == pytest.approx(0.05 * 0.2**6, rel=0.1)
    assert table.d[0] == pytest.approx(table.d[1], abs=1e-11)


def test_quadratic_steering_fit(heis, quadratic_curve):
    table = epsilon_sweep(heis, quadratic_curve, 0.0)
    rep = fit_expansion(table, float(quadratic_curve.geodesic_curvature(0.0)))
    assert rep.predicted == pytest.approx(0.05)
    assert rep.relative_error < 0.05


def test_geodesic_theta_vanishes(heis):
    traj = integrate_with_variations(heis, (0, 0, 0), 0.4, 0.7, 0.3)
    c = curve_from_geodesic(traj)
    assert np.max(np.abs(theta_values(heis, c, 0.0, np.array([0.25, 0.15, 0.05])))) < 1e-8


def test_theta_second_derivative(heis, quadratic_curve):
    prof = theta_profile(heis, quadratic_curve, 0.0)
    assert prof.predicted == pytest.approx(1.0)
    assert prof.second_derivative == pytest.approx(1.0, rel=0.05)
    assert prof.theta_shrinks and prof.slope_shrinks


def test_theta_is_even_on_symmetric_curve(heis, quadratic_curve):
    th = theta_values(heis, quadratic_curve, 0.0, np.array([0.2, -0.2]))
    assert th[0] == pytest.approx(th[1], abs=1e-9)


def test_radial_integral_reconstructs_distance(twisted):
    c = integrate_steered(twisted, TEST_POINT, "0.5 + 4*t^2", (0, 0.3))
    direct, integrated = radial_integral_check(twisted, c, 0.0, 0.2)
    assert abs(direct - integrated) < 1e-8


def test_deviation_limit_on_heisenberg_geodesic(heis):
    c = integrate_prescribed_deviation(heis, (0, 0, 0), 0.0, "0.5", (0, 0.4))
    table = deviation_limit_check(heis, c, [0.3, 0.2, 0.1, 0.05])
    assert np.allclose(table.varrho, 0.5, atol=1e-9)


def test_deviation_limit_on_quadratic_steering(heis, quadratic_curve):
    table = deviation_limit_check(heis, quadratic_curve, [0.3, 0.2, 0.1, 0.05])
    assert table.deviation_at_start == pytest.approx(0.0, abs=1e-12)
    # varrho shrinks linearly in t; the linear extrapolation lands on h(0) = 0
    t, rho = np.asarray(table.t), np.asarray(table.varrho)
    slope = (rho[-2] - rho[-1]) / (t[-2] - t[-1])
    assert abs(rho[-1] - slope * t[-1]) < 1e-3
    assert table.monotone


def test_deviation_limit_on_twisted_structure(twisted):
    c = integrate_prescribed_deviation(twisted, TEST_POINT, 0.2, "1 - t", (0, 0.3))
    table = deviation_limit_check(twisted, c, [0.2, 0.1, 0.05])
    assert table.deviation_at_start == pytest.approx(1.0, abs=1e-12)
    assert abs(table.varrho[-1] - 1.0) < 0.05
    assert table.monotone


@pytest.mark.parametrize("which", ["heis", "twisted"])
def test_radial_asymptotics_targets(request, which):
    structure = request.getfixturevalue(which)
    p = (0, 0, 0) if which == "heis" else TEST_POINT
    rep = radial_asymptotics(structure, p, 0.7, 0.8)
    i = rep.smallest_good_index()
    assert rep.delta_c[i] == pytest.approx(-4, rel=0.03)
    assert rep.delta2_c_gamma_reeb[i] == pytest.approx(-6, rel=0.03)
    assert rep.delta2_hc[i] == pytest.approx(4, rel=0.03)
    assert rep.reeb_bounded()
    assert rep.sigma_perp_scaled[i] == pytest.approx(0.5, rel=0.01)
    assert rep.sigma_zero_scaled[i] == pytest.approx(-1 / 6, rel=0.01)


def test_radial_asymptotics_reports_singular_system(heis):
    rep = radial_asymptotics(heis, (0, 0, 0), 0.2, 0.3, t_grid=np.array([2e-4, 1e-4]))
    assert not np.any(rep.well_conditioned)
    with pytest.raises(SingularSystemError):
        rep.smallest_good_index()
