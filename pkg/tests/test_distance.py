import math

import numpy as np
import pytest

from contact_kappa.curves import integrate_prescribed_deviation
from contact_kappa.distance import (
    AmbiguousMinimizerWarning,
    NotSmoothPointError,
    OutOfChartError,
    direct_method_oracle,
    heisenberg_exp,
    heisenberg_inverse,
    radial_data,
    shoot_distance,
)

from conftest import TEST_POINT


def test_horizontal_segment(heis):
    r = shoot_distance(heis, (0, 0, 0), (0.3, 0, 0))
    assert r.d == pytest.approx(0.3, abs=1e-12)
    assert r.phi == pytest.approx(0.0, abs=1e-10) and r.h0 == pytest.approx(0.0, abs=1e-10)
    assert r.conjugate_margin > 0


def test_vertical_point_is_ambiguous(heis):
    with pytest.warns(AmbiguousMinimizerWarning):
        r = shoot_distance(heis, (0, 0, 0), (0, 0, 0.1))
    assert r.d == pytest.approx(math.sqrt(0.4 * math.pi), abs=1e-9)
    assert r.ambiguous
    with pytest.raises(NotSmoothPointError):
        radial_data(heis, (0, 0, 0), (0, 0, 0.1), result=r)


def test_same_point_short_circuits(twisted):
    r = shoot_distance(twisted, TEST_POINT, TEST_POINT)
    assert r.d == 0.0 and r.n_solutions_found == 0


def test_out_of_chart(twisted):
    with pytest.raises(OutOfChartError):
        shoot_distance(twisted, TEST_POINT, (0.9, 0, 0))


def test_closed_form_inverse_round_trip():
    rng = np.random.default_rng(3)
    for q in rng.uniform(-0.5, 0.5, (10, 3)):
        phi, k, t = heisenberg_inverse(q)
        assert np.allclose(heisenberg_exp(phi, k, t), q, atol=1e-12)


def test_heisenberg_distance_matches_closed_form(heis):
    rng = np.random.default_rng(4)
    for q in rng.uniform(-0.4, 0.4, (6, 3)):
        assert shoot_distance(heis, (0, 0, 0), q).d == pytest.approx(heisenberg_inverse(q)[2], abs=1e-10)


@pytest.mark.parametrize("which", ["heis", "twisted"])
def test_symmetry(request, which):
    structure = request.getfixturevalue(which)
    rng = np.random.default_rng(5)
    base = np.array(TEST_POINT)
    for _ in range(3):
        p, q = base + rng.uniform(-0.15, 0.15, (2, 3))
        assert shoot_distance(structure, p, q).d == pytest.approx(shoot_distance(structure, q, p).d, abs=1e-9)


def test_triangle_inequality(twisted):
    rng = np.random.default_rng(6)
    base = np.array(TEST_POINT)
    for _ in range(3):
        p, m, q = base + rng.uniform(-0.15, 0.15, (3, 3))
        d = lambda a, b: shoot_distance(twisted, a, b).d  # noqa: E731
        assert d(p, q) <= d(p, m) + d(m, q) + 1e-12


def test_oracle_on_segment(heis):
    assert direct_method_oracle(heis, (0, 0, 0), (0.3, 0, 0)) == pytest.approx(0.3, abs=1e-6)


@pytest.mark.parametrize("which,q", [("heis", (0.2, -0.1, 0.05)), ("twisted", (0.25, 0.1, 0.04))])
def test_oracle_is_tight_upper_bound(request, which, q):
    structure = request.getfixturevalue(which)
    p = (0, 0, 0) if which == "heis" else TEST_POINT
    shot = shoot_distance(structure, p, q).d
    oracle = direct_method_oracle(structure, p, q)
    assert oracle >= shot - 1e-9
    assert oracle - shot < (1e-6 if which == "heis" else 1e-5)


def test_radial_data_on_x_axis(heis):
    rd = radial_data(heis, (0, 0, 0), (0.3, 0, 0), velocity_direction=0.0)
    assert rd.theta == pytest.approx(0.0, abs=1e-10)
    assert rd.varrho == pytest.approx(0.0, abs=1e-10)


def test_radial_field_is_distance_gradient(twisted):
    q = np.array([0.3, 0.1, 0.05])
    r = shoot_distance(twisted, TEST_POINT, q)
    gamma = r.endpoint.h1 * twisted.horizontal_frame(q)[0] + r.endpoint.h2 * twisted.horizontal_frame(q)[1]
    s = 1e-4
    slope = (shoot_distance(twisted, TEST_POINT, q + s * gamma).d - shoot_distance(twisted, TEST_POINT, q - s * gamma).d) / (2 * s)
    assert slope == pytest.approx(1.0, abs=1e-4)


def test_endpoint_momentum_pairs_to_one(twisted):
    r = shoot_distance(twisted, TEST_POINT, (0.2, 0.3, -0.03))
    end = r.endpoint
    # the velocity is h1 X1 + h2 X2, so its pairing with the covector is h1^2 + h2^2
    assert end.h1**2 + end.h2**2 == pytest.approx(1.0, abs=1e-9)


def test_radial_deviation_tends_to_curve_deviation(twisted):
    c = integrate_prescribed_deviation(twisted, TEST_POINT, 0.3, "0.5 + t", (0, 0.3))
    h_start = float(c.characteristic_deviation(0.0))
    gaps = []
    for t in (0.2, 0.1, 0.05):
        gaps.append(abs(radial_data(twisted, TEST_POINT, c.position(t)).varrho - h_start))
    assert gaps[-1] < 0.05
    assert gaps[0] > gaps[1] > gaps[2]
