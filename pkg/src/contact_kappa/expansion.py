"""Numerical experiments on the short-distance behaviour along horizontal curves.

Four experiments live here:

* ``epsilon_sweep`` / ``fit_expansion``: the sixth-order defect
  ``eps^2 - d(zeta(t0), zeta(t0 + eps))^2`` and its coefficient, compared with
  ``k^2 / 720``.
* ``theta_profile``: the angle between the curve and the radial field.
* ``radial_asymptotics``: rescaled bracket coefficients of the radial frame
  recovered from Jacobi data along one geodesic.
* ``deviation_limit_check``: vertical momentum of the minimizers to points of a
  curve, compared with the curve's deviation at its start.

Negative ``eps`` are handled by running the curve backwards: the angle at
``zeta(t0 + eps)`` is measured against ``-zeta'``, so that both sides of
``t0`` describe the same geometric quantity and two-sided averages cancel odd
terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curves import HorizontalCurve, _richardson_derivative
from .distance import (
    ShootingError,
    ShootingOptions,
    radial_data,
    shoot_distance,
)
from .geodesics import integrate_with_variations, jacobi_fields

# d^2 accuracy the shooting solver is trusted to deliver at expansion tolerances
D2_ERROR_BUDGET = 1e-11
COND_LIMIT = 1e6


class SweepError(RuntimeError):
    def __init__(self, eps, cause):
        super().__init__(f"distance solve failed at eps={eps!r}: {cause}")
        self.eps = eps
        self.cause = cause


class NoiseDominatedError(ValueError):
    """The coefficient estimates do not settle; distances are too noisy for the grid."""


class SingularSystemError(ValueError):
    def __init__(self, t, condition):
        super().__init__(f"2x2 bracket system singular at t={t!r} (condition {condition:.3g})")
        self.t = t
        self.condition = condition


def default_epsilon_grid(eps_max=0.4, ratio=0.8, eps_min=0.08):
    """Signed grid ``+e, -e`` over a geometric ladder of magnitudes, largest first."""
    # the rung nearest eps_min closes the ladder (0.4 * 0.8^7 = 0.084 for the defaults)
    n = max(int(round(math.log(eps_min / eps_max) / math.log(ratio))), 0)
    mags = eps_max * ratio ** np.arange(n + 1)
    return np.array([s * m for m in mags for s in (1.0, -1.0)])


def _check_grid(eps):
    eps = np.asarray(eps, dtype=float)
    if np.any(eps == 0):
        raise ValueError("eps grid must not contain 0")
    mags = np.abs(eps)
    if np.any(np.diff(mags) > 0):
        raise ValueError("eps grid must be ordered by decreasing |eps|")
    return eps


def _pairs(eps):
    """Indices ``(i_plus, i_minus)`` for every magnitude present with both signs."""
    out = []
    for i, e in enumerate(eps):
        if e > 0:
            j = np.flatnonzero(np.isclose(eps, -e, rtol=1e-12, atol=0.0))
            if len(j):
                out.append((i, int(j[0])))
    return out


# --- sixth-order coefficient ------------------------------------------------------


@dataclass
class SweepTable:
    t0: float
    eps: np.ndarray
    d: np.ndarray
    results: list = field(default_factory=list, repr=False)

    @property
    def d2(self):
        return self.d**2


@dataclass
class ExpansionReport:
    curve_id: str
    t0: float
    eps: np.ndarray
    d2: np.ndarray
    coefficients: np.ndarray  # C(eps) = (eps^2 - d^2) / eps^6 per sample
    pair_eps: np.ndarray  # |eps| of each two-sided pair, decreasing
    averaged: np.ndarray  # (C(eps) + C(-eps)) / 2
    fitted: float
    uncertainty: float
    predicted: float
    relative_error: float
    noise_floor: float
    d2_bounded: bool  # d^2 <= eps^2 + 1e-12 everywhere
    # the averaged C(eps) are extrapolated as C + a eps^2; this is a working model
    model: str = "C + a*eps^2 on the three smallest |eps|"


def epsilon_sweep(structure, curve: HorizontalCurve, t0, eps_grid=None, opts: ShootingOptions | None = None) -> SweepTable:
    """Distances from ``zeta(t0)`` to ``zeta(t0 + eps)`` for each ``eps``."""
    eps = _check_grid(default_epsilon_grid() if eps_grid is None else eps_grid)
    lo, hi = curve.span
    if t0 + eps.min() < lo - 1e-12 or t0 + eps.max() > hi + 1e-12:
        raise ValueError(f"curve span {curve.span} does not contain t0 +/- max|eps|")
    p = curve.position(t0)
    opts = opts or ShootingOptions()
    d, results = [], []
    for e in eps:
        try:
            r = shoot_distance(structure, p, curve.position(t0 + e), opts)
        except (ShootingError, ValueError) as exc:
            raise SweepError(float(e), exc) from exc
        d.append(r.d)
        results.append(r)
    return SweepTable(float(t0), eps, np.array(d), results)


def _line_fit(x, y):
    """Least-squares ``y = c + a x``; returns ``(c, a)``."""
    a, c = np.polyfit(x, y, 1)
    return float(c), float(a)


def fit_expansion(table, k_at_t0, curve_id="curve", error_budget=D2_ERROR_BUDGET) -> ExpansionReport:
    """Fit the coefficient of ``eps^6`` in ``eps^2 - d^2`` and compare with ``k^2/720``.

    ``table`` is a :class:`SweepTable` or a ``(eps, d2)`` pair of arrays.
    """
    if isinstance(table, SweepTable):
        t0, eps, d2 = table.t0, table.eps, table.d2
    else:
        t0 = 0.0
        eps, d2 = (np.asarray(a, dtype=float) for a in table)
    eps = _check_grid(eps)
    pairs = _pairs(eps)
    if len(pairs) < 4:
        raise ValueError(f"need at least 4 two-sided eps pairs, got {len(pairs)}")
    coef = (eps**2 - d2) / eps**6
    mags = np.array([eps[i] for i, _ in pairs])
    averaged = np.array([(coef[i] + coef[j]) / 2 for i, j in pairs])

    noise = error_budget / mags**6
    steps = np.diff(averaged)
    significant = np.abs(steps) > noise[1:] + noise[:-1]
    signs = np.sign(steps[significant])
    if len(signs) and not (np.all(signs > 0) or np.all(signs < 0)):
        raise NoiseDominatedError(
            f"averaged coefficients {averaged.tolist()} are not monotone beyond the noise {noise.tolist()}"
        )

    fitted, _ = _line_fit(mags[-3:] ** 2, averaged[-3:])
    spread = float(np.ptp(averaged[-3:]))
    predicted = k_at_t0**2 / 720.0
    rel = abs(fitted - predicted) / max(predicted, 1e-12)
    bounded = bool(np.all(d2 <= eps**2 + 1e-12))
    return ExpansionReport(
        curve_id, float(t0), eps, np.asarray(d2), coef, mags, averaged,
        fitted, spread, predicted, rel, float(noise[-1]), bounded,
    )


def radial_integral_check(structure, curve: HorizontalCurve, t0, eps, nodes=8, opts=None):
    """Compare ``d(zeta(t0), zeta(t0+eps))`` with the integral of ``cos(theta)``.

    Along the curve the distance from ``zeta(t0)`` grows at rate ``cos(theta)``;
    Gauss-Legendre quadrature over ``(0, eps)`` uses one radial solve per node.
    Returns ``(direct, integrated)``.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * eps * (x + 1.0)
    th = theta_values(structure, curve, t0, s, opts)
    integrated = 0.5 * abs(eps) * float(np.dot(w, np.cos(th)))
    direct = shoot_distance(structure, curve.position(t0), curve.position(t0 + eps), opts).d
    return direct, integrated


# --- angle to the radial field ----------------------------------------------------


@dataclass
class ThetaProfile:
    eps: np.ndarray
    theta: np.ndarray
    first_derivative: float  # estimate of theta'(0)
    second_derivative: float  # estimate of theta''(0)
    predicted: float  # k(t0) / 6
    relative_error: float
    theta_shrinks: bool  # |theta| decreases with |eps|
    slope_shrinks: bool  # |theta / eps| decreases with |eps|
    varrho: np.ndarray = field(default=None, repr=False)


def theta_values(structure, curve: HorizontalCurve, t0, eps, opts=None, with_varrho=False):
    """Signed angle from the radial field to the (orientation-corrected) velocity."""
    p = curve.position(t0)
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    out, rho = [], []
    for e in eps:
        direction = float(curve.angle(t0 + e)) + (math.pi if e < 0 else 0.0)
        rd = radial_data(structure, p, curve.position(t0 + e), direction, opts=opts)
        out.append(rd.theta)
        rho.append(rd.varrho)
    out = np.array(out)
    return (out, np.array(rho)) if with_varrho else out


def _monotone_shrinking(values):
    """True when ``|values|`` never grows along a list ordered by decreasing |eps|."""
    mags = np.abs(values)
    return bool(np.all(np.diff(mags) <= 1e-15 + 1e-9 * mags[:-1]))


def theta_profile(structure, curve: HorizontalCurve, t0, eps_grid=None, opts=None) -> ThetaProfile:
    """Angle profile near ``t0`` and the extrapolated ``theta'(0)``, ``theta''(0)``."""
    eps = _check_grid(default_epsilon_grid() if eps_grid is None else eps_grid)
    theta, rho = theta_values(structure, curve, t0, eps, opts, with_varrho=True)
    pairs = _pairs(eps)
    if len(pairs) < 3:
        raise ValueError("need at least 3 two-sided eps pairs")
    mags = np.array([eps[i] for i, _ in pairs])
    even = np.array([(theta[i] + theta[j]) / 2 for i, j in pairs])
    odd = np.array([(theta[i] - theta[j]) / 2 for i, j in pairs])
    # even part = theta''(0)/2 eps^2 + O(eps^4); odd part / eps = theta'(0) + O(eps^2)
    half_second, _ = _line_fit(mags[-3:] ** 2, even[-3:] / mags[-3:] ** 2)
    first, _ = _line_fit(mags[-3:] ** 2, odd[-3:] / mags[-3:])
    second = 2.0 * half_second
    k = float(curve.geodesic_curvature(t0))
    predicted = k / 6.0
    rel = abs(second - predicted) / max(abs(predicted), 1e-12)
    pos = eps > 0
    neg = eps < 0
    shrinks = _monotone_shrinking(theta[pos]) and _monotone_shrinking(theta[neg])
    slope = theta / eps
    slope_shrinks = _monotone_shrinking(slope[pos]) and _monotone_shrinking(slope[neg])
    return ThetaProfile(eps, theta, first, second, predicted, rel, shrinks, slope_shrinks, rho)


# --- bracket asymptotics along a geodesic -----------------------------------------


@dataclass
class RadialAsymptoticsReport:
    t: np.ndarray
    delta_c: np.ndarray  # delta * c_{Gamma, J Gamma}^{J Gamma}
    delta2_c_gamma_reeb: np.ndarray  # delta^2 * c_{Gamma, X0}^{J Gamma}
    delta2_hc: np.ndarray  # delta^2 * (H c_{Gamma, J Gamma}^{J Gamma})
    delta2_jc: np.ndarray  # delta^2 * (J Gamma c_{Gamma, J Gamma}^{J Gamma}), boundedness only
    sigma_perp_scaled: np.ndarray  # sigma_perp / delta^2
    sigma_zero_scaled: np.ndarray  # sigma_0 / delta^3
    condition: np.ndarray  # condition number of the unscaled 2x2 matrix
    well_conditioned: np.ndarray
    targets: tuple = (-4.0, -6.0, 4.0)

    def columns(self):
        return {
            "delta_c": self.delta_c,
            "delta2_c_gamma_reeb": self.delta2_c_gamma_reeb,
            "delta2_hc": self.delta2_hc,
        }

    def smallest_good_index(self):
        idx = np.flatnonzero(self.well_conditioned)
        if not len(idx):
            raise SingularSystemError(float(self.t.min()), float(self.condition.min()))
        return int(idx[np.argmin(self.t[idx])])

    def converged(self, rel=0.10):
        """Cauchy test over the three smallest well-conditioned times."""
        idx = np.flatnonzero(self.well_conditioned)
        idx = idx[np.argsort(self.t[idx])][:3]
        out = {}
        for name, col in self.columns().items():
            v = col[idx]
            out[name] = bool(np.ptp(v) <= rel * np.max(np.abs(v)))
        return out

    def errors(self):
        """Relative distance to the targets at the smallest well-conditioned time."""
        i = self.smallest_good_index()
        return {
            name: abs(col[i] - tgt) / abs(tgt)
            for (name, col), tgt in zip(self.columns().items(), self.targets)
        }

    def reeb_bounded(self, ratio=10.0):
        """The J Gamma column stays within ``ratio`` of its size at the top of the last decade."""
        good = self.well_conditioned
        t_lo = self.t[good].min()
        window = good & (self.t <= 10 * t_lo * (1 + 1e-12))
        vals = np.abs(self.delta2_jc[window])
        top = np.abs(self.delta2_jc[window][np.argmax(self.t[window])])
        return bool(np.all(np.isfinite(vals)) and vals.max() <= ratio * max(top, 1.0))


def _bracket_unknowns(rec):
    """Solve the 2x2 system for ``(delta c, delta^2 c_{X0,Gamma})`` at each time.

    Both Jacobi coordinates ``sigma`` satisfy
    ``H^2 sigma + c1 H sigma + c2 sigma = 0`` with ``c1 = c_{Gamma,J Gamma}^{J Gamma}``
    and ``c2 = c_{X0,Gamma}^{J Gamma}``.
    """
    t = rec.t
    sp, s0 = rec.sigma[:, 0], rec.sigma[:, 1]
    hp, h0 = rec.h_sigma[:, 0], rec.h_sigma[:, 1]
    hhp, hh0 = rec.hh_sigma[:, 0], rec.hh_sigma[:, 1]
    scaled = np.empty((len(t), 2, 2))
    scaled[:, 0, 0] = hp / t
    scaled[:, 0, 1] = sp / t**2
    scaled[:, 1, 0] = h0 / t**2
    scaled[:, 1, 1] = s0 / t**3
    rhs = np.stack([-hhp, -hh0 / t], axis=-1)
    sol = np.linalg.solve(scaled, rhs[..., None])[..., 0]
    raw = np.stack([np.stack([hp, sp], -1), np.stack([h0, s0], -1)], 1)
    return sol[:, 0], sol[:, 1], np.linalg.cond(raw)


def _delta_c_along(trajectory, t):
    rec = jacobi_fields(trajectory, t)
    return _bracket_unknowns(rec)[0]


def radial_asymptotics(
    structure, p, phi, h0, t_grid=None, rtol=1e-12, atol=1e-12, diff_step=1e-3, fan_step=1e-4,
    cond_limit=COND_LIMIT,
) -> RadialAsymptoticsReport:
    """Rescaled radial-frame bracket coefficients along the geodesic ``(p, phi, h0)``.

    Arc length ``t`` plays the role of the distance from ``p``, so the grid must
    stay below the first conjugate time.
    """
    t = np.asarray(np.linspace(0.5, 0.05, 10) if t_grid is None else t_grid, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t grid must be positive")
    span = float(t.max()) + 4 * diff_step
    traj = integrate_with_variations(structure, p, phi, h0, span, rtol, atol)
    rec = jacobi_fields(traj, t)
    u, w, cond = _bracket_unknowns(rec)

    # d/dt (delta c) through the dense solution; the stencil stays inside (0, span]
    step = min(diff_step, 0.25 * float(t.min()))
    du = _richardson_derivative(lambda s: _delta_c_along(traj, s), t, h=step)
    hc = t * du - u

    # J^perp = -d/dphi and J^0 = d/dh0 at fixed t, by differences over nearby geodesics
    def fan(dphi, dh):
        tr = integrate_with_variations(structure, p, phi + dphi, h0 + dh, span, rtol, atol)
        return _delta_c_along(tr, t)

    d_phi = (fan(fan_step, 0.0) - fan(-fan_step, 0.0)) / (2 * fan_step)
    d_h0 = (fan(0.0, fan_step) - fan(0.0, -fan_step)) / (2 * fan_step)
    j_perp, j_zero = -d_phi, d_h0
    sp, s0 = rec.sigma[:, 0], rec.sigma[:, 1]
    b = s0 * rec.h_sigma[:, 0] - sp * rec.h_sigma[:, 1]
    jc = t * (sp * j_zero - s0 * j_perp) / b

    good = np.isfinite(u) & (cond <= cond_limit)
    return RadialAsymptoticsReport(
        t, u, -w, hc, jc, sp / t**2, s0 / t**3, cond, good,
    )


# --- vertical momentum of the radial minimizers -----------------------------------


@dataclass
class DeviationLimitTable:
    t: np.ndarray
    varrho: np.ndarray
    deviation_at_start: float
    monotone: bool  # |varrho - h(0)| never grows as t decreases


def deviation_limit_check(structure, curve: HorizontalCurve, t_grid, t0=0.0, opts=None) -> DeviationLimitTable:
    """``varrho(zeta(t))`` against the deviation ``h(t0)`` as ``t -> t0``."""
    t = np.asarray(t_grid, dtype=float)
    p = curve.position(t0)
    rho = []
    for s in t:
        rd = radial_data(structure, p, curve.position(s), opts=opts)
        rho.append(rd.varrho)
    rho = np.array(rho)
    h_start = float(curve.characteristic_deviation(t0))
    order = np.argsort(-np.abs(t - t0))
    gap = np.abs(rho[order] - h_start)
    # shooting recovers the vertical momentum only to about residual / t^3
    noise = 1e-9 + 1e-12 / np.abs(t[order] - t0) ** 3
    monotone = bool(np.all(np.diff(gap) <= noise[1:]))
    return DeviationLimitTable(t, rho, h_start, monotone)


__all__ = [
    "D2_ERROR_BUDGET",
    "DeviationLimitTable",
    "ExpansionReport",
    "NoiseDominatedError",
    "RadialAsymptoticsReport",
    "SingularSystemError",
    "SweepError",
    "SweepTable",
    "ThetaProfile",
    "default_epsilon_grid",
    "deviation_limit_check",
    "epsilon_sweep",
    "fit_expansion",
    "radial_asymptotics",
    "radial_integral_check",
    "theta_profile",
    "theta_values",
]
