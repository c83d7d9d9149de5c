"""Unit-speed horizontal curves, their characteristic deviation and curvature.

A curve is steered in the frame: ``q' = cos(theta) X1(q) + sin(theta) X2(q)``.
The angle comes either from an explicit law ``theta(t)`` or from a
prescribed deviation ``h(t)`` through
``theta' = h(t) + c12^1(q) cos(theta) + c12^2(q) sin(theta)``.

Initial data (``p0`` and, for deviation laws, ``theta0``) are attached at
``t = 0`` when the span contains it and at the left end otherwise; the ODE is
then integrated in both directions from there.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .expr import ScalarField, as_field
from .geodesics import IntegrationError, hamiltonian_rhs
from .structure import ContactStructure, build_structure, rotate_eta

T_CHART = ("t",)
DEFAULT_TOL = 1e-12
# margin integrated past each end of the span so derivative stencils stay inside
SPAN_PAD = 5e-3
DIFF_STEP = 1e-3


class OutOfSpanError(ValueError):
    pass


class NormalChartError(ValueError):
    pass


class NonContactError(ValueError):
    pass


def time_law(law) -> ScalarField:
    """A scalar law of the single variable ``t``."""
    return as_field(law, T_CHART)


def _law_derivs(law, t, order):
    """Value and first ``order`` derivatives of a t-law at times ``t``."""
    j = law.jet(np.asarray(t, dtype=float)[..., None], order)
    out = [j.value]
    if order >= 1:
        out.append(j.grad[0])
    if order >= 2:
        out.append(j.hess[0, 0])
    return out


def _richardson_derivative(f, t, h=DIFF_STEP):
    """Central difference with one Richardson step (fourth order)."""
    d1 = (f(t + h) - f(t - h)) / (2 * h)
    d2 = (f(t + 2 * h) - f(t - 2 * h)) / (4 * h)
    return (4 * d1 - d2) / 3


class _TwoSided:
    """Join a backward and a forward dense solution at ``t_init``."""

    def __init__(self, t_init, backward, forward):
        self.t_init = t_init
        self.backward = backward
        self.forward = forward

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        flat = np.atleast_1d(t)
        if self.backward is None:
            out = self.forward(flat)
        elif self.forward is None:
            out = self.backward(flat)
        else:
            left = flat < self.t_init
            out = np.empty((self.forward(flat[:1]).shape[0], flat.size))
            if np.any(left):
                out[:, left] = self.backward(flat[left])
            if np.any(~left):
                out[:, ~left] = self.forward(flat[~left])
        return out if t.ndim else out[:, 0]


@dataclass
class CurvatureProfile:
    t: np.ndarray
    h: np.ndarray
    k: np.ndarray


@dataclass
class HorizontalCurve:
    """Dense unit-speed horizontal curve ``t -> (q(t), theta(t))``."""

    structure: ContactStructure
    span: tuple
    kind: str  # "steering" | "deviation" | "geodesic"
    law: object
    solution: object
    t_init: float
    stats: dict = field(default_factory=dict)

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.span
        if np.any(t < lo - 1e-12) or np.any(t > hi + 1e-12):
            raise OutOfSpanError(f"t outside curve span [{lo}, {hi}]")
        return t

    def _raw(self, t):
        return self.solution(t)

    def position(self, t):
        t = self._check(t)
        y = self._raw(t)
        return np.moveaxis(y[:3], 0, -1)

    def angle(self, t):
        t = self._check(t)
        if self.kind == "steering":
            return _law_derivs(self.law, t, 0)[0]
        if self.kind == "geodesic":
            s = self._geodesic_states(t)
            return np.arctan2(s[..., 4], s[..., 3])
        return self._raw(t)[3]

    def _geodesic_states(self, t):
        return self.law.states(np.atleast_1d(t)).reshape(np.shape(t) + (6,))

    def angle_rate(self, t):
        t = self._check(t)
        if self.kind == "steering":
            return _law_derivs(self.law, t, 1)[1]
        if self.kind == "geodesic":
            s = self._geodesic_states(t)
            r = hamiltonian_rhs(self.structure, s)
            return s[..., 3] * r[..., 4] - s[..., 4] * r[..., 3]
        return _richardson_derivative(lambda u: self._raw(u)[3], t)

    def velocity(self, t):
        t = self._check(t)
        q = self.position(t)
        th = self.angle(t)
        x1, x2 = self.structure.horizontal_frame(q)
        return np.cos(th)[..., None] * x1 + np.sin(th)[..., None] * x2

    def characteristic_deviation(self, t):
        t = self._check(t)
        q = self.position(t)
        th = self.angle(t)
        c1, c2 = self.structure.characteristic_constants(np.atleast_2d(q))
        c1, c2 = c1.reshape(np.shape(th)), c2.reshape(np.shape(th))
        return self.angle_rate(t) - c1 * np.cos(th) - c2 * np.sin(th)

    def deviation_rate(self, t):
        """``d h / dt`` along the curve."""
        t = self._check(t)
        if self.kind == "deviation":
            return _law_derivs(self.law, t, 1)[1]
        if self.kind == "geodesic":
            return _richardson_derivative(self._deviation_unchecked, t, h=min(DIFF_STEP, self._edge_room(t)))
        th, thd, thdd = _law_derivs(self.law, t, 2)
        q = np.atleast_2d(self.position(t))
        (c1, c2), (g1, g2) = self.structure.characteristic_constants(q, with_grad=True)
        x1, x2 = self.structure.horizontal_frame(q)
        cth, sth = np.cos(th).reshape(-1), np.sin(th).reshape(-1)
        vel = cth[:, None] * x1 + sth[:, None] * x2
        dc1 = np.sum(g1 * vel, -1)
        dc2 = np.sum(g2 * vel, -1)
        thd = np.reshape(thd, -1)
        out = np.reshape(thdd, -1) - dc1 * cth - dc2 * sth + (c1 * sth - c2 * cth) * thd
        return out.reshape(np.shape(t))

    def _deviation_unchecked(self, t):
        s = self._geodesic_states(t)
        th = np.arctan2(s[..., 4], s[..., 3])
        r = hamiltonian_rhs(self.structure, s)
        rate = s[..., 3] * r[..., 4] - s[..., 4] * r[..., 3]
        c1, c2 = self.structure.characteristic_constants(np.atleast_2d(s[..., :3]))
        return rate - c1.reshape(th.shape) * np.cos(th) - c2.reshape(th.shape) * np.sin(th)

    def _edge_room(self, t):
        lo, hi = self.span
        room = np.min(np.minimum(np.asarray(t) - lo, hi - np.asarray(t)))
        return max(room / 2.0, 1e-5)

    def eta_along(self, t):
        """``eta`` of the unit velocity at each time."""
        t = self._check(t)
        c = self.structure.frame_data(np.atleast_2d(self.position(t))).c
        eta1 = c[:, 1, 0, 1]
        iota1 = 0.5 * (c[:, 2, 0, 1] + c[:, 1, 0, 2])
        return rotate_eta(eta1, iota1, np.reshape(self.angle(t), -1)).reshape(np.shape(t))

    def geodesic_curvature(self, t):
        """``k = dh/dt - eta(velocity)``."""
        return self.deviation_rate(t) - self.eta_along(t)

    def curvature_profile(self, t_grid) -> CurvatureProfile:
        t_grid = np.asarray(t_grid, dtype=float)
        return CurvatureProfile(t_grid, self.characteristic_deviation(t_grid), self.geodesic_curvature(t_grid))


def _t_init(span):
    lo, hi = span
    if not lo < hi:
        raise ValueError("span must be increasing")
    return 0.0 if lo <= 0.0 <= hi else lo


def _solve_both_ways(rhs, y0, span, t_init, tol, pad=SPAN_PAD):
    lo, hi = span
    pieces = []
    stats = {"nfev": 0, "steps": 0}
    for end in (lo - pad, hi + pad):
        if end == t_init:
            pieces.append(None)
            continue
        sol = solve_ivp(rhs, (t_init, end), y0, method="DOP853", rtol=tol, atol=tol, dense_output=True)
        if not sol.success:
            raise IntegrationError(f"curve integration failed: {sol.message}")
        stats["nfev"] += sol.nfev
        stats["steps"] += len(sol.t) - 1
        pieces.append(sol.sol)
    return _TwoSided(t_init, pieces[0], pieces[1]), stats


def integrate_steered(structure, p0, theta_law, span, tol=DEFAULT_TOL) -> HorizontalCurve:
    """Curve with velocity ``cos(theta(t)) X1 + sin(theta(t)) X2``."""
    law = time_law(theta_law)
    span = (float(span[0]), float(span[1]))
    t0 = _t_init(span)

    def rhs(t, y):
        th = _law_derivs(law, np.array(t), 0)[0]
        x1, x2 = structure.horizontal_frame(y[:3])
        return np.cos(th) * x1 + np.sin(th) * x2

    sol, stats = _solve_both_ways(rhs, np.asarray(p0, dtype=float), span, t0, tol)
    return HorizontalCurve(structure, span, "steering", law, sol, t0, stats)


def integrate_prescribed_deviation(structure, p0, theta0, h_law, span, tol=DEFAULT_TOL) -> HorizontalCurve:
    """Curve whose characteristic deviation equals ``h_law``."""
    law = time_law(h_law)
    span = (float(span[0]), float(span[1]))
    t0 = _t_init(span)

    def rhs(t, y):
        q, th = y[:3], y[3]
        h = _law_derivs(law, np.array(t), 0)[0]
        c1, c2 = structure.characteristic_constants(q[None])
        x1, x2 = structure.horizontal_frame(q)
        return np.concatenate([np.cos(th) * x1 + np.sin(th) * x2, [h + c1[0] * np.cos(th) + c2[0] * np.sin(th)]])

    y0 = np.concatenate([np.asarray(p0, dtype=float), [float(theta0)]])
    sol, stats = _solve_both_ways(rhs, y0, span, t0, tol)
    return HorizontalCurve(structure, span, "deviation", law, sol, t0, stats)


def curve_from_geodesic(trajectory) -> HorizontalCurve:
    """View the projection of a geodesic as a horizontal curve on ``[0, span]``."""

    def positions(t):
        return trajectory.states(np.atleast_1d(t)).T[:3].reshape((3,) + np.shape(t))

    return HorizontalCurve(trajectory.structure, (0.0, trajectory.span), "geodesic", trajectory, positions, 0.0)


def characteristic_deviation(curve: HorizontalCurve, t):
    return curve.characteristic_deviation(t)


def geodesic_curvature(curve: HorizontalCurve, t):
    return curve.geodesic_curvature(t)


def isoperimetric_structure(surface_frame, one_form, box=None) -> ContactStructure:
    """Contact structure ``ker(dz - A)`` lifted from a planar frame ``(Y1, Y2)`` and one-form ``A``.

    ``surface_frame`` is ``((Y1x, Y1y), (Y2x, Y2y))`` and ``one_form`` is
    ``(Ax, Ay)``; all are expressions in ``x`` and ``y``.  The lifted frame is
    ``X_i = (Y_i, A(Y_i))``.
    """
    (y1x, y1y), (y2x, y2y) = [[f"({e})" for e in pair] for pair in surface_frame]
    ax, ay = [f"({e})" for e in one_form]
    area = ScalarField.parse(f"{ay}", ("x", "y", "z")), ScalarField.parse(f"{ax}", ("x", "y", "z"))
    structure_box = box or ((-1.0, 1.0),) * 3
    axes = [np.linspace(lo, hi, 5) for lo, hi in structure_box]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    d_ay = area[0].jet(grid, 1).grad[0]
    d_ax = area[1].jet(grid, 1).grad[1]
    curl = np.broadcast_to(d_ay - d_ax, grid.shape[:1])
    bad = np.nonzero(np.abs(curl) < 1e-12)[0]
    if len(bad):
        raise NonContactError(f"dA vanishes at {grid[bad[0]].tolist()}; the lift is not contact")
    x1 = (y1x, y1y, f"{ax}*{y1x} + {ay}*{y1y}")
    x2 = (y2x, y2y, f"{ax}*{y2x} + {ay}*{y2y}")
    return build_structure(x1, x2, name="isoperimetric lift", box=structure_box)


def isoperimetric_lift(surface_frame, one_form, planar_law, base_point=(0.0, 0.0), span=(0.0, 1.0), tol=DEFAULT_TOL, box=None):
    """Lift a planar steering law to the structure built by :func:`isoperimetric_structure`.

    The planar angle law lifts unchanged; the lift starts at height ``z = 0``.
    """
    structure = isoperimetric_structure(surface_frame, one_form, box)
    p0 = np.array([base_point[0], base_point[1], 0.0])
    return structure, integrate_steered(structure, p0, planar_law, span, tol)


def normal_coordinate_limit(curve: HorizontalCurve, t_grid):
    """Extrapolate ``12 z / (x^2 + y^2)^(3/2)`` to ``t = 0``.

    The curve must start at the chart origin at ``t = 0`` on a chart flagged
    as normal coordinates.  The last three grid values are extrapolated with
    the quadratic through them.
    """
    if not curve.structure.normal_chart:
        raise NormalChartError(f"structure {curve.structure.name!r} is not flagged as normal coordinates")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size < 3 or np.any(np.diff(np.abs(t_grid)) >= 0) or np.any(t_grid == 0):
        raise ValueError("t_grid must decrease strictly in |t| toward 0 (at least 3 nonzero values)")
    origin = curve.position(0.0)
    if np.linalg.norm(origin) > 1e-12:
        raise ValueError("curve must pass through the chart origin at t = 0")
    q = curve.position(t_grid)
    ratio = 12 * q[:, 2] / (q[:, 0] ** 2 + q[:, 1] ** 2) ** 1.5
    tt, rr = t_grid[-3:], ratio[-3:]
    coeffs = np.polyfit(tt, rr, 2)
    return float(coeffs[-1]), ratio
