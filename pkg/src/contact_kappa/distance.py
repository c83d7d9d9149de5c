"""Sub-Riemannian distance by geodesic shooting, with a direct-method oracle.

Shooting solves ``exp_p(phi, h0, t) = q`` for ``(phi, h0, t)`` and reports the
smallest ``t`` among converged solutions.  The start grid ``phi = 2 pi k / n_phi``,
``h0 in {0, +-j h_max / n_h}`` is first pushed through Newton on the nilpotent
model at ``p`` (Heisenberg geodesics in the frame ``(X0, X1, X2)`` at ``p``,
in closed form); the distinct short solutions of that model seed Newton on
the true exponential map, whose Jacobian comes from the variational flow.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize

from .geodesics import (
    EXPANSION_TOL,
    HamiltonianState,
    conjugate_time,
    frame_momenta,
    initial_covector,
    integrate_batch,
)
from .structure import ContactStructure


class ShootingError(RuntimeError):
    def __init__(self, message, best_residual=None):
        self.best_residual = best_residual
        super().__init__(message if best_residual is None else f"{message} (best residual {best_residual:.3e})")


class OutOfChartError(ValueError):
    pass


class NotSmoothPointError(ValueError):
    pass


class InfeasibleError(RuntimeError):
    pass


class AmbiguousMinimizerWarning(UserWarning):
    pass


@dataclass
class ShootingOptions:
    n_phi: int = 8
    n_h: int = 6
    h_max_factor: float = 4.0
    coarse_rtol: float = 1e-10
    fine_rtol: float = EXPANSION_TOL
    residual_tol: float = 1e-12
    max_iter: int = 50
    dedupe_tol: float = 1e-8
    tie_tol: float = 1e-9
    conjugate_check: bool = True
    max_candidates: int = 4


@dataclass
class DistanceResult:
    d: float
    phi: float
    h0: float
    t: float
    residual: float
    n_solutions_found: int
    conjugate_margin: float | None
    margin_is_lower_bound: bool = False
    ambiguous: bool = False
    endpoint: HamiltonianState | None = None
    solutions: list = field(default_factory=list)


@dataclass(frozen=True)
class RadialData:
    gamma_angle: float
    varrho: float
    theta: float | None


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


# --- nilpotent model ---------------------------------------------------------


def _phase(s):
    """``(e^{is} - 1) / (is)`` and ``(s - sin s) / (2 s^2)`` with small-s series."""
    s = np.asarray(s, dtype=float)
    small = np.abs(s) < 1e-3
    safe = np.where(small, 1.0, s)
    re = np.where(small, 1 - s**2 / 6 + s**4 / 120, np.sin(safe) / safe)
    im = np.where(small, s / 2 - s**3 / 24, (1 - np.cos(safe)) / safe)
    zf = np.where(small, s / 12 - s**3 / 240, (safe - np.sin(safe)) / (2 * safe**2))
    return re, im, zf


def heisenberg_exp(phi, k, t):
    """Closed-form Heisenberg geodesic from the origin; rows ``(x, y, z)``."""
    re, im, zf = _phase(k * t)
    c, s = np.cos(phi), np.sin(phi)
    return np.stack([t * (c * re - s * im), t * (s * re + c * im), t * t * zf], axis=-1)


def heisenberg_inverse(target):
    """Minimizing Heisenberg geodesic ``(phi, k, t)`` to ``target`` from the origin."""
    x, y, z = target
    rho = math.hypot(x, y)
    if z == 0.0:
        return math.atan2(y, x), 0.0, rho
    if rho == 0.0:
        k = math.copysign(math.sqrt(math.pi / abs(z)), z)
        return 0.0, k, 2 * math.pi / abs(k)
    ratio = abs(z) / rho**2

    def f(s):
        return (s - math.sin(s)) / (8 * math.sin(s / 2) ** 2) - ratio

    s = brentq(f, 1e-12, 2 * math.pi - 1e-12, xtol=1e-15)
    k = math.copysign(2 * math.sin(s / 2) / rho, z)
    t = s / abs(k)
    re, im, _ = _phase(k * t)
    phi = math.atan2(y, x) - math.atan2(im, re)
    return float(wrap_angle(phi)), k, t


def _nilpotent_newton(target, starts, iters=60):
    """Batched Newton for ``heisenberg_exp(phi, k, t) = target``."""
    params = starts.copy()
    scale = max(np.linalg.norm(target), 1e-300)
    h = 1e-7
    for _ in range(iters):
        f = heisenberg_exp(*params.T) - target
        jac = np.empty((len(params), 3, 3))
        for j in range(3):
            dp = np.zeros(3)
            dp[j] = h * max(1.0, abs(params[:, j]).max())
            jac[:, :, j] = (heisenberg_exp(*(params + dp).T) - heisenberg_exp(*(params - dp).T)) / (2 * dp[j])
        try:
            step = np.linalg.solve(jac, -f[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.stack([np.linalg.lstsq(a, -b, rcond=None)[0] for a, b in zip(jac, f)])
        step = np.nan_to_num(step)
        limit = np.maximum(np.abs(step[:, 0]), np.abs(step[:, 2]) / max(params[:, 2].max(), 1e-12))
        step *= np.minimum(1.0, 0.5 / np.maximum(limit, 1e-300))[:, None]
        params = params + step
        flip = params[:, 2] < 0
        params[flip] = np.column_stack([params[flip, 0] + np.pi, -params[flip, 1], -params[flip, 2]])
        params[:, 0] = wrap_angle(params[:, 0])
    res = np.linalg.norm(heisenberg_exp(*params.T) - target, axis=1) / scale
    return params, res


# --- true exponential map -----------------------------------------------------


def _shoot(structure, p, params, rtol):
    """Endpoints and Jacobians d(endpoint)/d(phi, h0, t) for a batch."""
    phi, h0, t = params.T
    lam0 = initial_covector(structure, p, phi, h0)
    theta = structure.frame_data(p[None]).coframe[0]
    cols0 = np.zeros((len(params), 2, 6))
    cols0[:, 0, 3:] = -np.sin(phi)[:, None] * theta[1] + np.cos(phi)[:, None] * theta[2]
    cols0[:, 1, 3:] = theta[0]
    qf, lamf, cols = integrate_batch(structure, p, lam0, t, cols0, rtol=rtol, atol=rtol)
    x = structure.horizontal_jets(qf, 0)[0]
    u = np.einsum("mic,mc->mi", x, lamf)
    qdot = np.einsum("mi,mic->mc", u, x)
    jac = np.stack([cols[:, 0, :3], cols[:, 1, :3], qdot], axis=-1)
    return qf, jac, lamf


def _normalize(params):
    params = params.copy()
    flip = params[:, 2] < 0
    params[flip] = np.column_stack([params[flip, 0] + np.pi, -params[flip, 1], -params[flip, 2]])
    params[:, 0] = wrap_angle(params[:, 0])
    return params


def _newton(structure, p, q, params, rtol, tol, max_iter, h_cap, t_cap):
    """Damped Newton with backtracking on the endpoint residual (batched)."""
    params = _normalize(params)
    qf, jac, lam = _shoot(structure, p, params, rtol)
    res = np.linalg.norm(qf - q, axis=1)
    active = np.ones(len(params), bool)
    stalls = np.zeros(len(params), int)
    for _ in range(max_iter):
        active &= res > tol
        active &= stalls < 3
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]
        try:
            step = np.linalg.solve(jac[idx], (q - qf[idx])[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.stack([np.linalg.lstsq(jac[i], q - qf[i], rcond=None)[0] for i in idx])
        step = np.nan_to_num(step)
        # keep each step modest in angle and relative time
        limit = np.maximum(np.abs(step[:, 0]) / 0.5, np.abs(step[:, 2]) / (0.5 * params[idx, 2] + 1e-3))
        step *= np.minimum(1.0, 1.0 / np.maximum(limit, 1e-300))[:, None]
        alpha = np.ones(len(idx))
        pending = np.arange(len(idx))
        for _ in range(12):
            trial = _normalize(params[idx[pending]] + alpha[pending, None] * step[pending])
            trial[:, 1] = np.clip(trial[:, 1], -h_cap, h_cap)
            trial[:, 2] = np.clip(trial[:, 2], 1e-12, t_cap)
            tq, tj, tl = _shoot(structure, p, trial, rtol)
            tres = np.linalg.norm(tq - q, axis=1)
            ok = tres < (1 - 1e-4 * alpha[pending]) * res[idx[pending]]
            # at the noise floor accept non-increasing residuals
            ok |= (tres <= res[idx[pending]]) & (tres < 1e3 * tol)
            acc = idx[pending[ok]]
            params[acc], qf[acc], jac[acc], lam[acc], res[acc] = trial[ok], tq[ok], tj[ok], tl[ok], tres[ok]
            stalls[acc] = 0
            pending = pending[~ok]
            if len(pending) == 0:
                break
            alpha[pending] *= 0.5
        stalls[idx[pending]] += 1
    return params, res, qf, lam


def _dedupe(params, res, tol):
    order = np.lexsort((np.abs(params[:, 0]), np.abs(params[:, 1]), params[:, 2]))
    kept = []
    for i in order:
        if all(
            np.abs(wrap_angle(params[i, 0] - params[j, 0])) > tol
            or abs(params[i, 1] - params[j, 1]) > tol * max(1.0, abs(params[j, 1]))
            or abs(params[i, 2] - params[j, 2]) > tol
            for j in kept
        ):
            kept.append(i)
    return kept


def _seeds(structure, p, q, opts):
    data = structure.frame_data(p[None])
    target = np.linalg.solve(data.frame[0].T, q - p)  # (a0, a1, a2)
    target = target[[1, 2, 0]]  # model coordinates (x, y, z)
    r = np.linalg.norm(q - p)
    h_max = opts.h_max_factor / r
    phis = 2 * np.pi * np.arange(opts.n_phi) / opts.n_phi
    hs = np.concatenate([[0.0], np.arange(1, opts.n_h + 1) * h_max / opts.n_h])
    hs = np.concatenate([hs, -hs[1:]])
    grid = np.array([(a, b) for a in phis for b in hs])
    # start time: best nilpotent residual over a time grid
    scale = np.linalg.norm(target)
    t_grid = np.linspace(0.05, 4.0, 80) * max(math.sqrt(scale), scale)
    cand = heisenberg_exp(grid[:, 0, None], grid[:, 1, None], t_grid[None, :]) - target
    t0 = t_grid[np.argmin(np.linalg.norm(cand, axis=-1), axis=1)]
    starts = np.column_stack([grid, t0])
    exact = np.array([heisenberg_inverse(target)])
    starts = np.vstack([exact, starts])
    params, res = _nilpotent_newton(target, starts)
    good = res < 1e-9
    params = params[good]
    keep = _dedupe(params, np.zeros(len(params)), 1e-6)
    params = params[keep]
    t_min = params[:, 2].min()
    params = params[params[:, 2] <= 2.0 * t_min + 1e-12][: opts.max_candidates]
    return params, h_max


def shoot_distance(structure: ContactStructure, p, q, opts: ShootingOptions | None = None) -> DistanceResult:
    """Sub-Riemannian distance from ``p`` to a nearby ``q`` by shooting."""
    opts = opts or ShootingOptions()
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    for pt in (p, q):
        if not structure.in_box(pt):
            raise OutOfChartError(f"point {pt.tolist()} outside chart box {structure.box}")
    r = np.linalg.norm(q - p)
    if r == 0.0:
        return DistanceResult(0.0, 0.0, 0.0, 0.0, 0.0, 0, None)
    seeds, h_max = _seeds(structure, p, q, opts)
    h_cap, t_cap = 4 * h_max, 20 * max(r, math.sqrt(r))
    coarse_tol = max(1e3 * opts.residual_tol, 1e-9) * (1 + r)
    params, res, _, _ = _newton(structure, p, q, seeds, opts.coarse_rtol, coarse_tol, opts.max_iter, h_cap, t_cap)
    ok = res < max(1e-6 * (1 + r), 10 * coarse_tol)
    if not np.any(ok):
        raise ShootingError("shooting did not converge", float(res.min()))
    params = params[ok]
    params = params[_dedupe(params, res[ok], 1e-6)]
    t_min = params[:, 2].min()
    near = params[params[:, 2] <= t_min * (1 + 1e-4) + 1e-9]
    tol = opts.residual_tol * (1 + r)
    fine, fres, fq, flam = _newton(structure, p, q, near, opts.fine_rtol, tol, opts.max_iter, h_cap, t_cap)
    best_res = float(fres.min())
    if best_res > 1e-11 * (1 + r):
        raise ShootingError("shooting polish did not reach the residual target", best_res)
    good = fres <= max(10 * tol, 1e-11 * (1 + r))
    fine, fres, fq, flam = fine[good], fres[good], fq[good], flam[good]
    keep = _dedupe(fine, fres, opts.dedupe_tol)
    fine, fres, fq, flam = fine[keep], fres[keep], fq[keep], flam[keep]
    order = np.lexsort((np.abs(fine[:, 0]), np.abs(fine[:, 1]), fine[:, 2]))
    best = order[0]
    ambiguous = bool(len(order) > 1 and fine[order[1], 2] - fine[best, 2] < opts.tie_tol)
    if ambiguous:
        warnings.warn(
            f"two distinct minimizers tie in length within {opts.tie_tol:g}; q is near the cut locus",
            AmbiguousMinimizerWarning,
            stacklevel=2,
        )
    phi, h0, t = (float(v) for v in fine[best])
    h1, h2, h0_end = frame_momenta(structure, fq[best], flam[best])
    endpoint = HamiltonianState(fq[best], float(h1[0]), float(h2[0]), float(h0_end[0]))
    margin, lower = None, False
    if opts.conjugate_check:
        tc = conjugate_time(structure, p, phi, h0, 2 * t, rtol=1e-11, atol=1e-11, grid_points=200)
        margin, lower = (t, True) if tc is None else (tc - t, False)
    n_found = len(params)
    return DistanceResult(
        t, phi, h0, t, float(fres[best]), n_found, margin, lower, ambiguous, endpoint,
        [tuple(map(float, row)) for row in fine[order]],
    )


def radial_data(structure, p, q, velocity_direction=None, result: DistanceResult | None = None, opts=None) -> RadialData:
    """Radial field angle, radial deviation and the angle to a given direction.

    ``velocity_direction`` is an angle in the frame ``(X1, X2)`` at ``q``.
    """
    result = result or shoot_distance(structure, p, q, opts)
    if result.d == 0.0:
        raise NotSmoothPointError("q = p lies in its own cut locus")
    if result.ambiguous:
        raise NotSmoothPointError("minimizer is not unique (near the cut locus)")
    if result.conjugate_margin is not None and result.conjugate_margin <= 0:
        raise NotSmoothPointError("minimizer reaches a conjugate point")
    end = result.endpoint
    gamma = math.atan2(end.h2, end.h1)
    theta = None if velocity_direction is None else float(wrap_angle(velocity_direction - gamma))
    return RadialData(gamma, end.h0, theta)


# --- direct-method oracle ---------------------------------------------------------


def _rollout(structure, p, params, n_seg, substeps):
    """RK4 rollout of a piecewise-linear steering angle, with parameter sensitivities.

    ``params`` is ``(theta_0 .. theta_n, L)``.  Applying RK4 to the state plus
    its linearization yields the exact derivative of the discrete map.
    """
    n_par = len(params)
    thetas, length = params[:-1], params[-1]
    q = np.array(p, dtype=float)
    sens = np.zeros((3, n_par))
    h = 1.0 / (n_seg * substeps)

    def field(s, q, sens):
        seg = min(int(s * n_seg), n_seg - 1)
        w = s * n_seg - seg
        th = thetas[seg] * (1 - w) + thetas[seg + 1] * w
        jets = structure.horizontal_jets(q[None], 1)
        x, dx = jets[0][0], jets[1][0]
        c, sn = math.cos(th), math.sin(th)
        v = c * x[0] + sn * x[1]
        dv_dq = c * dx[0] + sn * dx[1]
        dv_dth = -sn * x[0] + c * x[1]
        dsens = length * dv_dq @ sens
        dsens[:, seg] += length * dv_dth * (1 - w)
        dsens[:, seg + 1] += length * dv_dth * w
        dsens[:, -1] += v
        return length * v, dsens

    for k in range(n_seg * substeps):
        s = k * h
        # stages at segment interior points only, so the kink sits on step edges
        k1 = field(s, q, sens)
        k2 = field(s + h / 2, q + h / 2 * k1[0], sens + h / 2 * k1[1])
        k3 = field(s + h / 2, q + h / 2 * k2[0], sens + h / 2 * k2[1])
        k4 = field(min(s + h, 1.0 - 1e-15), q + h * k3[0], sens + h * k3[1])
        q = q + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        sens = sens + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return q, sens


def _accurate_endpoint(structure, p, params, n_seg, tol=1e-12):
    """Endpoint of the same steering law integrated adaptively, segment by segment."""
    thetas, length = params[:-1], params[-1]
    q = np.array(p, dtype=float)
    for seg in range(n_seg):
        a, b = thetas[seg], thetas[seg + 1]

        def rhs(s, y, a=a, b=b, seg=seg):
            th = a + (b - a) * (s * n_seg - seg)
            x1, x2 = structure.horizontal_frame(y)
            return length * (math.cos(th) * x1 + math.sin(th) * x2)

        sol = solve_ivp(rhs, (seg / n_seg, (seg + 1) / n_seg), q, method="DOP853", rtol=tol, atol=tol)
        q = sol.y[:, -1]
    return q


def direct_method_oracle(structure, p, q, n_segments=32, iters=200, substeps=2, feasibility=1e-9):
    """Length of the shortest found horizontal curve from ``p`` to ``q``.

    The steering angle is piecewise linear on ``n_segments`` pieces; length
    is minimized under the endpoint constraint by SLSQP, then Gauss-Newton
    steps restore feasibility below ``feasibility``.  The returned length is
    an upper bound on the distance up to RK4 discretization error.
    """
    if n_segments < 16:
        raise ValueError("n_segments must be at least 16")
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if np.array_equal(p, q):
        return 0.0
    data = structure.frame_data(p[None])
    target = np.linalg.solve(data.frame[0].T, q - p)[[1, 2, 0]]
    phi, k, t = heisenberg_inverse(target)
    nodes = np.linspace(0.0, 1.0, n_segments + 1)
    x0 = np.concatenate([phi + k * t * nodes, [t]])
    cache = {}

    def roll(x):
        key = x.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = _rollout(structure, p, x, n_segments, substeps)
        return cache[key]

    cons = {
        "type": "eq",
        "fun": lambda x: roll(x)[0] - q,
        "jac": lambda x: roll(x)[1],
    }
    grad = np.zeros(len(x0))
    grad[-1] = 1.0
    sol = minimize(
        lambda x: x[-1],
        x0,
        jac=lambda x: grad,
        constraints=[cons],
        method="SLSQP",
        options={"maxiter": iters, "ftol": 1e-15},
    )
    x = sol.x
    # feasibility is judged on the adaptive integration of the same control,
    # so the returned length belongs to an actual horizontal curve; the RK4
    # sensitivities serve as an (inexact) Gauss-Newton Jacobian
    mismatch = np.inf
    for _ in range(30):
        end = _accurate_endpoint(structure, p, x, n_segments)
        mismatch = np.linalg.norm(end - q)
        if mismatch < 1e-3 * feasibility:
            break
        x = x - np.linalg.lstsq(roll(x)[1], end - q, rcond=None)[0]
    if mismatch >= feasibility:
        raise InfeasibleError(f"endpoint mismatch {mismatch:.3e} above {feasibility:g}")
    return float(x[-1])
