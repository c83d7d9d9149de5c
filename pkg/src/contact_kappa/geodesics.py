"""Sub-Riemannian Hamiltonian flow, its linearization, and Jacobi fields.

States are reported in frame momenta ``(x, y, z, h1, h2, h0)`` where
``h_i = <lambda, X_i>``.  Integration itself runs in canonical cotangent
coordinates ``(q, lambda)`` with ``H = ((lambda.X1)^2 + (lambda.X2)^2) / 2``:
the right-hand side then needs only first partials of the horizontal frame
(second partials for the variational equations), all exact from jets.
:func:`hamiltonian_rhs` gives the same vector field in frame momenta through
the structure constants and serves as an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .structure import ContactStructure

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-10
EXPANSION_TOL = 1e-13


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class HamiltonianState:
    q: np.ndarray
    h1: float
    h2: float
    h0: float

    @property
    def energy(self):
        return 0.5 * (self.h1**2 + self.h2**2)

    def as_array(self):
        return np.concatenate([self.q, [self.h1, self.h2, self.h0]])


def hamiltonian_rhs(structure: ContactStructure, state) -> np.ndarray:
    """Hamiltonian vector field in frame momenta; ``state`` is ``(..., 6)``.

    ``q' = h1 X1 + h2 X2`` and ``h_j' = sum_{i=1,2} sum_k c_ij^k h_i h_k``.
    """
    state = np.asarray(state, dtype=float)
    flat = state.reshape(-1, 6)
    data = structure.frame_data(flat[:, :3])
    h = flat[:, [5, 3, 4]]  # indexed by frame label 0, 1, 2
    qdot = h[:, 1:2] * data.frame[:, 1] + h[:, 2:3] * data.frame[:, 2]
    hdot = np.einsum("nijk,ni,nk->nj", data.c[:, 1:3], h[:, 1:3], h)
    out = np.concatenate([qdot, hdot[:, [1, 2, 0]]], axis=1)
    return out.reshape(state.shape)


def initial_covector(structure, p, phi, h0):
    """Canonical covector with ``h1 = cos(phi)``, ``h2 = sin(phi)``, ``h0 = h0``."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    h0 = np.atleast_1d(np.asarray(h0, dtype=float))
    theta = structure.frame_data(np.atleast_2d(p)).coframe[0]
    return h0[:, None] * theta[0] + np.cos(phi)[:, None] * theta[1] + np.sin(phi)[:, None] * theta[2]


def _canonical_rhs(structure, y, ncols, scale=None):
    """Batched canonical flow with ``ncols`` tangent columns.

    ``y`` has shape ``(M, 6 + 6 * ncols)``; columns are ``(dq, dlambda)`` pairs.
    """
    q, lam = y[:, :3], y[:, 3:6]
    jets = structure.horizontal_jets(q, 2 if ncols else 1)
    X, dX = jets[0], jets[1]  # (M,2,3), (M,2,3,3)
    u = np.einsum("mic,mc->mi", X, lam)
    qdot = np.einsum("mi,mic->mc", u, X)
    lam_dX = np.einsum("mc,micd->mid", lam, dX)  # grad of (lambda . X_i)
    ldot = -np.einsum("mi,mid->md", u, lam_dX)
    parts = [qdot, ldot]
    if ncols:
        d2X = jets[2]
        cols = y[:, 6:].reshape(-1, ncols, 6)
        dq, dl = cols[..., :3], cols[..., 3:]
        du = np.einsum("mic,mnc->mni", X, dl) + np.einsum("mid,mnd->mni", lam_dX, dq)
        dqdot = np.einsum("mni,mic->mnc", du, X) + np.einsum("mi,micd,mnd->mnc", u, dX, dq)
        lam_d2X = np.einsum("mc,micde->mide", lam, d2X)
        dldot = -(
            np.einsum("mni,mid->mnd", du, lam_dX)
            + np.einsum("mi,mnc,micd->mnd", u, dl, dX)
            + np.einsum("mi,mide,mne->mnd", u, lam_d2X, dq)
        )
        parts.append(np.concatenate([dqdot, dldot], axis=-1).reshape(len(y), -1))
    out = np.concatenate(parts, axis=1)
    if scale is not None:
        out = out * scale[:, None]
    return out


def integrate_batch(structure, q0, lam0, times, cols0=None, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL):
    """Flow ``M`` canonical states to their own final times in one solve.

    Time is rescaled to ``s`` in ``[0, 1]`` per trajectory so every member
    ends together.  Returns the final ``(q, lambda, cols)`` arrays.
    """
    lam0 = np.atleast_2d(lam0)
    m = len(lam0)
    q0 = np.broadcast_to(np.asarray(q0, dtype=float), (m, 3))
    times = np.broadcast_to(np.asarray(times, dtype=float), (m,)).copy()
    ncols = 0 if cols0 is None else cols0.shape[1]
    y0 = np.concatenate([q0, lam0] + ([cols0.reshape(m, -1)] if ncols else []), axis=1)
    width = y0.shape[1]

    def rhs(s, flat):
        return _canonical_rhs(structure, flat.reshape(m, width), ncols, times).ravel()

    sol = solve_ivp(rhs, (0.0, 1.0), y0.ravel(), method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegrationError(sol.message)
    yf = sol.y[:, -1].reshape(m, width)
    cols = yf[:, 6:].reshape(m, ncols, 6) if ncols else None
    return yf[:, :3], yf[:, 3:6], cols


def frame_momenta(structure, q, lam):
    """``(h1, h2, h0)`` for canonical covectors ``lam`` at points ``q``."""
    frame = structure.frame_data(np.atleast_2d(q)).frame
    h = np.einsum("nic,nc->ni", frame, np.atleast_2d(lam))
    return h[:, 1], h[:, 2], h[:, 0]


def _momentum_map(data, lam):
    """Jacobian of ``(q, lambda) -> (q, h1, h2, h0)`` at each point."""
    n = len(lam)
    m = np.zeros((n, 6, 6))
    m[:, :3, :3] = np.eye(3)
    order = [1, 2, 0]
    for row, i in enumerate(order):
        m[:, 3 + row, :3] = np.einsum("nc,ncd->nd", lam, data.frame_grad[:, i])
        m[:, 3 + row, 3:] = data.frame[:, i]
    return m


@dataclass
class GeodesicTrajectory:
    """Arc-length geodesic with its variational fundamental matrix."""

    structure: ContactStructure
    p: np.ndarray
    phi: float
    h0_init: float
    span: float
    sol: object  # OdeSolution over canonical state + 6 tangent columns

    def canonical(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        y = self.sol(t).T
        return y[:, :3], y[:, 3:6], y[:, 6:].reshape(len(t), 6, 6)

    def states(self, t):
        """Frame-momentum states at times ``t``; array of shape ``(len(t), 6)``."""
        q, lam, _ = self.canonical(t)
        h1, h2, h0 = frame_momenta(self.structure, q, lam)
        return np.column_stack([q, h1, h2, h0])

    def state(self, t) -> HamiltonianState:
        s = self.states([t])[0]
        return HamiltonianState(s[:3], s[3], s[4], s[5])

    def energy(self, t):
        s = self.states(t)
        return 0.5 * (s[:, 3] ** 2 + s[:, 4] ** 2)

    def fundamental_matrix(self, t):
        """``Phi(t)`` in coordinates ``(q, h1, h2, h0)``; shape ``(len(t), 6, 6)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        q, lam, cols = self.canonical(t)
        data = self.structure.frame_data(q, with_grad=True)
        m_t = _momentum_map(data, lam)
        data0 = self.structure.frame_data(self.p[None], with_grad=True)
        m_0 = _momentum_map(data0, self.sol(0.0)[3:6][None])[0]
        psi = np.transpose(cols, (0, 2, 1))  # columns as matrix columns
        return m_t @ psi @ np.linalg.inv(m_0)


def _identity_columns():
    return np.eye(6)[None]


def integrate_with_variations(
    structure, p, phi, h0_init, span, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL
) -> GeodesicTrajectory:
    """Geodesic from ``p`` with its 6x6 fundamental matrix, dense in ``t``."""
    if span <= 0:
        raise ValueError("span must be positive")
    p = np.asarray(p, dtype=float)
    lam0 = initial_covector(structure, p, phi, h0_init)[0]
    y0 = np.concatenate([p, lam0, _identity_columns().ravel()])

    def rhs(t, y):
        return _canonical_rhs(structure, y[None], 6)[0]

    sol = solve_ivp(rhs, (0.0, span), y0, method="DOP853", rtol=rtol, atol=atol, dense_output=True)
    if not sol.success:
        raise IntegrationError(sol.message)
    return GeodesicTrajectory(structure, p, float(phi), float(h0_init), float(span), sol.sol)


def exp_map(structure, p, phi, h0_init, t, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL) -> HamiltonianState:
    """Endpoint of the arc-length geodesic with initial data ``(phi, h0_init)``."""
    if t < 0:
        raise ValueError("exp_map needs t >= 0")
    p = np.asarray(p, dtype=float)
    lam0 = initial_covector(structure, p, phi, h0_init)
    if t == 0:
        q, lam = p[None], lam0
    else:
        q, lam, _ = integrate_batch(structure, p, lam0, t, rtol=rtol, atol=atol)
    h1, h2, h0 = frame_momenta(structure, q, lam)
    return HamiltonianState(q[0], float(h1[0]), float(h2[0]), float(h0[0]))


@dataclass
class JacobiRecord:
    """Jacobi fields started from the vertical vectors ``J_perp`` and ``J_0``.

    Each array has a leading time axis and a second axis for the field
    (index 0 is ``J_perp``, index 1 is ``J_0``).
    """

    t: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray
    j: np.ndarray  # (T, 2, 3): momentum components (j1, j2, j0)
    h_sigma: np.ndarray  # derivative of sigma along the flow
    hh_sigma: np.ndarray  # second derivative of sigma along the flow
    covector_pairing: np.ndarray  # lambda(d pi J) = h1 alpha + h2 beta + h0 sigma, conserved at 0


def jacobi_fields(trajectory: GeodesicTrajectory, t) -> JacobiRecord:
    """Propagate the two distinguished vertical vectors along ``trajectory``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    s = trajectory.structure
    phi_mat = trajectory.fundamental_matrix(t)
    h1i, h2i = np.cos(trajectory.phi), np.sin(trajectory.phi)
    init = np.zeros((6, 2))
    init[3:5, 0] = (h2i, -h1i)
    init[5, 1] = 1.0
    var = phi_mat @ init  # (T, 6, 2)
    dq = np.transpose(var[:, :3], (0, 2, 1))  # (T, 2, 3)
    dh = np.transpose(var[:, 3:], (0, 2, 1))  # (T, 2, 3): (j1, j2, j0)

    states = trajectory.states(t)
    q, h1, h2 = states[:, :3], states[:, 3], states[:, 4]
    data = s.frame_data(q, with_grad=True)
    coef = np.einsum("tkc,tnc->tnk", data.coframe, dq)  # (sigma, alpha, beta)
    sigma, alpha, beta = coef[..., 0], coef[..., 1], coef[..., 2]

    rates = hamiltonian_rhs(s, states)
    qdot, h1dot, h2dot = rates[:, :3], rates[:, 3], rates[:, 4]
    # variation of the velocity: j1 X1 + j2 X2 + (h1 dX1 + h2 dX2) dq
    dframe = h1[:, None, None] * data.frame_grad[:, 1] + h2[:, None, None] * data.frame_grad[:, 2]
    dqdot = (
        dh[..., 0:1] * data.frame[:, None, 1]
        + dh[..., 1:2] * data.frame[:, None, 2]
        + np.einsum("tcd,tnd->tnc", dframe, dq)
    )
    dtheta = np.einsum("tkcd,td->tkc", data.coframe_grad, qdot)  # derivative of coframe along flow
    coef_dot = np.einsum("tkc,tnc->tnk", dtheta, dq) + np.einsum("tkc,tnc->tnk", data.coframe, dqdot)
    alpha_dot, beta_dot = coef_dot[..., 1], coef_dot[..., 2]

    h_sigma = h2[:, None] * alpha - h1[:, None] * beta
    hh_sigma = h2dot[:, None] * alpha + h2[:, None] * alpha_dot - h1dot[:, None] * beta - h1[:, None] * beta_dot
    pairing = h1[:, None] * alpha + h2[:, None] * beta + states[:, 5, None] * sigma
    return JacobiRecord(t, alpha, beta, sigma, dh, h_sigma, hh_sigma, pairing)


def _exp_tangent_det(structure, p, phi, h0_init, t_max, rtol, atol):
    """Dense solution of the flow with tangents along ``phi`` and ``h0``."""
    p = np.asarray(p, dtype=float)
    lam0 = initial_covector(structure, p, phi, h0_init)[0]
    theta = structure.frame_data(p[None]).coframe[0]
    cols0 = np.zeros((2, 6))
    cols0[0, 3:] = -np.sin(phi) * theta[1] + np.cos(phi) * theta[2]
    cols0[1, 3:] = theta[0]
    y0 = np.concatenate([p, lam0, cols0.ravel()])

    def rhs(t, y):
        return _canonical_rhs(structure, y[None], 2)[0]

    sol = solve_ivp(rhs, (0.0, t_max), y0, method="DOP853", rtol=rtol, atol=atol, dense_output=True)
    if not sol.success:
        raise IntegrationError(sol.message)

    def det(t):
        t = np.atleast_1d(t)
        y = sol.sol(t).T
        q, lam = y[:, :3], y[:, 3:6]
        jets = structure.horizontal_jets(q, 0)[0]
        u = np.einsum("mic,mc->mi", jets, lam)
        qdot = np.einsum("mi,mic->mc", u, jets)
        cols = y[:, 6:].reshape(len(t), 2, 6)[..., :3]
        mats = np.stack([cols[:, 0], cols[:, 1], qdot], axis=-1)
        return np.linalg.det(mats)

    return det


def conjugate_time(structure, p, phi, h0_init, t_max, rtol=1e-12, atol=1e-12, grid_points=None):
    """First ``t`` in ``(0, t_max]`` where ``(phi, h0, t) -> exp`` is singular.

    Returns ``None`` when the determinant keeps its sign on the scan grid.
    """
    det = _exp_tangent_det(structure, p, phi, h0_init, t_max, rtol, atol)
    n = grid_points or max(200, int(np.ceil(200 * t_max)))
    grid = np.linspace(0.0, t_max, n + 1)[1:]
    vals = det(grid)
    scale = np.abs(vals).max()
    signs = np.sign(np.where(np.abs(vals) < 1e-300 + 0 * scale, 0.0, vals))
    change = np.nonzero(signs[1:] * signs[:-1] < 0)[0]
    exact = np.nonzero(signs == 0)[0]
    candidates = []
    if len(change):
        k = change[0]
        candidates.append(
            brentq(lambda s: det(s)[0], grid[k], grid[k + 1], xtol=1e-13, rtol=4 * np.finfo(float).eps)
        )
    if len(exact):
        candidates.append(grid[exact[0]])
    return min(candidates) if candidates else None


def projected_curve_angles(trajectory: GeodesicTrajectory, t):
    """Frame angle of the projected velocity, ``atan2(h2, h1)``, unwrapped."""
    s = trajectory.states(t)
    return np.unwrap(np.arctan2(s[:, 4], s[:, 3]))
