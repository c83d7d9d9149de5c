"""Contact sub-Riemannian structures on a 3D chart.

A structure is declared by an orthonormal frame ``(X1, X2)`` of the
distribution.  Everything else comes from brackets, evaluated on jets:

* ``B = [X1, X2]`` and the contact form ``omega = N / (N . B)`` with
  ``N = X1 x X2``, normalized so that ``omega(B) = 1``;
* the Reeb field ``X0 = B + a X1 + b X2`` with ``b = omega([B, X1])`` and
  ``a = -omega([B, X2])``;
* the coframe ``(theta0, theta1, theta2)`` dual to ``(X0, X1, X2)``;
* structure constants ``c[i, j, k] = theta_k([X_i, X_j])``.

Jet orders: frame coefficients at order 3 give ``B`` at order 2, the Reeb
field and coframe at order 1, ``c[1, 2, :]`` at order 1 and the brackets
with ``X0`` at order 0.  Gradients of ``c[i, 0, :]`` therefore use central
differences (step 1e-7) whenever they are requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .expr import DEFAULT_CHART, as_field
from .jet import Jet, cross, dot, lie_bracket

FD_STEP = 1e-7
REEB_OVERRIDE_TOL = 1e-9


class DegenerateFrameError(ValueError):
    """``X1``, ``X2`` and ``[X1, X2]`` fail to span the tangent space."""

    def __init__(self, point, detail="X1, X2, [X1,X2] are linearly dependent"):
        self.point = np.asarray(point, dtype=float)
        super().__init__(f"{detail} at {self.point.tolist()}")


class ReebOverrideError(ValueError):
    """A user-supplied Reeb field violates the defining identities."""


class SingularBasisError(ValueError):
    pass


@dataclass(frozen=True)
class FrameDecomposition:
    """Coefficients of a tangent vector on ``(X0, X1, X2)``."""

    a0: float
    a1: float
    a2: float

    def as_array(self):
        return np.array([self.a0, self.a1, self.a2])


@dataclass(frozen=True)
class StructureConstants:
    """``c[i][j][k]``: component on ``X_k`` of ``[X_i, X_j]``."""

    c: np.ndarray

    def __getitem__(self, idx):
        return self.c[idx]


@dataclass(frozen=True)
class TorsionData:
    eta1: float
    iota1: float
    chi: float

    @property
    def matrix(self):
        """Torsion map on ``(X1, X2)``: symmetric and trace free."""
        return np.array([[self.eta1, self.iota1], [self.iota1, -self.eta1]])


@dataclass
class FrameData:
    """Pointwise geometry on a batch of points (leading axis)."""

    points: np.ndarray
    frame: np.ndarray  # (N, 3, 3): rows X0, X1, X2 as coordinate vectors
    coframe: np.ndarray  # (N, 3, 3): rows theta0, theta1, theta2
    c: np.ndarray  # (N, 3, 3, 3)
    frame_grad: np.ndarray | None = None  # (N, 3, 3, 3): [field, component, derivative]
    coframe_grad: np.ndarray | None = None  # (N, 3, 3, 3): [form, component, derivative]
    c_grad: np.ndarray | None = None  # (N, 3, 3, 3, 3): last axis derivative


def _vector_jet(fields, points, order):
    return Jet.stack([f.jet(points, order) for f in fields], axis=-1)


def _default_box():
    return ((-1.0, 1.0),) * 3


@dataclass(frozen=True)
class ContactStructure:
    """Chart, orthonormal frame, and derived contact data."""

    x1: tuple
    x2: tuple
    name: str = "custom"
    chart: tuple = DEFAULT_CHART
    reeb_override: tuple | None = None
    box: tuple = field(default_factory=_default_box)
    normal_chart: bool = False

    # --- batched core -----------------------------------------------------

    def frame_jets(self, points, order):
        points = np.asarray(points, dtype=float)
        return _vector_jet(self.x1, points, order), _vector_jet(self.x2, points, order)

    def horizontal_frame(self, points):
        """Values of ``X1`` and ``X2`` at ``points`` (shape ``(..., 3)`` each)."""
        points = np.asarray(points, dtype=float)
        x1 = np.stack([f.values(points) for f in self.x1], axis=-1)
        x2 = np.stack([f.values(points) for f in self.x2], axis=-1)
        return x1, x2

    def horizontal_jets(self, points, order):
        """``X1``, ``X2`` and their partials at ``points`` of shape ``(N, 3)``.

        Returns a list ``[value, grad, hess, ...]`` with shapes ``(N, 2, 3)``,
        ``(N, 2, 3, 3)``, ``(N, 2, 3, 3, 3)`` indexed as
        ``[point, field, component, derivative...]``.
        """
        x1, x2 = self.frame_jets(points, order)
        parts = []
        for k, (a, b) in enumerate(zip(x1.partials(), x2.partials())):
            arr = np.stack(np.broadcast_arrays(a, b), axis=-2)
            parts.append(np.moveaxis(arr, list(range(k)), list(range(-k, 0))) if k else arr)
        return parts

    def _check_independent(self, points, normal, bracket):
        vol = dot(normal, bracket).value if isinstance(normal, Jet) else np.sum(normal * bracket, -1)
        scale = (
            np.linalg.norm(normal.value if isinstance(normal, Jet) else normal, axis=-1)
            * np.linalg.norm(bracket.value if isinstance(bracket, Jet) else bracket, axis=-1)
        )
        bad = ~(np.abs(vol) > 1e-12 * np.maximum(scale, 1e-300)) | ~np.isfinite(vol)
        if np.any(bad):
            idx = np.argwhere(bad)[0]
            raise DegenerateFrameError(np.asarray(points)[tuple(idx)])

    def characteristic_constants(self, points, with_grad=False):
        """``(c12^1, c12^2)`` at ``points``, and optionally their gradients.

        These need only order-2 frame jets (order 3 for gradients).
        """
        points = np.asarray(points, dtype=float)
        order = 3 if with_grad else 2
        x1, x2 = self.frame_jets(points, order)
        b = lie_bracket(x1, x2)
        n = cross(x1, x2).truncate(b.order)
        nb = dot(n, b)
        self._check_independent(points, n, b)
        omega = n * nb.reciprocal().expand(-1)
        c1 = dot(omega, lie_bracket(b, x2))
        c2 = -dot(omega, lie_bracket(b, x1))
        if not with_grad:
            return c1.value, c2.value
        return (c1.value, c2.value), (np.moveaxis(c1.grad, 0, -1), np.moveaxis(c2.grad, 0, -1))

    def _reeb_jet(self, points, x1, x2, b, omega):
        if self.reeb_override is not None:
            x0 = _vector_jet(self.reeb_override, points, 3)
            self._verify_override(points, x0, x1, x2, omega)
            return x0
        b_coef = dot(omega, lie_bracket(b, x1))
        a_coef = -dot(omega, lie_bracket(b, x2))
        return b + x1 * a_coef.expand(-1) + x2 * b_coef.expand(-1)

    def _verify_override(self, points, x0, x1, x2, omega):
        w0 = dot(omega, x0.truncate(omega.order)).value
        w1 = dot(omega, lie_bracket(x0, x1)).value
        w2 = dot(omega, lie_bracket(x0, x2)).value
        err = np.max(np.abs(np.stack([w0 - 1.0, w1, w2])), axis=0)
        if np.any(err > REEB_OVERRIDE_TOL):
            idx = np.argwhere(err > REEB_OVERRIDE_TOL)[0]
            raise ReebOverrideError(
                f"Reeb override violates omega(X0)=1, omega([X0,Xi])=0 by {err[tuple(idx)]:.3e} "
                f"at {np.asarray(points)[tuple(idx)].tolist()}"
            )

    def _pipeline(self, points):
        """Order-3 pipeline; returns jets needed by every consumer."""
        x1, x2 = self.frame_jets(points, 3)
        b = lie_bracket(x1, x2)  # order 2
        n = cross(x1, x2)
        nb = dot(n.truncate(2), b)
        self._check_independent(points, n.truncate(0), b.truncate(0))
        omega = n.truncate(2) * nb.reciprocal().expand(-1)
        x0 = self._reeb_jet(points, x1, x2, b, omega)  # order 1 (3 with override)
        x0_1 = x0.truncate(1)
        n1 = n.truncate(1)
        det = dot(x0_1, n1)
        inv = det.reciprocal().expand(-1)
        theta = [n1 * inv, cross(x2.truncate(1), x0_1) * inv, cross(x0_1, x1.truncate(1)) * inv]
        return x0, x1, x2, b, theta

    def frame_data(self, points, with_grad=False) -> FrameData:
        """Frame, coframe and structure constants on a batch of points.

        ``points`` has shape ``(N, 3)``.  With ``with_grad`` the result also
        carries the gradients of the horizontal frame and of every ``c``.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        x0, x1, x2, b, theta = self._pipeline(points)
        npts = points.shape[0]
        br10 = lie_bracket(x1, x0)  # order 0
        br20 = lie_bracket(x2, x0)
        theta_v = np.stack([t.value for t in theta], axis=1)  # (N, k, comp)
        c = np.zeros((npts, 3, 3, 3))
        c12_jets = [dot(t, b.truncate(1)) for t in theta]
        c[:, 1, 2, :] = np.stack([j.value for j in c12_jets], axis=-1)
        c[:, 1, 0, :] = np.einsum("nkc,nc->nk", theta_v, br10.value)
        c[:, 2, 0, :] = np.einsum("nkc,nc->nk", theta_v, br20.value)
        c[:, 2, 1, :] = -c[:, 1, 2, :]
        c[:, 0, 1, :] = -c[:, 1, 0, :]
        c[:, 0, 2, :] = -c[:, 2, 0, :]
        frame = np.stack([x0.value, x1.value, x2.value], axis=1)
        data = FrameData(points, frame, theta_v, c)
        if with_grad:
            fg = np.stack([np.moveaxis(x0.grad, 0, -1), np.moveaxis(x1.grad, 0, -1), np.moveaxis(x2.grad, 0, -1)], axis=1)
            data.frame_grad = fg
            data.coframe_grad = np.stack([np.moveaxis(t.grad, 0, -1) for t in theta], axis=1)
            cg = np.zeros((npts, 3, 3, 3, 3))
            cg[:, 1, 2] = np.stack([np.moveaxis(j.grad, 0, -1) for j in c12_jets], axis=1)
            cg[:, 2, 1] = -cg[:, 1, 2]
            # brackets with X0 are only available at order 0: central differences
            shifts = np.concatenate([np.eye(3), -np.eye(3)]) * FD_STEP
            shifted = (points[:, None, :] + shifts[None]).reshape(-1, 3)
            sc = self.frame_data(shifted).c.reshape(npts, 6, 3, 3, 3)
            fd = (sc[:, :3] - sc[:, 3:]) / (2 * FD_STEP)  # (N, deriv, i, j, k)
            fd = np.moveaxis(fd, 1, -1)
            for i in (1, 2):
                cg[:, i, 0] = fd[:, i, 0]
                cg[:, 0, i] = -fd[:, i, 0]
            data.c_grad = cg
        return data

    # --- pointwise API ----------------------------------------------------

    def reeb_field(self, point, jet_order=0):
        """Reeb field at ``point`` as a vector jet (order ``jet_order`` <= 1)."""
        if jet_order not in (0, 1):
            raise ValueError("Reeb jets are available up to order 1")
        x0 = self._pipeline(np.asarray(point, dtype=float))[0]
        return x0.truncate(jet_order)

    def contact_form(self, point):
        """Normalized contact form at ``point`` as a covector."""
        point = np.asarray(point, dtype=float)
        x1, x2 = self.frame_jets(point, 1)
        b = lie_bracket(x1, x2)
        n = cross(x1, x2).value
        self._check_independent(point, n, b.value)
        return n / np.dot(n, b.value)

    def structure_constants(self, point) -> StructureConstants:
        return StructureConstants(self.frame_data(point).c[0])

    def frame_decompose(self, v, point) -> FrameDecomposition:
        data = self.frame_data(point)
        basis = data.frame[0]  # rows X0, X1, X2
        v = np.asarray(v, dtype=float)
        if abs(np.linalg.det(basis.T)) < 1e-14 * np.prod(np.linalg.norm(basis, axis=1)):
            raise SingularBasisError(f"frame is singular at {np.asarray(point).tolist()}")
        coef = np.linalg.solve(basis.T, v)
        residual = np.linalg.norm(basis.T @ coef - v)
        if residual > 1e-12 * max(np.linalg.norm(v), 1e-300) and np.linalg.norm(v) > 0:
            coef = coef + np.linalg.solve(basis.T, v - basis.T @ coef)
        return FrameDecomposition(*coef)

    def torsion_invariants(self, point) -> TorsionData:
        c = self.frame_data(point).c[0]
        return torsion_from_constants(c)

    def directional_eta(self, point, theta):
        t = self.torsion_invariants(point)
        return rotate_eta(t.eta1, t.iota1, theta)

    def directional_iota(self, point, theta):
        t = self.torsion_invariants(point)
        return rotate_iota(t.eta1, t.iota1, theta)

    def lie_bracket(self, field_a, field_b, point):
        return lie_bracket_fields(field_a, field_b, point, self.chart)

    def probe_grid(self, n=5):
        axes = [np.linspace(lo, hi, n) for lo, hi in self.box]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)

    def in_box(self, point, pad=0.0):
        point = np.asarray(point, dtype=float)
        return all(lo - pad <= v <= hi + pad for v, (lo, hi) in zip(point, self.box))


def torsion_from_constants(c):
    """``(eta(X1), iota(X1), chi)`` from structure constants at one point."""
    eta1 = c[1, 0, 1]
    iota1 = 0.5 * (c[2, 0, 1] + c[1, 0, 2])
    return TorsionData(float(eta1), float(iota1), float(np.hypot(eta1, iota1)))


def rotate_eta(eta1, iota1, theta):
    return np.cos(2 * theta) * eta1 + np.sin(2 * theta) * iota1


def rotate_iota(eta1, iota1, theta):
    return -np.sin(2 * theta) * eta1 + np.cos(2 * theta) * iota1


def lie_bracket_fields(field_a, field_b, point, chart=DEFAULT_CHART):
    """Coordinate bracket of two vector fields given by coefficient expressions."""
    a = [as_field(f, chart) for f in field_a]
    b = [as_field(f, chart) for f in field_b]
    point = np.asarray(point, dtype=float)
    return lie_bracket(_vector_jet(a, point, 1), _vector_jet(b, point, 1)).value


def build_structure(
    x1: Sequence,
    x2: Sequence,
    name="custom",
    reeb_override: Sequence | None = None,
    box=None,
    chart=DEFAULT_CHART,
    normal_chart=False,
    probe_points=5,
) -> ContactStructure:
    """Parse a frame, then validate bracket generation on a probe grid."""
    chart = tuple(chart)
    if len(x1) != 3 or len(x2) != 3:
        raise ValueError("frame fields need exactly 3 coefficients each")
    s = ContactStructure(
        x1=tuple(as_field(f, chart) for f in x1),
        x2=tuple(as_field(f, chart) for f in x2),
        name=name,
        chart=chart,
        reeb_override=None if reeb_override is None else tuple(as_field(f, chart) for f in reeb_override),
        box=tuple(tuple(map(float, b)) for b in (box or _default_box())),
        normal_chart=normal_chart,
    )
    grid = s.probe_grid(probe_points)
    for start in range(0, len(grid), 512):
        s.frame_data(grid[start : start + 512])
    return s


def rotated_frame(structure: ContactStructure, angle) -> ContactStructure:
    """Same distribution and metric, frame turned by a constant ``angle``."""
    c, s = repr(math.cos(angle)), repr(math.sin(angle))
    x1 = tuple(f"{c}*({a.source}) + {s}*({b.source})" for a, b in zip(structure.x1, structure.x2))
    x2 = tuple(f"{c}*({b.source}) - {s}*({a.source})" for a, b in zip(structure.x1, structure.x2))
    return build_structure(
        x1, x2, name=f"{structure.name} rotated by {angle:g}", box=structure.box,
        chart=structure.chart, normal_chart=structure.normal_chart, probe_points=2,
    )


def heisenberg(box=None) -> ContactStructure:
    return build_structure(("1", "0", "-y/2"), ("0", "1", "x/2"), name="heisenberg", box=box, normal_chart=True)


def gauthier(u="0", v="0", box=None) -> ContactStructure:
    """Frame in normal coordinates around the origin, parametrized by ``u``, ``v``."""
    u_field, v_field = as_field(u), as_field(v)
    u, v = f"({u_field.source})", f"({v_field.source})"
    x1 = (f"1 + {u}*y^2", f"-{u}*x*y", f"-(1 + {v})*y/2")
    x2 = (f"-{u}*x*y", f"1 + {u}*x^2", f"(1 + {v})*x/2")
    # normal coordinates need u = v = dv/dx = dv/dy = 0 on the z-axis
    axis = np.zeros((9, 3))
    axis[:, 2] = np.linspace(*(box or _default_box())[2], 9)
    vj = v_field.jet(axis, 1)
    normal = bool(
        np.all(np.abs(u_field.values(axis)) < 1e-14)
        and np.all(np.abs(vj.value) < 1e-14)
        and np.all(np.abs(vj.grad[:2]) < 1e-14)
    )
    return build_structure(x1, x2, name=f"gauthier({u[1:-1]}, {v[1:-1]})", box=box, normal_chart=normal)
