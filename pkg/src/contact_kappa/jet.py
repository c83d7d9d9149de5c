"""Truncated Taylor jets of scalar fields, up to third order.

A :class:`Jet` carries the value of a field together with its gradient,
Hessian and third-derivative tensor at one or more points.  Arithmetic on
jets propagates derivatives exactly (forward mode), so every partial of a
frame coefficient is exact up to floating point rounding.

The order is capped at 3.  Brackets of the frame need first derivatives of
its coefficients; the Reeb field is built from the normalized contact form,
which uses the bracket once more (second derivatives); and brackets that
involve the Reeb field differentiate it a third time.

Array layout: derivative axes come *first*.  For a jet whose value has
shape ``S`` in ``d`` variables::

    value  S
    grad   (d,) + S
    hess   (d, d) + S
    third  (d, d, d) + S

so ordinary numpy broadcasting over ``S`` works for every component, and a
batch of points, or a vector of coefficients, is just a larger ``S``.
"""

from __future__ import annotations

import math

import numpy as np

MAX_ORDER = 3


class JetDomainError(ValueError):
    """A jet operation left the domain of the underlying function."""

    def __init__(self, message, point=None, subexpression=None):
        self.point = point
        self.subexpression = subexpression
        detail = message
        if subexpression is not None:
            detail += f" in '{subexpression}'"
        if point is not None:
            detail += f" at {np.asarray(point).tolist()}"
        super().__init__(detail)


def _sym3(u, h):
    # (u_i h_jk + u_j h_ik + u_k h_ij)
    return u[:, None, None] * h[None] + u[None, :, None] * h[:, None, :] + u[None, None, :] * h[:, :, None]


class Jet:
    """Value and partial derivatives (through ``order``) of a scalar field."""

    __slots__ = ("order", "value", "grad", "hess", "third")
    __array_priority__ = 100

    def __init__(self, value, grad=None, hess=None, third=None, order=None):
        if order is None:
            order = 0 if grad is None else 1 if hess is None else 2 if third is None else 3
        self.order = order
        self.value = np.asarray(value, dtype=float)
        self.grad = grad if order >= 1 else None
        self.hess = hess if order >= 2 else None
        self.third = third if order >= 3 else None

    # construction ---------------------------------------------------------

    @classmethod
    def constant(cls, c, dim, order):
        c = np.asarray(c, dtype=float)
        if order == 0:
            return cls(c, order=0)
        z = np.zeros((dim,) + (1,) * c.ndim)
        return cls(
            c,
            z if order >= 1 else None,
            np.zeros((dim, dim) + (1,) * c.ndim) if order >= 2 else None,
            np.zeros((dim, dim, dim) + (1,) * c.ndim) if order >= 3 else None,
            order=order,
        )

    @classmethod
    def variable(cls, values, index, dim, order):
        """Coordinate function ``index`` evaluated at ``values``."""
        values = np.asarray(values, dtype=float)
        nd = values.ndim
        grad = None
        if order >= 1:
            grad = np.zeros((dim,) + (1,) * nd)
            grad[index] = 1.0
        return cls(
            values,
            grad,
            np.zeros((dim, dim) + (1,) * nd) if order >= 2 else None,
            np.zeros((dim, dim, dim) + (1,) * nd) if order >= 3 else None,
            order=order,
        )

    @classmethod
    def coordinates(cls, point, order):
        """Jets of the coordinate functions at ``point`` (shape ``S + (d,)``).

        Returns a single vector-valued jet with value shape ``S + (d,)``.
        """
        point = np.asarray(point, dtype=float)
        d = point.shape[-1]
        eye = np.eye(d).reshape((d,) + (1,) * (point.ndim - 1) + (d,))
        return cls(
            point,
            eye if order >= 1 else None,
            np.zeros((d, d) + (1,) * point.ndim) if order >= 2 else None,
            np.zeros((d, d, d) + (1,) * point.ndim) if order >= 3 else None,
            order=order,
        )

    @property
    def dim(self):
        return None if self.grad is None else self.grad.shape[0]

    @property
    def shape(self):
        return self.value.shape

    def partials(self):
        """Tuple of the stored derivative tensors, lowest order first."""
        return tuple(a for a in (self.value, self.grad, self.hess, self.third)[: self.order + 1])

    def truncate(self, order):
        if order >= self.order:
            return self
        return Jet(self.value, self.grad, self.hess, self.third, order=order)

    # structural helpers on the value axes ----------------------------------

    def _map(self, fn):
        """Apply ``fn`` to the value axes of every component."""
        parts = [fn(self.value, 0)]
        for k, arr in enumerate((self.grad, self.hess, self.third)[: self.order], start=1):
            parts.append(fn(arr, k))
        return Jet(*parts, order=self.order)

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return self._map(lambda a, k: a[(slice(None),) * k + idx])

    def sum(self, axis=-1):
        if axis >= 0:
            raise ValueError("use a negative axis for jet reductions")
        return self._map(lambda a, k: a.sum(axis=axis))

    def broadcast_to(self, shape):
        shape = tuple(shape)
        return self._map(lambda a, k: np.broadcast_to(a, a.shape[:k] + shape))

    def expand(self, axis):
        """Insert a length-1 value axis (negative ``axis`` counts from the end)."""
        if axis >= 0:
            raise ValueError("use a negative axis")
        return self._map(lambda a, k: np.expand_dims(a, axis))

    def diff(self):
        """All first partials as a jet of order ``order - 1``.

        The new derivative index is appended as the last value axis.
        """
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        parts = [np.moveaxis(self.grad, 0, -1)]
        if self.order >= 2:
            parts.append(np.moveaxis(self.hess, 1, -1))
        if self.order >= 3:
            parts.append(np.moveaxis(self.third, 2, -1))
        return Jet(*parts, order=self.order - 1)

    def directional(self, vec):
        """Derivative along the vector-valued jet ``vec`` (shape ``S' + (d,)``)."""
        return (self.diff() * vec).sum(-1)

    @staticmethod
    def stack(jets, axis=-1):
        if axis >= 0:
            raise ValueError("use a negative axis")
        order = min(j.order for j in jets)
        shape = np.broadcast_shapes(*(j.shape for j in jets))
        jets = [j.truncate(order).broadcast_to(shape) for j in jets]
        parts = [np.stack([j.value for j in jets], axis=axis)]
        for k in range(1, order + 1):
            parts.append(np.stack([j.partials()[k] for j in jets], axis=axis))
        return Jet(*parts, order=order)

    # arithmetic -------------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self.dim or 1, self.order)

    def __add__(self, other):
        if not isinstance(other, Jet):
            parts = list(self.partials())
            parts[0] = parts[0] + np.asarray(other, dtype=float)
            return Jet(*parts, order=self.order)
        n = min(self.order, other.order)
        a, b = self.partials(), other.partials()
        return Jet(*(a[k] + b[k] for k in range(n + 1)), order=n)

    __radd__ = __add__

    def __neg__(self):
        return self._map(lambda a, k: -a)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            c = np.asarray(other, dtype=float)
            return self._map(lambda a, k: a * c)
        n = min(self.order, other.order)
        f, g = self, other
        v = f.value * g.value
        if n == 0:
            return Jet(v, order=0)
        d1 = f.value * g.grad + g.value * f.grad
        if n == 1:
            return Jet(v, d1, order=1)
        d2 = (
            f.value * g.hess
            + g.value * f.hess
            + f.grad[:, None] * g.grad[None, :]
            + g.grad[:, None] * f.grad[None, :]
        )
        if n == 2:
            return Jet(v, d1, d2, order=2)
        d3 = f.value * g.third + g.value * f.third + _sym3(f.grad, g.hess) + _sym3(g.grad, f.hess)
        return Jet(v, d1, d2, d3, order=3)

    __rmul__ = __mul__

    def compose(self, derivs):
        """Chain rule for a univariate function with derivatives ``derivs``.

        ``derivs[k]`` is the k-th derivative of the outer function evaluated
        at ``self.value``; at least ``order + 1`` entries are required.
        """
        n = self.order
        v = derivs[0]
        if n == 0:
            return Jet(v, order=0)
        g1 = derivs[1] * self.grad
        if n == 1:
            return Jet(v, g1, order=1)
        u = self.grad
        h = derivs[1] * self.hess + derivs[2] * (u[:, None] * u[None, :])
        if n == 2:
            return Jet(v, g1, h, order=2)
        t = (
            derivs[1] * self.third
            + derivs[2] * _sym3(u, self.hess)
            + derivs[3] * (u[:, None, None] * u[None, :, None] * u[None, None, :])
        )
        return Jet(v, g1, h, t, order=3)

    def reciprocal(self, where=None):
        x = self.value
        if np.any(x == 0.0):
            raise JetDomainError("division by zero", subexpression=where)
        r = 1.0 / x
        return self.compose((r, -r * r, 2.0 * r**3, -6.0 * r**4))

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            c = np.asarray(other, dtype=float)
            if np.any(c == 0.0):
                raise JetDomainError("division by zero")
            return self._map(lambda a, k: a / c)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n):
        if not isinstance(n, (int, np.integer)):
            raise TypeError("jets only support integer exponents")
        n = int(n)
        if n == 0:
            return Jet.constant(np.ones_like(self.value), self.dim or 1, self.order)
        if n < 0:
            return (self ** (-n)).reciprocal()
        x = self.value
        derivs = []
        for k in range(4):
            if k > n:
                derivs.append(np.zeros_like(x))
            else:
                coeff = math.perm(n, k)
                derivs.append(coeff * x ** (n - k))
        return self.compose(derivs)

    # elementary functions ---------------------------------------------------

    def sin(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self.compose((s, c, -s, -c))

    def cos(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self.compose((c, -s, -c, s))

    def exp(self):
        e = np.exp(self.value)
        return self.compose((e, e, e, e))

    def log(self, where=None):
        x = self.value
        if np.any(x <= 0.0):
            raise JetDomainError("log of non-positive value", subexpression=where)
        r = 1.0 / x
        return self.compose((np.log(x), r, -r * r, 2.0 * r**3))

    def sqrt(self, where=None):
        x = self.value
        if np.any(x < 0.0) or (self.order > 0 and np.any(x == 0.0)):
            raise JetDomainError("sqrt outside its smooth domain", subexpression=where)
        s = np.sqrt(x)
        if self.order == 0:
            return Jet(s, order=0)
        r = 1.0 / x
        return self.compose((s, 0.5 / s, -0.25 * r / s, 0.375 * r * r / s))

    def atan(self):
        x = self.value
        r = 1.0 / (1.0 + x * x)
        return self.compose((np.arctan(x), r, -2.0 * x * r * r, (6.0 * x * x - 2.0) * r**3))

    def __repr__(self):
        return f"Jet(order={self.order}, value={self.value!r})"


def atan2(y, x, where=None):
    """Jet of ``atan2(y, x)``; derivatives are those of the smooth angle."""
    if np.any((y.value == 0.0) & (x.value == 0.0)):
        raise JetDomainError("atan2 at the origin", subexpression=where)
    # pick the well-conditioned quotient pointwise
    use_x = np.abs(x.value) >= np.abs(y.value)
    if np.all(use_x):
        base = (y / x).atan()
    elif not np.any(use_x):
        base = -(x / y).atan()
    else:
        safe_x = Jet(np.where(use_x, x.value, 1.0), *x.partials()[1:], order=x.order)
        safe_y = Jet(np.where(use_x, 1.0, y.value), *y.partials()[1:], order=y.order)
        a = (y / safe_x).atan()
        b = -(x / safe_y).atan()
        base = a._merge(b, use_x)
    return Jet(np.arctan2(y.value, x.value), *base.partials()[1:], order=base.order)


def _merge(self, other, mask):
    parts = [np.where(mask, p, q) for p, q in zip(self.partials(), other.partials())]
    return Jet(*parts, order=min(self.order, other.order))


Jet._merge = _merge


# vector-field helpers: jets whose last value axis has length 3 -------------


def dot(a, b):
    return (a * b).sum(-1)


def cross(a, b):
    return Jet.stack(
        [
            a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
            a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
            a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        ],
        axis=-1,
    )


def lie_bracket(a, b):
    """Coordinate Lie bracket ``[A, B]^k = A^j d_j B^k - B^j d_j A^k``.

    ``a`` and ``b`` are vector-valued jets (last value axis = component).
    The result has order ``min(order) - 1``.
    """
    db = b.diff()  # value axes (..., k, j)
    da = a.diff()
    return (db * a.expand(-2)).sum(-1) - (da * b.expand(-2)).sum(-1)
