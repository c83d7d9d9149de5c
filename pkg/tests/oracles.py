"""Independent reference computations used by the test suite.

The symbolic route derives the Reeb field from its defining equations
(omega(X0) = 1 and the exterior derivative of omega killing X0) instead of the
bracket-correction formula used by the package.
"""

import numpy as np
import sympy as sp

X, Y, Z = sp.symbols("x y z")
COORDS = (X, Y, Z)


def gauthier_frame(u, v):
    u, v = sp.sympify(u), sp.sympify(v)
    x1 = sp.Matrix([1 + u * Y**2, -u * X * Y, -(1 + v) * Y / 2])
    x2 = sp.Matrix([-u * X * Y, 1 + u * X**2, (1 + v) * X / 2])
    return x1, x2


def bracket(a, b):
    return b.jacobian(COORDS) * a - a.jacobian(COORDS) * b


def symbolic_frame_constants(x1, x2, point):
    """Reeb field, structure constants c[i,j,k] = theta^k([Xi, Xj]) at ``point``."""
    b12 = bracket(x1, x2)
    normal = x1.cross(x2)
    omega = normal / normal.dot(b12)  # covector with omega(X1) = omega(X2) = 0, omega([X1,X2]) = 1
    # d omega as the antisymmetric matrix (d omega)_{ij} = d_i omega_j - d_j omega_i
    grad = omega.T.jacobian(COORDS)  # grad[j, i] = d_i omega_j
    domega = grad.T - grad
    subs = dict(zip(COORDS, point))
    om = np.array(omega.subs(subs), dtype=float).ravel()
    dw = np.array(domega.subs(subs), dtype=float)
    v1 = np.array(x1.subs(subs), dtype=float).ravel()
    v2 = np.array(x2.subs(subs), dtype=float).ravel()
    # omega(X0) = 1, d omega(X0, X1) = 0, d omega(X0, X2) = 0
    system = np.array([om, dw @ v1, dw @ v2])
    x0_val = np.linalg.solve(system, [1.0, 0.0, 0.0])

    # brackets involving X0 need its derivatives: redo the solve symbolically
    sym_sys = sp.Matrix([omega.T, (domega * x1).T, (domega * x2).T])
    x0 = sym_sys.LUsolve(sp.Matrix([1, 0, 0]))
    fields = [x0, x1, x2]
    frame = np.array([np.array(f.subs(subs), dtype=float).ravel() for f in fields])
    coframe = np.linalg.inv(frame.T)  # rows: theta^0, theta^1, theta^2
    c = np.zeros((3, 3, 3))
    for i in range(3):
        for j in range(i + 1, 3):
            br = np.array(bracket(fields[i], fields[j]).subs(subs), dtype=float).ravel()
            c[i, j] = coframe @ br
            c[j, i] = -c[i, j]
    return x0_val, frame[0], c


def fd_jet(f, point, h=1e-4):
    """Central finite-difference gradient, Hessian and third derivatives of ``f``."""
    point = np.asarray(point, dtype=float)
    e = np.eye(3) * h

    def d1(g, p):
        return np.array([(g(p + e[i]) - g(p - e[i])) / (2 * h) for i in range(3)])

    grad = d1(f, point)
    hess = np.array([d1(lambda p: (f(p + e[i]) - f(p - e[i])) / (2 * h), point) for i in range(3)])
    third = np.array(
        [[d1(lambda p: (f(p + e[i] + e[j]) - f(p + e[i] - e[j]) - f(p - e[i] + e[j]) + f(p - e[i] - e[j])) / (4 * h * h), point)
          for j in range(3)] for i in range(3)]
    )
    return grad, hess, third


def fd_bracket(field_a, field_b, point, h=1e-5):
    """Coordinate Lie bracket of two vector-valued callables by central differences."""
    point = np.asarray(point, dtype=float)
    ja = np.zeros((3, 3))
    jb = np.zeros((3, 3))
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        ja[:, i] = (field_a(point + e) - field_a(point - e)) / (2 * h)
        jb[:, i] = (field_b(point + e) - field_b(point - e)) / (2 * h)
    return jb @ field_a(point) - ja @ field_b(point)


def heisenberg_geodesic(phi, h0, t):
    """Closed-form arc-length Heisenberg geodesic from the origin (frame X1=(1,0,-y/2), X2=(0,1,x/2))."""
    if abs(h0) < 1e-12:
        return np.array([t * np.cos(phi), t * np.sin(phi), 0.0])
    x = (np.sin(phi + h0 * t) - np.sin(phi)) / h0
    y = (np.cos(phi) - np.cos(phi + h0 * t)) / h0
    z = (h0 * t - np.sin(h0 * t)) / (2 * h0**2)
    return np.array([x, y, z])
