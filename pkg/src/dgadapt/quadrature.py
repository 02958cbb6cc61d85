"""Quadrature rules on the reference triangle and reference edge.

The reference triangle is {(x, y) : x >= 0, y >= 0, x + y <= 1}, the
reference edge is [0, 1].  A rule of order ``s`` integrates every
polynomial of total degree <= s exactly.  All shipped rules have
strictly positive weights.
"""

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_ORDER = 10


class UnsupportedOrderError(ValueError):
    pass


class QuadratureRule:
    """Positions and weights of a quadrature rule on a reference domain.

    Attributes
    ----------
    points : ndarray
        Triangle rules store barycentric coordinates, shape (n, 3);
        edge rules store coordinates in [0, 1], shape (n,).
    weights : ndarray
        Shape (n,).  Sum to 1/2 (triangle) or 1 (edge).
    degree : int
        Exactness degree of the point set (>= the requested order).
    domain : str
        "triangle" or "edge".
    """

    def __init__(self, points, weights, degree, domain):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.degree = int(degree)
        self.domain = domain

    @property
    def npoints(self):
        return len(self.weights)

    @property
    def xy(self):
        """Cartesian reference coordinates, shape (n, 2) for triangle rules."""
        if self.domain != "triangle":
            raise ValueError("xy is only defined for triangle rules")
        return self.points[:, 1:]


def _centroid_rule():
    return np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([0.5])


def _degree2_rule():
    # symmetric 3-point rule, interior points
    lam = np.array([
        [2 / 3, 1 / 6, 1 / 6],
        [1 / 6, 2 / 3, 1 / 6],
        [1 / 6, 1 / 6, 2 / 3],
    ])
    return lam, np.full(3, 1 / 6)


def _conical_rule(s):
    # Collapsed-coordinate (conical product) rule: Gauss-Jacobi in x with
    # weight (1-x), Gauss-Legendre in the collapsed direction.  Exact on
    # P_s with n = ceil((s+1)/2) points per direction, weights positive.
    n = (s + 2) // 2
    uj, wj = roots_jacobi(n, 1.0, 0.0)
    xi = (uj + 1) / 2
    ai = wj / 4
    ul, wl = roots_legendre(n)
    tau = (ul + 1) / 2
    bj = wl / 2
    x = np.repeat(xi, n)
    t = np.tile(tau, n)
    y = (1 - x) * t
    w = np.repeat(ai, n) * np.tile(bj, n)
    lam = np.column_stack([1 - x - y, x, y])
    return lam, w, 2 * n - 1


def triangle_rule(s):
    """Quadrature rule on the reference triangle, exact on P_s.

    Orders 0 and 1 both yield the one-point centroid rule.  Order 2 is
    the symmetric three-point rule; higher orders use conical product
    rules (positive weights for every order).
    """
    if s < 0 or s > MAX_ORDER:
        raise UnsupportedOrderError(f"triangle rule order {s} not supported (max {MAX_ORDER})")
    if s <= 1:
        lam, w = _centroid_rule()
        return QuadratureRule(lam, w, 1, "triangle")
    if s == 2:
        lam, w = _degree2_rule()
        return QuadratureRule(lam, w, 2, "triangle")
    lam, w, degree = _conical_rule(s)
    return QuadratureRule(lam, w, degree, "triangle")


def edge_rule(s):
    """Gauss-Legendre rule on [0, 1], exact on P_s."""
    if s < 0 or s > 2 * MAX_ORDER:
        raise UnsupportedOrderError(f"edge rule order {s} not supported")
    n = max((s + 2) // 2, 1)
    u, w = roots_legendre(n)
    return QuadratureRule((u + 1) / 2, w / 2, 2 * n - 1, "edge")


def integrate_cell(f, verts, rule):
    """Integrate ``f`` over the physical triangle with given vertices.

    ``f`` takes an (n, 2) array of physical points and returns (n,) values;
    ``verts`` is (3, 2).
    """
    verts = np.asarray(verts, dtype=float)
    x = rule.points @ verts
    jac = 2.0 * _signed_area(verts)
    return jac * np.dot(rule.weights, f(x))


def integrate_edge(f, a, b, rule):
    """Integrate ``f`` along the physical segment from ``a`` to ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t = rule.points
    x = a[None, :] + t[:, None] * (b - a)[None, :]
    length = np.linalg.norm(b - a)
    return length * np.dot(rule.weights, f(x))


def _signed_area(verts):
    d1 = verts[1] - verts[0]
    d2 = verts[2] - verts[0]
    return 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
