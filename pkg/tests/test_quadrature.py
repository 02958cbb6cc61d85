import numpy as np
import pytest
from math import factorial

from dgadapt import mesh as msh
from dgadapt import quadrature as quad


def exact_tri_monomial(a, b):
    # int over {x,y>=0, x+y<=1} of x^a y^b
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def tri_apply(rule, f):
    xy = rule.xy
    return float(np.dot(rule.weights, f(xy[:, 0], xy[:, 1])))


def test_exactness_table_triangle():
    for s in range(0, quad.MAX_ORDER + 1):
        rule = quad.triangle_rule(s)
        assert np.all(rule.weights > 0)
        assert abs(rule.weights.sum() - 0.5) < 1e-14
        for a in range(s + 1):
            for b in range(s + 1 - a):
                got = tri_apply(rule, lambda x, y: x**a * y**b)
                exact = exact_tri_monomial(a, b)
                assert abs(got - exact) < 1e-12 * max(1.0, abs(exact)), (s, a, b)


def test_exactness_table_edge():
    for s in range(0, 13):
        rule = quad.edge_rule(s)
        assert np.all(rule.weights > 0)
        assert abs(rule.weights.sum() - 1.0) < 1e-14
        for a in range(s + 1):
            got = float(np.dot(rule.weights, rule.points**a))
            assert abs(got - 1 / (a + 1)) < 1e-12


def test_centroid_rule():
    rule = quad.triangle_rule(1)
    assert rule.npoints == 1
    assert abs(rule.weights[0] - 0.5) < 1e-15
    assert np.allclose(rule.points[0], [1 / 3, 1 / 3, 1 / 3])


def test_x_squared_reproduced_from_order_two():
    for s in range(2, 7):
        rule = quad.triangle_rule(s)
        assert abs(tri_apply(rule, lambda x, y: x**2) - 1 / 12) < 1e-13


def test_cubic_deviates_at_order_two_exact_at_three():
    r2 = quad.triangle_rule(2)
    r3 = quad.triangle_rule(3)
    v2 = tri_apply(r2, lambda x, y: x**3)
    v3 = tri_apply(r3, lambda x, y: x**3)
    assert abs(v2 - 1 / 20) > 1e-4
    assert abs(v3 - 1 / 20) < 1e-12


def test_edge_rules():
    r3 = quad.edge_rule(3)
    assert r3.npoints == 2
    assert abs(float(np.dot(r3.weights, r3.points**3)) - 0.25) < 1e-14
    r1 = quad.edge_rule(1)
    assert r1.npoints == 1
    assert abs(r1.points[0] - 0.5) < 1e-15
    assert abs(r1.weights[0] - 1.0) < 1e-15


def test_unsupported_order():
    with pytest.raises(quad.UnsupportedOrderError):
        quad.triangle_rule(11)


def test_integrate_cell_constant_and_linear():
    m = msh.make_unit_square(1)
    rule = quad.triangle_rule(2)
    areas = m.signed_areas()
    for c in range(m.num_cells):
        verts = m.vertices[m.cells[c]]
        val = quad.integrate_cell(lambda x: np.ones(len(x)), verts, rule)
        assert abs(val - areas[c]) < 1e-14
    total = sum(
        quad.integrate_cell(lambda x: x[:, 0], m.vertices[m.cells[c]], rule)
        for c in range(m.num_cells))
    assert abs(total - 0.5) < 1e-13


def test_integrate_edge_constant():
    rule = quad.edge_rule(2)
    val = quad.integrate_edge(lambda x: np.ones(len(x)), (0.0, 0.0), (3.0, 4.0), rule)
    assert abs(val - 5.0) < 1e-13


def exact_sin2pix_over_triangle(verts):
    # Green's theorem: int_K sin(2 pi x) = contour int of -cos(2 pi x)/(2 pi) dy
    total = 0.0
    for i in range(3):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % 3]
        dx, dy = x1 - x0, y1 - y0
        if abs(dx) < 1e-15:
            total += -dy * np.cos(2 * np.pi * x0) / (2 * np.pi)
        else:
            total += -dy * (np.sin(2 * np.pi * x1) - np.sin(2 * np.pi * x0)) / (4 * np.pi**2 * dx)
    return total


def test_order_two_rule_converges_at_rate_three():
    rule = quad.triangle_rule(2)
    errs = []
    hs = []
    for n in (2, 4, 8, 16):
        m = msh.make_unit_square(n)
        err = 0.0
        for c in range(m.num_cells):
            verts = m.vertices[m.cells[c]]
            approx = quad.integrate_cell(lambda x: np.sin(2 * np.pi * x[:, 0]), verts, rule)
            err += abs(approx - exact_sin2pix_over_triangle(verts))
        errs.append(err)
        hs.append(1.0 / n)
    rates = [np.log(errs[i - 1] / errs[i]) / np.log(hs[i - 1] / hs[i])
             for i in range(1, len(errs))]
    assert min(rates) > 2.8


def test_affine_invariance_on_skewed_cell():
    # int of x^2 y over the triangle (0,0),(2,1),(1,3); exact value from
    # the substitution x = 2u + v, y = u + 3v, jacobian 5:
    # 5 * int_ref (2u+v)^2 (u+3v) du dv = 25/6
    rule = quad.triangle_rule(3)
    verts = np.array([[0.0, 0.0], [2.0, 1.0], [1.0, 3.0]])
    val = quad.integrate_cell(lambda x: x[:, 0]**2 * x[:, 1], verts, rule)
    assert abs(val - 25 / 6) < 1e-12
