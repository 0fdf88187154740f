"""Exact derivative rules of the field atoms and combinators, checked against
finite differences along the corresponding motions."""

import numpy as np
import pytest

from markcfg import fields as fl
from markcfg.marks import get_marks

from conftest import assert_derivative_matches


def _at(field, x, m):
    return field.at(np.atleast_1d(x), np.atleast_1d(m))


class TestBaseAtoms:
    def test_xpoly_partial(self):
        f = fl.XPoly(2, {(2, 1): 3.0, (0, 3): -1.0})
        x = np.array([0.7, -0.4])
        m = np.zeros(1)

        def along(i):
            def g(h):
                y = x.copy()
                y[i] += h
                return f.at(y, m)

            return g

        assert_derivative_matches(along(0), f.dx(0).at(x, m))
        assert_derivative_matches(along(1), f.dx(1).at(x, m))
        assert f.dm(0) is fl.ZERO

    def test_xtrig_partial(self):
        f = fl.XTrig([1.3, -0.6], phase=0.4, kind="sin", amp=2.0)
        x = np.array([0.2, 0.9])
        m = np.zeros(1)
        for i in range(2):
            def g(h, i=i):
                y = x.copy()
                y[i] += h
                return f.at(y, m)

            assert_derivative_matches(g, f.dx(i).at(x, m))

    def test_xbump_partial_and_support(self):
        f = fl.XBump([0.4, -0.2], 0.5, {(1, 0): 1.0, (0, 0): 0.5}, 1)
        m = np.zeros(1)
        x = np.array([0.55, -0.05])

        for i in range(2):
            def g(h, i=i):
                y = x.copy()
                y[i] += h
                return f.at(y, m)

            assert_derivative_matches(g, f.dx(i).at(x, m))
        # exactly zero outside the ball, for the atom and all its derivatives
        far = np.array([2.0, 2.0])
        assert f.at(far, m) == 0.0
        assert f.dx(0).at(far, m) == 0.0
        assert f.dx(0).dx(1).at(far, m) == 0.0

    def test_xbump_smooth_at_boundary(self):
        f = fl.XBump([0.0], 1.0)
        xs = np.array([[0.999999], [1.0], [1.000001]])
        vals = f.value(xs, np.zeros((3, 1)))
        assert vals[1] == 0.0 and vals[2] == 0.0
        assert vals[0] < 1e-300 or vals[0] >= 0.0


class TestMarkAtoms:
    def test_circle_trig_generator(self):
        f = fl.CircleTrig({(2, 0): 1.5, (1, 1): -0.7, (0, 0): 0.3})
        marks = get_marks("circle")
        m = np.array([1.1])

        def g(h):
            return _at(f, 0.0, marks.flow_mark(np.array([1.0]), h, m))

        assert_derivative_matches(g, f.dm(0).at(np.zeros(1), m))

    def test_ray_polyexp_generator(self):
        f = fl.RayPolyExp({(2.0, -1.0): 1.0, (0.0, 0.0): 0.4, (1.0, -0.5): -0.8})
        marks = get_marks("dilation")
        m = np.array([1.7])

        def g(h):
            return _at(f, 0.0, marks.flow_mark(np.array([1.0]), h, m))

        assert_derivative_matches(g, f.dm(0).at(np.zeros(1), m))

    @pytest.mark.parametrize("axis", [0, 1, 2])
    def test_sphere_poly_generator(self, axis):
        f = fl.SpherePoly({(2, 1, 0): 1.0, (0, 0, 1): -0.5, (1, 1, 1): 0.25})
        marks = get_marks("sphere")
        m = np.array([0.48, -0.6, 0.64123])
        m = m / np.linalg.norm(m)
        u = np.zeros(3)
        u[axis] = 1.0

        def g(h):
            return _at(f, 0.0, marks.flow_mark(u, h, m))

        assert_derivative_matches(g, f.dm(axis).at(np.zeros(1), m))

    def test_constant_field_derivatives_vanish(self):
        c = fl.const_field(3.5)
        assert c.dx(0) is fl.ZERO
        assert c.dm(0) is fl.ZERO


class TestCombinators:
    def test_product_rule(self):
        f = fl.mul_fields(
            fl.XBump([0.3], 0.4, {(0,): 1.2}),
            fl.CircleTrig({(1, 0): 1.0, (2, 1): 0.5}),
        )
        marks = get_marks("circle")
        x = np.array([0.35])
        m = np.array([0.8])

        def gx(h):
            return f.at(x + h, m)

        assert_derivative_matches(gx, f.dx(0).at(x, m))

        def gm(h):
            return _at(f, x, marks.flow_mark(np.array([1.0]), h, m))

        assert_derivative_matches(gm, f.dm(0).at(x, m))

    def test_sum_and_scale(self):
        a = fl.XPoly(1, {(1,): 2.0})
        b = fl.XPoly(1, {(2,): 1.0})
        s = fl.add_fields(a, fl.scale_field(3.0, b))
        x, m = np.array([0.5]), np.zeros(1)
        assert s.at(x, m) == pytest.approx(2.0 * 0.5 + 3.0 * 0.25)
        assert s.dx(0).at(x, m) == pytest.approx(2.0 + 3.0)

    def test_zero_fast_paths(self):
        assert fl.add_fields() is fl.ZERO
        assert fl.scale_field(0.0, fl.XPoly(1, {(1,): 1.0})) is fl.ZERO
        assert fl.mul_fields(fl.ZERO, fl.XPoly(1, {(1,): 1.0})) is fl.ZERO

    def test_disjoint_support_product_collapses(self):
        a = fl.XBump([0.0], 0.5)
        b = fl.XBump([2.0], 0.5)
        assert fl.mul_fields(a, b) is fl.ZERO

    def test_support_box_propagation(self):
        a = fl.XBump([0.0], 0.5)
        b = fl.CircleTrig({(1, 0): 1.0})
        p = fl.mul_fields(a, b)
        lo, hi = p.support_box
        assert lo[0] == -0.5 and hi[0] == 0.5

    def test_mark_laplacian_ray(self):
        # d/dm(m^2 f'(m)) for f = m^2 is 6 m^2
        f = fl.RayPolyExp({(2.0, 0.0): 1.0})
        lap = fl.mark_laplacian(f, 1, np.array([-1.0]))
        assert lap.at(np.zeros(1), np.array([1.0])) == pytest.approx(6.0)
        assert lap.at(np.zeros(1), np.array([2.0])) == pytest.approx(24.0)

    def test_mark_laplacian_circle(self):
        f = fl.CircleTrig({(1, 0): 1.0})  # cos m
        lap = fl.mark_laplacian(f, 1, np.zeros(1))
        assert lap.at(np.zeros(1), np.array([0.0])) == pytest.approx(-1.0)

    def test_hermite_coeffs(self):
        assert fl.hermite_coeffs(0) == [1.0]
        assert fl.hermite_coeffs(1) == [0.0, 1.0]
        assert fl.hermite_coeffs(2) == [-1.0, 0.0, 1.0]
        assert fl.hermite_coeffs(3) == [0.0, -3.0, 0.0, 1.0]


class TestOuterExpr:
    def test_partials_and_value(self, rng):
        lin = fl.outer_add(
            fl.OuterConst(0.2),
            fl.outer_mul(fl.OuterConst(1.5), fl.OuterVar(0)),
            fl.outer_mul(fl.OuterConst(-0.5), fl.OuterVar(1)),
        )
        g = fl.outer_fun("sin", lin)
        args = rng.uniform(-1, 1, size=(7, 2))
        vals = g.value(args)
        assert np.allclose(vals, np.sin(0.2 + 1.5 * args[:, 0] - 0.5 * args[:, 1]))
        d0 = g.partial(0).value(args)
        assert np.allclose(d0, 1.5 * np.cos(0.2 + 1.5 * args[:, 0] - 0.5 * args[:, 1]))

    def test_pow_and_tanh_chain(self):
        g = fl.outer_pow(fl.outer_add(fl.OuterConst(1.0), fl.outer_pow(fl.OuterVar(0), 2)), -1)
        x = np.array([[0.7]])
        v = g.value(x)[0]
        assert v == pytest.approx(1.0 / 1.49)
        d = g.partial(0).value(x)[0]
        assert d == pytest.approx(-2 * 0.7 / 1.49**2)
        t = fl.outer_fun("tanh", fl.OuterVar(0))
        dt = t.partial(0).value(x)[0]
        assert dt == pytest.approx(1.0 - np.tanh(0.7) ** 2)

    def test_remap(self):
        g = fl.outer_mul(fl.OuterVar(0), fl.OuterVar(1))
        h = g.remap({0: 2, 1: 0})
        args = np.array([[2.0, 3.0, 5.0]])
        assert h.value(args)[0] == pytest.approx(10.0)
