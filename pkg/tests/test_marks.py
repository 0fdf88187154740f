"""Mark-space models: action axioms, exponential map, translate densities,
generator calculus, and the quadrature rules for the reference measures."""

import numpy as np
import pytest
from scipy import integrate

from markcfg import fields as fl
from markcfg.errors import UsageError
from markcfg.marks import TWO_PI, get_marks, rotation_exp

from conftest import assert_derivative_matches

MODELS = ["circle", "dilation", "sphere"]


def _random_group(marks, rng):
    if marks.name == "circle":
        return rng.uniform(0.0, TWO_PI)
    if marks.name == "dilation":
        return float(np.exp(rng.normal()))
    return rotation_exp(rng.normal(size=3))


def _mark_dist(marks, m1, m2):
    if marks.name == "circle":
        d = abs(float(m1[0] - m2[0])) % TWO_PI
        return min(d, TWO_PI - d)
    return float(np.max(np.abs(np.asarray(m1) - np.asarray(m2))))


class TestActionAxioms:
    @pytest.mark.parametrize("name", MODELS)
    def test_identity_and_compatibility(self, name, rng):
        marks = get_marks(name)
        for _ in range(200):
            m = marks.random_mark(rng)
            g1 = _random_group(marks, rng)
            g2 = _random_group(marks, rng)
            assert _mark_dist(marks, marks.act(marks.identity(), m), m) < 1e-12
            lhs = marks.act(g1, marks.act(g2, m))
            rhs = marks.act(marks.compose(g1, g2), m)
            assert _mark_dist(marks, lhs, rhs) < 1e-12

    @pytest.mark.parametrize("name", MODELS)
    def test_inverse(self, name, rng):
        marks = get_marks(name)
        for _ in range(100):
            m = marks.random_mark(rng)
            g = _random_group(marks, rng)
            back = marks.act(marks.inverse(g), marks.act(g, m))
            assert _mark_dist(marks, back, m) < 1e-12


class TestExponentialMap:
    @pytest.mark.parametrize("name", MODELS)
    def test_one_parameter_group_law(self, name, rng):
        marks = get_marks(name)
        for _ in range(100):
            u = rng.normal(size=marks.algebra_dim)
            s, t = rng.uniform(-2, 2, size=2)
            m = marks.random_mark(rng)
            lhs = marks.act(marks.compose(marks.exp(u, s), marks.exp(u, t)), m)
            rhs = marks.act(marks.exp(u, s + t), m)
            assert _mark_dist(marks, lhs, rhs) < 1e-10

    def test_known_values(self):
        dil = get_marks("dilation")
        assert dil.exp(np.array([1.0]), np.log(2.0)) == pytest.approx(2.0)
        assert dil.act(2.0, np.array([1.5]))[0] == pytest.approx(3.0)
        circ = get_marks("circle")
        assert circ.exp(np.array([1.0]), TWO_PI) == pytest.approx(0.0)
        assert circ.act(np.pi / 2, np.array([np.pi]))[0] == pytest.approx(3 * np.pi / 2)
        sph = get_marks("sphere")
        z = np.array([0.0, 0.0, 1.0])
        assert np.allclose(sph.act(np.eye(3), z), z)

    def test_rotation_against_series_oracle(self, rng):
        # scaling-and-squaring Taylor oracle, independent of the closed form
        def expm_series(a):
            # few squarings keep the oracle's own rounding below 1e-13
            k = 0
            while np.linalg.norm(a) > 0.5:
                a = a / 2.0
                k += 1
            out = np.eye(3)
            term = np.eye(3)
            for i in range(1, 40):
                term = term @ a / i
                out = out + term
            for _ in range(k):
                out = out @ out
            return out

        def skew(u):
            return np.array(
                [[0, -u[2], u[1]], [u[2], 0, -u[0]], [-u[1], u[0], 0]], dtype=float
            )

        for _ in range(40):
            w = rng.normal(size=3) * rng.uniform(0.0, 3.0)
            assert np.max(np.abs(rotation_exp(w) - expm_series(skew(w)))) < 1e-12
        # quarter turn about the vertical axis
        r = get_marks("sphere").exp(np.array([0.0, 0.0, 1.0]), np.pi / 2)
        assert np.allclose(r @ np.array([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)

    def test_rotation_small_angle_branch(self):
        w = np.array([1e-9, -2e-9, 1e-9])
        r = rotation_exp(w)
        assert np.max(np.abs(r - (np.eye(3) + np.array(
            [[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])))) < 1e-17


class TestGeneratorCalculus:
    def test_gradient_dilation_square(self):
        # f(m) = m^2 has generator derivative m f'(m) = 2 m^2
        dil = get_marks("dilation")
        f = fl.RayPolyExp({(2.0, 0.0): 1.0})
        assert dil.gradient_of(f, [1.5])[0] == pytest.approx(2 * 1.5**2)

    def test_gradient_circle_cos(self):
        circ = get_marks("circle")
        f = fl.CircleTrig({(1, 0): 1.0})
        assert circ.gradient_of(f, [np.pi / 2])[0] == pytest.approx(-1.0)

    @pytest.mark.parametrize("name", MODELS)
    def test_gradient_constant_vanishes(self, name):
        marks = get_marks(name)
        f = fl.const_field(2.0)
        m = marks.random_mark(np.random.default_rng(0))
        assert np.allclose(marks.gradient_of(f, m), 0.0)
        assert marks.laplacian_of(f, m) == 0.0

    @pytest.mark.parametrize("name", MODELS)
    def test_gradient_matches_flow_difference(self, name, rng):
        marks = get_marks(name)
        atoms = {
            "circle": fl.CircleTrig({(1, 0): 0.8, (2, 1): -0.6}),
            "dilation": fl.RayPolyExp({(1.0, -0.5): 1.0, (2.0, -1.0): 0.5}),
            "sphere": fl.SpherePoly({(1, 0, 0): 1.0, (0, 2, 0): -0.5}),
        }
        f = atoms[name]
        for _ in range(10):
            m = marks.random_mark(rng)
            grad = marks.gradient_of(f, m)
            for j in range(marks.algebra_dim):
                u = np.zeros(marks.algebra_dim)
                u[j] = 1.0

                def g(h):
                    return f.at(np.zeros(1), marks.flow_mark(u, h, m))

                assert_derivative_matches(g, grad[j])

    def test_laplacian_examples(self):
        circ = get_marks("circle")
        f = fl.CircleTrig({(1, 0): 1.0})
        assert circ.laplacian_of(f, [0.0]) == pytest.approx(-1.0)
        dil = get_marks("dilation")
        g = fl.RayPolyExp({(2.0, 0.0): 1.0})
        assert dil.laplacian_of(g, [1.0]) == pytest.approx(6.0)

    def test_sphere_laplacian_spherical_harmonic(self):
        # z restricted to the sphere is a degree-1 harmonic: laplacian -2 z
        sph = get_marks("sphere")
        f = fl.SpherePoly({(0, 0, 1): 1.0})
        m = np.array([0.6, 0.0, 0.8])
        assert sph.laplacian_of(f, m) == pytest.approx(-2 * 0.8)


class TestReferenceDensities:
    def test_invariant_models(self, rng):
        for name in ("circle", "sphere"):
            marks = get_marks(name)
            g = _random_group(marks, rng)
            m = marks.random_mark(rng)
            assert marks.reference_density(g, m) == 1.0
            assert np.allclose(marks.grad_reference_identity(), 0.0)

    def test_dilation_density(self):
        dil = get_marks("dilation")
        assert dil.reference_density(2.0, np.array([1.0])) == pytest.approx(0.5)
        assert dil.reference_density(1.0, np.array([1.0])) == pytest.approx(1.0)
        assert dil.grad_reference_identity()[0] == pytest.approx(-1.0)

    def test_dilation_density_is_change_of_variables(self):
        # integral of f(g m) dm = (1/g) integral of f(m) dm on the ray
        dil = get_marks("dilation")
        g = 1.7

        def f(m):
            return m**2 * np.exp(-m)

        lhs, _ = integrate.quad(lambda m: f(g * m), 0, 60)
        rhs, _ = integrate.quad(f, 0, 60)
        assert lhs == pytest.approx(dil.reference_density(g, None) * rhs, rel=1e-9)

    @pytest.mark.parametrize("name", MODELS)
    def test_duality_of_gradient_and_reference(self, name, rng):
        """integral of (generator derivative of f) equals the integral of f
        against the pairing with the reference gradient at the identity."""
        marks = get_marks(name)
        nodes, weights = marks.mark_quadrature()
        atoms = {
            "circle": lambda: fl.CircleTrig(
                {(k, s): rng.uniform(-1, 1) for k in (1, 2) for s in (0, 1)}
            ),
            "dilation": lambda: fl.RayPolyExp(
                {(2.0, -1.0): rng.uniform(-1, 1), (3.0, -0.7): rng.uniform(-1, 1)}
            ),
            "sphere": lambda: fl.SpherePoly(
                {(1, 1, 0): rng.uniform(-1, 1), (0, 2, 1): rng.uniform(-1, 1)}
            ),
        }
        gref = marks.grad_reference_identity()
        x0 = np.zeros(1)
        for _ in range(20):
            f = atoms[name]()
            u = rng.normal(size=marks.algebra_dim)
            du = fl.add_fields(
                *[fl.scale_field(u[j], f.dm(j)) for j in range(marks.algebra_dim)]
            )
            lhs = float(np.sum(weights * du.value(x0, nodes)))
            rhs = float(np.dot(gref, u)) * float(np.sum(weights * f.value(x0, nodes)))
            assert abs(lhs - rhs) < 1e-6


class TestQuadratureRules:
    def test_circle_rule_total(self):
        nodes, weights = get_marks("circle").mark_quadrature()
        assert weights.sum() == pytest.approx(TWO_PI)

    def test_dilation_rule_integrates_gamma(self):
        nodes, weights = get_marks("dilation").mark_quadrature()
        m = nodes[:, 0]
        val = np.sum(weights * m**2 * np.exp(-m) / 2.0)
        assert val == pytest.approx(1.0, abs=1e-12)

    def test_sphere_rule_total_and_moments(self):
        nodes, weights = get_marks("sphere").mark_quadrature()
        assert weights.sum() == pytest.approx(4 * np.pi)
        assert abs(np.sum(weights * nodes[:, 2])) < 1e-12
        assert np.sum(weights * nodes[:, 2] ** 2) == pytest.approx(4 * np.pi / 3)


class TestValidation:
    def test_bad_marks_rejected(self):
        with pytest.raises(UsageError):
            get_marks("circle").validate_mark(np.array([7.0]))
        with pytest.raises(UsageError):
            get_marks("dilation").validate_mark(np.array([-1.0]))
        with pytest.raises(UsageError):
            get_marks("sphere").validate_mark(np.array([1.0, 1.0, 1.0]))

    def test_good_marks_accepted(self):
        get_marks("circle").validate_mark(np.array([3.0]))
        get_marks("dilation").validate_mark(np.array([0.5]))
        get_marks("sphere").validate_mark(np.array([0.0, 0.0, 1.0]))

    def test_rotation_validation(self):
        sph = get_marks("sphere")
        sph.validate_group(rotation_exp(np.array([0.3, -0.2, 1.0])))
        with pytest.raises(UsageError):
            sph.validate_group(2 * np.eye(3))

    def test_unknown_model(self):
        with pytest.raises(UsageError):
            get_marks("torus")
