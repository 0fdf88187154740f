"""Flows of bump fields: endpoint accuracy against independent integrators,
group law, inverses, variational Jacobians, and support short-circuits."""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from markcfg.errors import UsageError
from markcfg.flows import (
    BumpCurrent,
    BumpVectorField,
    PROFILE_LIPSCHITZ,
    RotatingBumpField,
    Window,
    flow,
    inverse_flow,
)


def _rk4_reference(field, t, x, n_steps):
    """Fixed-step classical integrator, independent of the production path."""
    y = np.asarray(x, dtype=float).copy()
    h = t / n_steps
    for _ in range(n_steps):
        k1 = field.value(y)
        k2 = field.value(y + 0.5 * h * k1)
        k3 = field.value(y + 0.5 * h * k2)
        k4 = field.value(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


class TestWindow:
    def test_basic(self):
        w = Window([0.0, -1.0], [2.0, 1.0])
        assert w.dim == 2
        assert w.volume == pytest.approx(4.0)
        assert w.contains(np.array([1.0, 0.0]))
        assert not w.contains(np.array([3.0, 0.0]))

    def test_rejects_empty(self):
        with pytest.raises(UsageError):
            Window([1.0], [1.0])


class TestBumpFields:
    def test_cap_enforced(self):
        radius = 0.5
        limit = radius / PROFILE_LIPSCHITZ
        BumpVectorField([0.0], radius, [0.99 * limit])
        with pytest.raises(UsageError):
            BumpVectorField([0.0], radius, [1.01 * limit])

    def test_value_and_jacobian_consistent_with_component_fields(self, rng):
        v = BumpVectorField([0.2, -0.1], 0.6, [0.2, -0.15])
        m = np.zeros(1)
        for _ in range(20):
            x = rng.uniform(-0.5, 0.9, size=2)
            val = v.value(x)
            jac = v.jacobian(x)
            for i in range(2):
                f = v.component_field(i)
                assert val[i] == pytest.approx(f.at(x, m), abs=1e-14)
                for j in range(2):
                    assert jac[i, j] == pytest.approx(f.dx(j).at(x, m), abs=1e-12)

    def test_divergence_matches_jacobian_trace(self, rng):
        v = BumpVectorField([0.0, 0.0], 1.0, [0.3, 0.2])
        x = rng.uniform(-0.6, 0.6, size=(10, 2))
        assert np.allclose(v.divergence(x), np.trace(v.jacobian(x), axis1=-2, axis2=-1))

    def test_current_values(self):
        u = BumpCurrent([0.0], 1.0, [2.0, 0.0, -1.0])
        assert np.allclose(u.value(np.array([0.0])), np.exp(-1.0) * np.array([2, 0, -1]))
        assert np.allclose(u.value(np.array([5.0])), 0.0)


class TestFlow:
    def test_zero_time_and_zero_field(self):
        v = BumpVectorField([0.0], 1.0, [0.3])
        r = flow(v, 0.0, np.array([0.2]))
        assert r.endpoint[0] == 0.2 and r.jacobian[0, 0] == 1.0

    def test_outside_support_bit_exact(self):
        v = BumpVectorField([0.0], 1.0, [0.3])
        x = np.array([1.5])
        r = flow(v, 1.0, x)
        assert r.endpoint[0] == 1.5  # exact, never integrated
        assert r.jacobian[0, 0] == 1.0

    def test_endpoint_against_reference_integrations(self):
        v = BumpVectorField([0.0], 1.0, [0.3])
        x = np.array([0.0])
        r = flow(v, 1.0, x)
        # step-halved fixed-step reference: two resolutions agree, then compare
        a = _rk4_reference(v, 1.0, x, 2000)
        b = _rk4_reference(v, 1.0, x, 4000)
        assert abs(a[0] - b[0]) < 1e-12
        assert abs(r.endpoint[0] - b[0]) < 1e-9
        # independent library integrator as a second oracle
        sol = solve_ivp(
            lambda t, y: v.value(y), (0, 1), x, rtol=1e-12, atol=1e-12, method="RK45"
        )
        assert abs(r.endpoint[0] - sol.y[0, -1]) < 1e-9

    def test_jacobian_against_library_variational_solve(self):
        v = BumpVectorField([0.1, -0.2], 0.8, [0.25, -0.1])
        x = np.array([0.3, -0.4])

        def rhs(t, y):
            pos = y[:2]
            jac = y[2:].reshape(2, 2)
            return np.concatenate([v.value(pos), (v.jacobian(pos) @ jac).ravel()])

        sol = solve_ivp(rhs, (0, 1), np.concatenate([x, np.eye(2).ravel()]),
                        rtol=1e-12, atol=1e-12)
        r = flow(v, 1.0, x)
        assert np.max(np.abs(r.endpoint - sol.y[:2, -1])) < 1e-9
        assert np.max(np.abs(r.jacobian - sol.y[2:, -1].reshape(2, 2))) < 1e-8

    def test_group_law(self, rng):
        v = BumpVectorField([0.0], 1.0, [0.4])
        for _ in range(10):
            x = rng.uniform(-0.9, 0.9, size=1)
            t1, t2 = rng.uniform(-1.0, 1.0, size=2)
            two_step = flow(v, t1, flow(v, t2, x).endpoint).endpoint
            one_step = flow(v, t1 + t2, x).endpoint
            assert np.max(np.abs(two_step - one_step)) < 1e-8

    def test_inverse_identity(self, rng):
        v = BumpVectorField([0.0, 0.0], 1.0, [0.3, -0.2])
        x = rng.uniform(-0.7, 0.7, size=(25, 2))
        fwd = flow(v, 1.0, x)
        back = inverse_flow(v, 1.0, fwd.endpoint)
        assert np.max(np.abs(back.endpoint - x)) < 1e-8

    def test_inverse_jacobian_is_matrix_inverse(self, rng):
        v = BumpVectorField([0.0, 0.0], 1.0, [0.3, -0.2])
        x = rng.uniform(-0.6, 0.6, size=(10, 2))
        fwd = flow(v, 1.0, x)
        back = inverse_flow(v, 1.0, fwd.endpoint)
        inv = np.linalg.inv(fwd.jacobian)
        assert np.max(np.abs(back.jacobian - inv)) < 1e-7

    def test_determinant_positive(self, rng):
        v = BumpVectorField([0.0], 1.0, [0.45])
        x = rng.uniform(-0.99, 0.99, size=(50, 1))
        for t in (-1.0, -0.3, 0.7, 1.0):
            r = flow(v, t, x)
            assert np.all(np.linalg.det(r.jacobian) > 0)

    def test_divergence_free_flow_preserves_volume(self, rng):
        v = RotatingBumpField([0.0, 0.0], 1.0, 0.6)
        x = rng.uniform(-0.65, 0.65, size=(30, 2))
        r = flow(v, 1.0, x)
        assert np.max(np.abs(np.linalg.det(r.jacobian) - 1.0)) < 1e-8

    def test_batch_matches_single(self, rng):
        # batched error control shares steps across the batch, so agreement
        # is at the integrator tolerance rather than bitwise
        v = BumpVectorField([0.0], 1.0, [0.4])
        xs = rng.uniform(-0.9, 0.9, size=(8, 1))
        batch = flow(v, 1.0, xs)
        for i in range(8):
            single = flow(v, 1.0, xs[i])
            assert abs(batch.endpoint[i, 0] - single.endpoint[0]) < 1e-9
            assert abs(batch.jacobian[i, 0, 0] - single.jacobian[0, 0]) < 1e-9

    def test_rotating_bump_requires_planar(self):
        with pytest.raises(UsageError):
            RotatingBumpField([0.0], 1.0, 0.1)
