"""Flat base space: rectangular windows, compactly supported bump fields, and
numerically integrated flows with exact variational Jacobians.

The flow map of a field v solves dy/dt = v(y) from y(0) = x; its space
derivative J(t) = D_x y(t) solves the variational equation dJ/dt = Dv(y) J
from J(0) = I.  Both are integrated jointly with an adaptive embedded
Dormand-Prince 4(5) pair so endpoint and Jacobian stay mutually consistent.
Points outside the support ball of the field are fixed exactly and never
enter the integrator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericsError, UsageError

__all__ = [
    "Window",
    "BumpVectorField",
    "BumpCurrent",
    "RotatingBumpField",
    "FlowResult",
    "flow",
    "inverse_flow",
    "PROFILE_LIPSCHITZ",
]

# max of |d/dr exp(-1/(1-r^2))| over r in [0,1]
PROFILE_LIPSCHITZ = 0.7984297518330626


@dataclass(frozen=True)
class Window:
    lows: np.ndarray
    highs: np.ndarray

    def __init__(self, lows, highs):
        lows = np.atleast_1d(np.asarray(lows, dtype=float))
        highs = np.atleast_1d(np.asarray(highs, dtype=float))
        if lows.shape != highs.shape or np.any(lows >= highs):
            raise UsageError("window needs lows < highs componentwise")
        object.__setattr__(self, "lows", lows)
        object.__setattr__(self, "highs", highs)

    @property
    def dim(self):
        return self.lows.shape[0]

    @property
    def volume(self):
        return float(np.prod(self.highs - self.lows))

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lows) & (x <= self.highs), axis=-1)

    def uniform(self, rng, n):
        return rng.uniform(self.lows, self.highs, size=(n, self.dim))

    def as_box(self):
        return (self.lows.copy(), self.highs.copy())


def _bump_profile(r2):
    """exp(-1/(1-r2)) for r2 < 1, else 0; also returns d(profile)/d(r2)."""
    inside = r2 < 1.0
    r2s = np.where(inside, r2, 0.0)
    one = 1.0 - r2s
    val = np.where(inside, np.exp(-1.0 / one), 0.0)
    dval = np.where(inside, -val / one**2, 0.0)
    return val, dval


class _RadialBumpBase:
    """Shared geometry of the compact bump families."""

    def __init__(self, center, radius):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)
        if self.radius <= 0.0:
            raise UsageError("bump radius must be positive")
        self.dim = self.center.shape[0]
        self.support_box = (self.center - self.radius, self.center + self.radius)

    def in_support(self, x):
        x = np.asarray(x, dtype=float)
        s = (x - self.center) / self.radius
        return np.sum(s * s, axis=-1) < 1.0


class BumpVectorField(_RadialBumpBase):
    """Constant direction times a radial bump profile: v(x) = A * b(|x-c|/R).

    Used as the generator of base-space flows; the constructor enforces
    |A| * Lip(b) / R < 1 so the time-one map is a well conditioned
    diffeomorphism (Jacobians stay bounded away from zero for |t| <= 1).
    """

    def __init__(self, center, radius, amplitude):
        super().__init__(center, radius)
        self.amplitude = np.atleast_1d(np.asarray(amplitude, dtype=float))
        if self.amplitude.shape[0] != self.dim:
            raise UsageError("amplitude must have the base dimension")
        self.cap = float(np.linalg.norm(self.amplitude)) * PROFILE_LIPSCHITZ / self.radius
        if self.cap >= 1.0:
            raise UsageError(
                f"bump amplitude too large for a flow generator: "
                f"|amp|*Lip/radius = {self.cap:.3f} >= 1"
            )

    def value(self, x):
        x = np.asarray(x, dtype=float)
        s = (x - self.center) / self.radius
        val, _ = _bump_profile(np.sum(s * s, axis=-1))
        return val[..., None] * self.amplitude

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        s = (x - self.center) / self.radius
        _, dval = _bump_profile(np.sum(s * s, axis=-1))
        # d v_i / d x_j = A_i * b'(r2) * 2 s_j / R
        return (
            self.amplitude[..., :, None]
            * (2.0 * dval[..., None, None] / self.radius)
            * s[..., None, :]
        )

    def divergence(self, x):
        return np.trace(self.jacobian(np.asarray(x, dtype=float)), axis1=-2, axis2=-1)

    def component_field(self, i):
        from .fields import XBump

        return XBump(self.center, self.radius, {(0,) * self.dim: self.amplitude[i]}, 0)

    @property
    def n_components(self):
        return self.amplitude.shape[0]


class BumpCurrent(_RadialBumpBase):
    """Algebra-valued bump: u(x) = U * b(|x-c|/R) with U an algebra vector."""

    def __init__(self, center, radius, algebra_amplitude):
        super().__init__(center, radius)
        self.amplitude = np.atleast_1d(np.asarray(algebra_amplitude, dtype=float))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        s = (x - self.center) / self.radius
        val, _ = _bump_profile(np.sum(s * s, axis=-1))
        return val[..., None] * self.amplitude

    def component_field(self, j):
        from .fields import XBump

        return XBump(self.center, self.radius, {(0,) * self.dim: self.amplitude[j]}, 0)

    @property
    def n_components(self):
        return self.amplitude.shape[0]


class RotatingBumpField(_RadialBumpBase):
    """Planar divergence-free bump: v(x) = strength * b(r2) * rot90(s).

    Only defined for a two dimensional base; useful to exercise the
    unit-determinant property of volume preserving flows.
    """

    def __init__(self, center, radius, strength):
        super().__init__(center, radius)
        if self.dim != 2:
            raise UsageError("rotating bump field requires a planar base")
        self.strength = float(strength)
        if self._max_jacobian_norm() >= 1.0:
            raise UsageError("rotating bump strength too large for a flow generator")

    def _q(self, s):
        return np.stack([-s[..., 1], s[..., 0]], axis=-1)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        s = (x - self.center) / self.radius
        val, _ = _bump_profile(np.sum(s * s, axis=-1))
        return self.strength * val[..., None] * self._q(s)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        s = (x - self.center) / self.radius
        r2 = np.sum(s * s, axis=-1)
        val, dval = _bump_profile(r2)
        q = self._q(s)
        rot = np.array([[0.0, -1.0], [1.0, 0.0]])
        jac = (
            2.0 * dval[..., None, None] * q[..., :, None] * s[..., None, :]
            + val[..., None, None] * rot
        )
        return (self.strength / self.radius) * jac

    def divergence(self, x):
        return np.zeros(np.asarray(x, dtype=float).shape[:-1])

    def _max_jacobian_norm(self):
        rr = np.linspace(0.0, 1.0 - 1e-9, 4001)
        pts = self.center + self.radius * np.stack([rr, np.zeros_like(rr)], axis=-1)
        jac = self.jacobian(pts)
        return float(np.max(np.linalg.norm(jac, axis=(-2, -1))))

    def component_field(self, i):
        from .fields import XBump

        poly = {(0, 1): -self.strength} if i == 0 else {(1, 0): self.strength}
        return XBump(self.center, self.radius, poly, 0)

    @property
    def n_components(self):
        return 2


@dataclass
class FlowResult:
    endpoint: np.ndarray
    jacobian: np.ndarray

    @property
    def det(self):
        return np.linalg.det(self.jacobian)


# Dormand-Prince 4(5) embedded pair
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


def _integrate_dp45(rhs, y0, t_end, rtol, atol, max_steps=20000):
    """Integrate dy/dt = rhs(y) from 0 to t_end for a batch y0 of shape (n, s).

    The error norm is the max over batch entries of the rms of the scaled
    per-component errors, so every point in the batch meets the tolerance.
    """
    y = y0.copy()
    t = 0.0
    direction = 1.0 if t_end >= 0.0 else -1.0
    span = abs(t_end)
    if span == 0.0:
        return y
    h = min(span, span / 16.0 + 1e-3)
    k = [None] * 7
    k[0] = rhs(y)
    steps = 0
    while True:
        if steps >= max_steps:
            raise NumericsError(
                f"flow integrator exceeded {max_steps} steps (t={t:.3g} of {t_end:.3g}, h={h:.3g})"
            )
        steps += 1
        h = min(h, span - abs(t))
        hs = direction * h
        for i in range(1, 7):
            yi = y + hs * sum(a * k[j] for j, a in enumerate(_DP_A[i]) if a != 0.0)
            k[i] = rhs(yi)
        y5 = y + hs * sum(b * k[j] for j, b in enumerate(_DP_B5) if b != 0.0)
        err = hs * sum(
            (b5 - b4) * k[j] for j, (b5, b4) in enumerate(zip(_DP_B5, _DP_B4)) if b5 != b4
        )
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
        enorm = float(np.max(np.sqrt(np.mean((err / scale) ** 2, axis=-1))))
        if enorm <= 1.0:
            t += hs
            y = y5
            k[0] = k[6]  # first-same-as-last
            if abs(abs(t) - span) < 1e-15 or abs(t) >= span:
                return y
        factor = 0.9 * (enorm + 1e-300) ** -0.2
        h *= min(5.0, max(0.2, factor))
        if h < 1e-14 * max(span, 1.0):
            raise NumericsError(f"flow integrator step size underflow at t={t:.3g}")


def flow(field, t, x, rtol=1e-10, atol=1e-10):
    """Flow map of ``field`` at time ``t`` with its variational Jacobian.

    ``x`` may be a single point (d,) or a batch (n, d).  Points outside the
    support of the field are returned unchanged with identity Jacobians,
    bypassing the integrator entirely.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    n, d = pts.shape
    endpoints = pts.copy()
    jac = np.broadcast_to(np.eye(d), (n, d, d)).copy()

    inside = field.in_support(pts)
    if t != 0.0 and np.any(inside):
        sub = pts[inside]
        m = sub.shape[0]
        y0 = np.concatenate([sub, np.broadcast_to(np.eye(d).ravel(), (m, d * d))], axis=1)

        def rhs(y):
            pos = y[:, :d]
            jmat = y[:, d:].reshape(m, d, d)
            dpos = field.value(pos)
            djac = field.jacobian(pos) @ jmat
            return np.concatenate([dpos, djac.reshape(m, d * d)], axis=1)

        yT = _integrate_dp45(rhs, y0, float(t), rtol, atol)
        endpoints[inside] = yT[:, :d]
        jac[inside] = yT[:, d:].reshape(m, d, d)

    dets = np.linalg.det(jac)
    if np.any(dets <= 0.0):
        raise NumericsError("flow produced a nonpositive Jacobian determinant")
    if single:
        return FlowResult(endpoints[0], jac[0])
    return FlowResult(endpoints, jac)


def inverse_flow(field, t, x, rtol=1e-10, atol=1e-10):
    """Inverse of the time-t flow map, i.e. the flow run for time -t."""
    return flow(field, -t, x, rtol=rtol, atol=atol)
