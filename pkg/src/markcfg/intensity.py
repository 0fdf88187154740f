"""Intensity measures on (base space) x (mark space).

An :class:`IntensityModel` bundles a positive base density rho on a window, a
per-position normalized mark density p(x, .), and the mark-space model.  The
product q(x, m) = rho(x) p(x, m) is the density of the driving measure of the
point process against (volume) x (reference mark measure).  The model carries
exact combinator fields for the logarithmic derivatives of q, which the
calculus layer consumes, plus adaptive quadrature helpers for integrals
against the measure.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate
from scipy.special import gammaln, i0

from . import fields as fl
from .errors import ConfigError, NumericsError, UsageError
from .flows import Window
from .marks import TWO_PI, MarkSpace

__all__ = [
    "ConstantDensity",
    "GaussianDensity",
    "CircleUniform",
    "CircleVonMises",
    "GammaMarks",
    "SphereUniform",
    "SphereVonMisesFisher",
    "IntensityModel",
    "MixingLaw",
]


# ---------------------------------------------------------------------------
# base densities
# ---------------------------------------------------------------------------


class ConstantDensity:
    def __init__(self, level):
        self.level = float(level)
        if self.level <= 0.0:
            raise UsageError("base density level must be positive")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], self.level)

    def log_grad_fields(self, dim):
        return [fl.ZERO] * dim

    def bound(self, window):
        return self.level


class GaussianDensity:
    """rho(x) = amplitude * exp(-|x|^2 / 2); mass outside the window is a
    documented defect of the truncated scenario, not resampled."""

    def __init__(self, amplitude=1.0):
        self.amplitude = float(amplitude)
        if self.amplitude <= 0.0:
            raise UsageError("amplitude must be positive")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.amplitude * np.exp(-0.5 * np.sum(x * x, axis=-1))

    def log_grad_fields(self, dim):
        out = []
        for i in range(dim):
            expo = [0] * dim
            expo[i] = 1
            out.append(fl.XPoly(dim, {tuple(expo): -1.0}))
        return out

    def bound(self, window):
        nearest = np.clip(0.0, window.lows, window.highs)
        return self.amplitude * float(np.exp(-0.5 * np.sum(nearest**2)))


class _ScaledDensity:
    def __init__(self, base, factor):
        self.base = base
        self.factor = float(factor)

    def value(self, x):
        return self.factor * self.base.value(x)

    def log_grad_fields(self, dim):
        return self.base.log_grad_fields(dim)

    def bound(self, window):
        return self.factor * self.base.bound(window)


# ---------------------------------------------------------------------------
# mark families (densities normalized against the reference mark measure)
# ---------------------------------------------------------------------------


class CircleUniform:
    mark_dim = 1

    def density(self, x, m):
        m = np.asarray(m, dtype=float)
        shape = np.broadcast_shapes(np.shape(x)[:-1], m.shape[:-1])
        return np.full(shape, 1.0 / TWO_PI)

    def log_grad_m_fields(self, dim):
        return [fl.ZERO]

    def log_grad_x_fields(self, dim):
        return [fl.ZERO] * dim

    def sample(self, xs, rng):
        return rng.uniform(0.0, TWO_PI, size=(len(xs), 1))


class CircleVonMises:
    """Angle marks with density proportional to exp(kappa*cos(m - mean(x))).

    The mean direction may drift linearly across the base: mean(x) = mean0 +
    <slope, x>, which makes the position derivative of log p nonzero and
    exercises the full mixed term of the logarithmic derivative.  Sampling is
    by rejection from the uniform angle with the exact envelope exp(kappa*
    (cos - 1)) <= 1.
    """

    mark_dim = 1

    def __init__(self, mean0, kappa, slope=None):
        self.mean0 = float(mean0)
        self.kappa = float(kappa)
        if self.kappa < 0.0:
            raise UsageError("kappa must be nonnegative")
        self.slope = None if slope is None else np.atleast_1d(np.asarray(slope, dtype=float))
        self._log_norm = math.log(TWO_PI * i0(self.kappa))

    def _mean(self, x):
        x = np.asarray(x, dtype=float)
        if self.slope is None:
            return np.full(x.shape[:-1], self.mean0)
        return self.mean0 + np.tensordot(x, self.slope, axes=([-1], [0]))

    def density(self, x, m):
        m = np.asarray(m, dtype=float)
        return np.exp(self.kappa * np.cos(m[..., 0] - self._mean(x)) - self._log_norm)

    def _cos_mean(self, dim, kind):
        freq = np.zeros(dim) if self.slope is None else self.slope
        return fl.XTrig(freq, self.mean0, kind)

    def log_grad_m_fields(self, dim):
        # d/dm of kappa*cos(m - mean(x)) = -kappa*sin(m)cos(mean) + kappa*cos(m)sin(mean)
        term1 = fl.mul_fields(
            fl.CircleTrig({(1, 1): -self.kappa}), self._cos_mean(dim, "cos")
        )
        term2 = fl.mul_fields(
            fl.CircleTrig({(1, 0): self.kappa}), self._cos_mean(dim, "sin")
        )
        return [fl.add_fields(term1, term2)]

    def log_grad_x_fields(self, dim):
        if self.slope is None:
            return [fl.ZERO] * dim
        # d/dx_i = kappa*slope_i*sin(m - mean(x))
        base = fl.add_fields(
            fl.mul_fields(fl.CircleTrig({(1, 1): self.kappa}), self._cos_mean(dim, "cos")),
            fl.mul_fields(fl.CircleTrig({(1, 0): -self.kappa}), self._cos_mean(dim, "sin")),
        )
        return [fl.scale_field(s, base) for s in self.slope]

    def sample(self, xs, rng):
        n = len(xs)
        means = self._mean(np.asarray(xs, dtype=float))
        out = np.empty(n)
        todo = np.ones(n, dtype=bool)
        while np.any(todo):
            k = int(np.sum(todo))
            cand = rng.uniform(0.0, TWO_PI, size=k)
            accept = rng.uniform(size=k) < np.exp(
                self.kappa * (np.cos(cand - means[todo]) - 1.0)
            )
            idx = np.flatnonzero(todo)[accept]
            out[idx] = cand[accept]
            todo[idx] = False
        return out[:, None]


class GammaMarks:
    """Gamma(shape, rate) marks on the positive ray, density taken against
    Lebesgue measure.  Shapes below 2 are rejected: the square root of the
    product density must keep a square integrable derivative near zero."""

    mark_dim = 1

    def __init__(self, shape, rate=1.0):
        self.shape = float(shape)
        self.rate = float(rate)
        if self.shape < 2.0:
            raise UsageError("gamma mark shape must be >= 2")
        if self.rate <= 0.0:
            raise UsageError("gamma mark rate must be positive")
        self._log_norm = self.shape * math.log(self.rate) - gammaln(self.shape)

    def density(self, x, m):
        m = np.asarray(m, dtype=float)
        r = m[..., 0]
        out = np.exp(self._log_norm + (self.shape - 1.0) * np.log(r) - self.rate * r)
        shape = np.broadcast_shapes(np.shape(x)[:-1], r.shape)
        return np.broadcast_to(out, shape).copy()

    def log_grad_m_fields(self, dim):
        # generator derivative of log p: (shape-1) - rate*m
        return [fl.RayPolyExp({(0.0, 0.0): self.shape - 1.0, (1.0, 0.0): -self.rate})]

    def log_grad_x_fields(self, dim):
        return [fl.ZERO] * dim

    def sample(self, xs, rng):
        return rng.standard_gamma(self.shape, size=(len(xs), 1)) / self.rate


class SphereUniform:
    mark_dim = 3

    def density(self, x, m):
        m = np.asarray(m, dtype=float)
        shape = np.broadcast_shapes(np.shape(x)[:-1], m.shape[:-1])
        return np.full(shape, 1.0 / (4.0 * np.pi))

    def log_grad_m_fields(self, dim):
        return [fl.ZERO] * 3

    def log_grad_x_fields(self, dim):
        return [fl.ZERO] * dim

    def sample(self, xs, rng):
        v = rng.standard_normal((len(xs), 3))
        return v / np.linalg.norm(v, axis=1, keepdims=True)


class SphereVonMisesFisher:
    """Unit-vector marks with density C(kappa) exp(kappa <mu, m>), sampled by
    inverting the distribution of the polar cosine around the mean axis."""

    mark_dim = 3

    def __init__(self, mu, kappa):
        mu = np.asarray(mu, dtype=float)
        self.mu = mu / np.linalg.norm(mu)
        self.kappa = float(kappa)
        if self.kappa <= 0.0:
            raise UsageError("kappa must be positive")
        self._log_norm = math.log(4.0 * np.pi * math.sinh(self.kappa) / self.kappa)
        # orthonormal frame transverse to the mean axis
        a = np.eye(3)[np.argmin(np.abs(self.mu))]
        t1 = np.cross(self.mu, a)
        t1 /= np.linalg.norm(t1)
        self._frame = (t1, np.cross(self.mu, t1))

    def density(self, x, m):
        m = np.asarray(m, dtype=float)
        out = np.exp(self.kappa * np.tensordot(m, self.mu, axes=([-1], [0])) - self._log_norm)
        shape = np.broadcast_shapes(np.shape(x)[:-1], m.shape[:-1])
        return np.broadcast_to(out, shape).copy()

    def log_grad_m_fields(self, dim):
        # generator derivative along axis j of kappa <mu, m> is kappa (m x mu)_j
        out = []
        for j in range(3):
            a, b = (j + 1) % 3, (j + 2) % 3
            ea, eb = [0, 0, 0], [0, 0, 0]
            ea[a], eb[b] = 1, 1
            out.append(
                fl.SpherePoly(
                    {tuple(ea): self.kappa * self.mu[b], tuple(eb): -self.kappa * self.mu[a]}
                )
            )
        return out

    def log_grad_x_fields(self, dim):
        return [fl.ZERO] * dim

    def sample(self, xs, rng):
        n = len(xs)
        u = rng.uniform(size=n)
        w = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * self.kappa)) / self.kappa
        ang = rng.uniform(0.0, TWO_PI, size=n)
        s = np.sqrt(np.clip(1.0 - w * w, 0.0, None))
        t1, t2 = self._frame
        return (
            w[:, None] * self.mu
            + (s * np.cos(ang))[:, None] * t1
            + (s * np.sin(ang))[:, None] * t2
        )


# ---------------------------------------------------------------------------
# the product intensity
# ---------------------------------------------------------------------------


class IntensityModel:
    """Driving measure q(x,m) = rho(x) p(x,m) on window x mark space."""

    def __init__(self, marks: MarkSpace, window: Window, rho, family, name=""):
        if family.mark_dim != marks.mark_dim:
            raise UsageError("mark family does not match the mark space")
        self.marks = marks
        self.window = window
        self.rho = rho
        self.family = family
        self.name = name
        self._mass = None
        self._mark_rule = None

    # -- basic data ----------------------------------------------------------
    @property
    def dim(self):
        return self.window.dim

    @property
    def mark_dim(self):
        return self.marks.mark_dim

    @property
    def algebra_dim(self):
        return self.marks.algebra_dim

    def q(self, x, m):
        return self.rho.value(x) * self.family.density(x, m)

    @property
    def rho_max(self):
        return self.rho.bound(self.window)

    # -- exact logarithmic derivative fields ----------------------------------
    def dlogq_x(self):
        rho_part = self.rho.log_grad_fields(self.dim)
        fam_part = self.family.log_grad_x_fields(self.dim)
        return [fl.add_fields(a, b) for a, b in zip(rho_part, fam_part)]

    def dlogq_m(self):
        return self.family.log_grad_m_fields(self.dim)

    # -- quadrature -----------------------------------------------------------
    def mark_rule(self):
        if self._mark_rule is None:
            self._mark_rule = self.marks.mark_quadrature()
        return self._mark_rule

    def total_mass(self, tol=1e-8):
        """Mass of the window under the driving measure; the normalized mark
        density integrates out, so this is a base-only adaptive quadrature."""
        if self._mass is None:
            if self.dim == 1:
                val, err = integrate.quad(
                    lambda t: float(self.rho.value(np.array([t]))),
                    self.window.lows[0],
                    self.window.highs[0],
                    epsabs=tol,
                    epsrel=tol,
                    limit=300,
                )
            elif self.dim == 2:
                val, err = integrate.dblquad(
                    lambda y, t: float(self.rho.value(np.array([t, y]))),
                    self.window.lows[0],
                    self.window.highs[0],
                    self.window.lows[1],
                    self.window.highs[1],
                    epsabs=tol,
                    epsrel=tol,
                )
            else:
                raise UsageError("total mass quadrature supports dim 1 or 2")
            if err > 100 * tol:
                raise NumericsError(f"window mass quadrature error {err:.2e} above tolerance")
            self._mass = float(val)
        return self._mass

    def _x_range(self, support_box):
        lo, hi = self.window.lows.copy(), self.window.highs.copy()
        if support_box is not None:
            lo = np.maximum(lo, support_box[0])
            hi = np.minimum(hi, support_box[1])
        return lo, hi

    def expectation(self, func, tol=1e-10, support_box=None):
        """Integral of func against the driving measure, adaptive over the
        base coordinate with the model's fixed mark rule inside.

        ``func``: a field or a vectorized callable of (x, m).
        """
        if self.dim != 1:
            raise UsageError("measure quadrature is implemented for a 1-d base")
        if hasattr(func, "value") and support_box is None:
            support_box = func.support_box
        f = func.value if hasattr(func, "value") else func
        nodes, weights = self.mark_rule()
        lo, hi = self._x_range(support_box)
        if lo[0] >= hi[0]:
            return 0.0

        def integrand(t):
            x = np.array([t])
            vals = np.asarray(f(x, nodes), dtype=float)
            dens = self.family.density(x, nodes)
            return float(self.rho.value(x)) * float(np.sum(weights * dens * vals))

        val, err = integrate.quad(
            integrand, lo[0], hi[0], epsabs=tol, epsrel=tol, limit=400
        )
        if err > max(1e-7, 1000 * tol):
            raise NumericsError(f"measure quadrature error {err:.2e} above tolerance")
        return float(val)

    def inner(self, f, g, tol=1e-10):
        """L2 inner product of two functions under the driving measure."""
        fa = f.value if hasattr(f, "value") else f
        ga = g.value if hasattr(g, "value") else g
        box_f = getattr(f, "support_box", None)
        box_g = getattr(g, "support_box", None)
        box = box_f if box_g is None else (box_g if box_f is None else None)
        if box_f is not None and box_g is not None:
            box = (np.maximum(box_f[0], box_g[0]), np.minimum(box_f[1], box_g[1]))
            if np.any(box[0] >= box[1]):
                return 0.0
        return self.expectation(lambda x, m: fa(x, m) * ga(x, m), tol=tol, support_box=box)

    def laplace_closed(self, phi, tol=1e-10):
        """Closed-form mean of exp(<phi, .>) under the point process law:
        exp of the integral of (e^phi - 1) against the driving measure."""
        f = phi.value if hasattr(phi, "value") else phi
        box = getattr(phi, "support_box", None)
        exponent = self.expectation(lambda x, m: np.expm1(f(x, m)), tol=tol, support_box=box)
        return float(np.exp(exponent))

    # -- scaling for mixtures --------------------------------------------------
    def scaled(self, z):
        if z < 0.0:
            raise UsageError("intensity scale must be nonnegative")
        model = IntensityModel(
            self.marks, self.window, _ScaledDensity(self.rho, z), self.family, self.name
        )
        if self._mass is not None:
            model._mass = z * self._mass
        model._mark_rule = self._mark_rule
        return model


# ---------------------------------------------------------------------------
# mixing laws over the intensity scale
# ---------------------------------------------------------------------------


class MixingLaw:
    """Distribution of the random scale applied to the driving measure."""

    def __init__(self, kind, atoms=None, weights=None, shape=None, rate=None):
        self.kind = kind
        if kind == "discrete":
            self.atoms = np.atleast_1d(np.asarray(atoms, dtype=float))
            self.weights = np.atleast_1d(np.asarray(weights, dtype=float))
            if np.any(self.atoms < 0.0):
                raise ConfigError("mixing atoms must be nonnegative")
            if np.any(self.weights < 0.0) or abs(self.weights.sum() - 1.0) > 1e-12:
                raise ConfigError("mixing weights must be a probability vector")
            self._cum = np.cumsum(self.weights)
        elif kind == "gamma":
            self.shape = float(shape)
            self.rate = float(rate)
            if self.shape <= 0.0 or self.rate <= 0.0:
                raise ConfigError("gamma mixing needs positive shape and rate")
        else:
            raise ConfigError(f"unknown mixing law kind {kind!r}")

    @classmethod
    def point(cls, z):
        return cls("discrete", atoms=[z], weights=[1.0])

    @classmethod
    def discrete(cls, atoms, weights):
        return cls("discrete", atoms=atoms, weights=weights)

    @classmethod
    def gamma(cls, shape, rate):
        return cls("gamma", shape=shape, rate=rate)

    def mean(self):
        if self.kind == "discrete":
            return float(np.sum(self.atoms * self.weights))
        return self.shape / self.rate

    def sample(self, rng):
        if self.kind == "discrete":
            u = rng.uniform()
            return float(self.atoms[int(np.searchsorted(self._cum, u))])
        return float(rng.standard_gamma(self.shape) / self.rate)
