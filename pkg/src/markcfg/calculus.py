"""Differential calculus of cylinder functionals on marked configurations.

A cylinder functional is an outer function applied to finitely many pairings
F(omega) = g(<phi_1, omega>, ..., <phi_N, omega>).  Because the test functions
carry exact derivative rules and the outer function is an expression tree
with exact partials, every operation here is closed: directional derivatives
of cylinder functionals are again cylinder functionals, which is what lets
commutators of the representation operators be evaluated with no numerics.

The module also provides the logarithmic derivative of the driving measure
along a direction (the drift that makes integration by parts hold), the
divergence of cylinder vector fields, the one-particle and configuration
Dirichlet operators, and the algebra bracket of direction pairs.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from . import fields as fl
from .errors import UsageError

__all__ = [
    "Direction",
    "TangentVector",
    "CylinderFunction",
    "linear_functional",
    "exp_functional",
    "directional_derivative_field",
    "divergence_x_field",
    "grad_inner_field",
    "point_log_derivative_field",
    "log_derivative_functional",
    "dirichlet_point_field",
    "dirichlet_config_functional",
    "lie_bracket",
    "apply_k",
    "divergence_value",
    "ibp_base_residual",
    "ibp_config_residual",
]


class Direction:
    """A pair (v, u): base vector field components and algebra-valued current
    components, all carried as exact-derivative fields.  ``bump_v``/``bump_u``
    keep the originating bump objects when available so flow-based oracles
    (and group elements) can reuse them."""

    def __init__(self, v_fields, u_fields, bump_v=None, bump_u=None):
        self.v_fields = list(v_fields)
        self.u_fields = list(u_fields)
        self.bump_v = bump_v
        self.bump_u = bump_u

    @classmethod
    def from_bumps(cls, dim, algebra_dim, v=None, u=None):
        vf = [v.component_field(i) for i in range(dim)] if v is not None else [fl.ZERO] * dim
        uf = (
            [u.component_field(j) for j in range(algebra_dim)]
            if u is not None
            else [fl.ZERO] * algebra_dim
        )
        return cls(vf, uf, bump_v=v, bump_u=u)

    @property
    def dim(self):
        return len(self.v_fields)

    @property
    def algebra_dim(self):
        return len(self.u_fields)

    def v_values(self, points, marks):
        return np.stack([f.value(points, marks) for f in self.v_fields], axis=-1)

    def u_values(self, points, marks):
        return np.stack([f.value(points, marks) for f in self.u_fields], axis=-1)

    def tangent_at(self, omega):
        return TangentVector(
            self.v_values(omega.points, omega.marks), self.u_values(omega.points, omega.marks)
        )

    def scaled(self, c):
        return Direction(
            [fl.scale_field(c, f) for f in self.v_fields],
            [fl.scale_field(c, f) for f in self.u_fields],
        )


@dataclass
class TangentVector:
    """Element of the tangent space at a configuration: one base vector and
    one algebra vector per configuration point."""

    base: np.ndarray
    algebra: np.ndarray

    def inner(self, other):
        return float(np.sum(self.base * other.base) + np.sum(self.algebra * other.algebra))

    def norm2(self):
        return self.inner(self)


# ---------------------------------------------------------------------------
# field-level operators
# ---------------------------------------------------------------------------


def directional_derivative_field(phi, direction):
    """The derivative of phi along the joint motion (flow in the base,
    mark rotation by the current): <grad_x phi, v> + <generator grads, u>."""
    parts = [fl.mul_fields(phi.dx(i), vf) for i, vf in enumerate(direction.v_fields)]
    parts += [fl.mul_fields(phi.dm(j), uf) for j, uf in enumerate(direction.u_fields)]
    return fl.add_fields(*parts)


def divergence_x_field(direction):
    return fl.add_fields(*[vf.dx(i) for i, vf in enumerate(direction.v_fields)])


def grad_inner_field(f, g, dim, algebra_dim):
    """Pointwise inner product of the full gradients of two test functions."""
    parts = [fl.mul_fields(f.dx(i), g.dx(i)) for i in range(dim)]
    parts += [fl.mul_fields(f.dm(j), g.dm(j)) for j in range(algebra_dim)]
    return fl.add_fields(*parts)


def point_log_derivative_field(direction, model):
    """Logarithmic derivative of the driving measure along a direction: the
    drift term of the one-particle integration by parts formula.

    Built from <d log q, v> + div v in the base slot and <generator log q, u>
    minus the pairing of u with the reference-translate gradient in the mark
    slot."""
    parts = []
    dlq_x = model.dlogq_x()
    for i, vf in enumerate(direction.v_fields):
        parts.append(fl.mul_fields(dlq_x[i], vf))
    parts.append(divergence_x_field(direction))
    dlq_m = model.dlogq_m()
    g = model.marks.grad_reference_identity()
    for j, uf in enumerate(direction.u_fields):
        parts.append(fl.mul_fields(dlq_m[j], uf))
        if g[j] != 0.0:
            parts.append(fl.scale_field(-g[j], uf))
    return fl.add_fields(*parts)


def dirichlet_point_field(phi, model):
    """One-particle Dirichlet operator applied to a test function:
    -(base Laplacian) - <dlog q, grad>_base - (mark Laplacian) - <dlog q, grad>_mark."""
    dim = model.dim
    parts = [fl.scale_field(-1.0, fl.laplacian_x(phi, dim))]
    dlq_x = model.dlogq_x()
    for i in range(dim):
        parts.append(fl.scale_field(-1.0, fl.mul_fields(dlq_x[i], phi.dx(i))))
    parts.append(
        fl.scale_field(
            -1.0,
            fl.mark_laplacian(phi, model.algebra_dim, model.marks.grad_reference_identity()),
        )
    )
    dlq_m = model.dlogq_m()
    for j in range(model.algebra_dim):
        parts.append(fl.scale_field(-1.0, fl.mul_fields(dlq_m[j], phi.dm(j))))
    return fl.add_fields(*parts)


# ---------------------------------------------------------------------------
# cylinder functionals
# ---------------------------------------------------------------------------

_pairing_cache: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def pairing_batch(field, batch):
    """Per-sample pairings of a field over a batch, cached per batch object."""
    table = _pairing_cache.setdefault(batch, {})
    key = id(field)
    arr = table.get(key)
    if arr is None:
        if batch.points.shape[0]:
            vals = field.value(batch.points, batch.marks)
        else:
            vals = np.zeros(0)
        arr = batch.segment_sum(vals)
        table[key] = arr
    return arr


class CylinderFunction:
    """g(<phi_1, .>, ..., <phi_N, .>) with exact outer partials.

    Supports pointwise algebra (sum, product, scalar multiple), exact
    directional derivatives (which extend the slot list), gradients as
    tangent vectors, and vectorized evaluation over sample batches.
    """

    def __init__(self, fields, outer):
        self.fields = list(fields)
        self.outer = outer
        self._deriv_cache = {}

    # -- evaluation ---------------------------------------------------------
    def pairings(self, omega):
        if len(omega) == 0:
            return np.zeros(len(self.fields))
        return np.array(
            [float(np.sum(f.value(omega.points, omega.marks))) for f in self.fields]
        )

    def value(self, omega):
        return float(self.outer.value(self.pairings(omega)))

    def batch_values(self, batch):
        if not self.fields:
            return self.outer.value(np.zeros((batch.n_samples, 0)))
        args = np.stack([pairing_batch(f, batch) for f in self.fields], axis=-1)
        return self.outer.value(args)

    def values_with_point_shift(self, omega, xs, ms):
        """Values at omega with one extra point appended, vectorized over the
        candidate extra points (used by the add-one-point operator)."""
        base = self.pairings(omega)
        if len(self.fields) == 0:
            shape = np.broadcast_shapes(np.shape(xs)[:-1], np.shape(ms)[:-1])
            return self.outer.value(np.zeros(shape + (0,)))
        shifts = np.stack([f.value(xs, ms) for f in self.fields], axis=-1)
        return self.outer.value(base + shifts)

    # -- algebra --------------------------------------------------------------
    def _merged(self, other):
        merged = list(self.fields)
        index = {id(f): i for i, f in enumerate(merged)}
        mapping = {}
        for j, f in enumerate(other.fields):
            if id(f) in index:
                mapping[j] = index[id(f)]
            else:
                mapping[j] = len(merged)
                index[id(f)] = len(merged)
                merged.append(f)
        return merged, mapping

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return CylinderFunction(self.fields, fl.outer_add(self.outer, fl.OuterConst(other)))
        merged, mapping = self._merged(other)
        return CylinderFunction(merged, fl.outer_add(self.outer, other.outer.remap(mapping)))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return CylinderFunction(self.fields, fl.outer_mul(fl.OuterConst(other), self.outer))
        merged, mapping = self._merged(other)
        return CylinderFunction(merged, fl.outer_mul(self.outer, other.outer.remap(mapping)))

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (other * -1.0 if isinstance(other, CylinderFunction) else -other)

    # -- calculus -------------------------------------------------------------
    def directional_derivative(self, direction):
        """Exact derivative along the lifted motion of the direction pair;
        the result is again a cylinder functional over the enlarged test set."""
        new_fields = list(self.fields)
        terms = []
        for j, f in enumerate(self.fields):
            pj = self.outer.partial(j)
            if pj is fl.OUTER_ZERO:
                continue
            df = directional_derivative_field(f, direction)
            if df is fl.ZERO:
                continue
            idx = len(new_fields)
            new_fields.append(df)
            terms.append(fl.outer_mul(pj, fl.OuterVar(idx)))
        return CylinderFunction(new_fields, fl.outer_add(*terms))

    def _point_gradient_fields(self, dim, algebra_dim):
        key = ("grad", dim, algebra_dim)
        if key not in self._deriv_cache:
            gx = [[f.dx(i) for i in range(dim)] for f in self.fields]
            gm = [[f.dm(j) for j in range(algebra_dim)] for f in self.fields]
            self._deriv_cache[key] = (gx, gm)
        return self._deriv_cache[key]

    def gradient(self, omega, dim, algebra_dim):
        """Tangent vector at omega whose pairing with any direction equals the
        directional derivative (same arithmetic, so the duality is exact)."""
        n = len(omega)
        base = np.zeros((n, dim))
        alg = np.zeros((n, algebra_dim))
        if n == 0:
            return TangentVector(base, alg)
        args = self.pairings(omega)
        gx, gm = self._point_gradient_fields(dim, algebra_dim)
        for j in range(len(self.fields)):
            w = float(self.outer.partial(j).value(args))
            if w == 0.0:
                continue
            for i in range(dim):
                if gx[j][i] is not fl.ZERO:
                    base[:, i] += w * gx[j][i].value(omega.points, omega.marks)
            for l in range(algebra_dim):
                if gm[j][l] is not fl.ZERO:
                    alg[:, l] += w * gm[j][l].value(omega.points, omega.marks)
        return TangentVector(base, alg)


def linear_functional(phi):
    """The pairing functional omega -> <phi, omega>."""
    return CylinderFunction([phi], fl.OuterVar(0))


def exp_functional(phi):
    """omega -> exp(<phi, omega>)."""
    return CylinderFunction([phi], fl.outer_fun("exp", fl.OuterVar(0)))


def log_derivative_functional(direction, model):
    """Configuration-level logarithmic derivative: the pairing of the
    one-particle drift along the direction."""
    return linear_functional(point_log_derivative_field(direction, model))


def dirichlet_config_functional(F, model):
    """Configuration Dirichlet operator applied to a cylinder functional,
    materialized as a cylinder functional again:

    - second order part: minus the pairing of the gradient inner products,
      weighted by the outer Hessian;
    - first order part: the pairing of the one-particle Dirichlet images,
      weighted by the outer gradient.
    """
    dim, adim = model.dim, model.algebra_dim
    new_fields = list(F.fields)
    terms = []
    n = len(F.fields)
    for j in range(n):
        pj = F.outer.partial(j)
        if pj is fl.OUTER_ZERO:
            continue
        for k in range(n):
            pjk = pj.partial(k)
            if pjk is fl.OUTER_ZERO:
                continue
            gij = grad_inner_field(F.fields[j], F.fields[k], dim, adim)
            idx = len(new_fields)
            new_fields.append(gij)
            terms.append(fl.outer_mul(fl.OuterConst(-1.0), fl.outer_mul(pjk, fl.OuterVar(idx))))
        hj = dirichlet_point_field(F.fields[j], model)
        idx = len(new_fields)
        new_fields.append(hj)
        terms.append(fl.outer_mul(pj, fl.OuterVar(idx)))
    return CylinderFunction(new_fields, fl.outer_add(*terms))


def gradient_inner_functional(F1, F2, model):
    """omega -> <grad F1, grad F2> in the tangent space at omega, materialized
    as a cylinder functional for vectorized Monte Carlo."""
    dim, adim = model.dim, model.algebra_dim
    merged, mapping = F1._merged(F2)
    new_fields = list(merged)
    terms = []
    for j in range(len(F1.fields)):
        pj = F1.outer.partial(j)
        if pj is fl.OUTER_ZERO:
            continue
        for k in range(len(F2.fields)):
            pk = F2.outer.partial(k).remap(mapping)
            if pk is fl.OUTER_ZERO:
                continue
            gij = grad_inner_field(F1.fields[j], F2.fields[k], dim, adim)
            if gij is fl.ZERO:
                continue
            idx = len(new_fields)
            new_fields.append(gij)
            terms.append(fl.outer_mul(fl.outer_mul(pj, pk), fl.OuterVar(idx)))
    return CylinderFunction(new_fields, fl.outer_add(*terms))


# ---------------------------------------------------------------------------
# bracket, representation operators, divergence, integration by parts
# ---------------------------------------------------------------------------


def lie_bracket(d1, d2, marks):
    """Bracket of two direction pairs:
    ([v1, v2], grad_{v1} u2 - grad_{v2} u1 + [u1, u2]),
    with the pointwise algebra bracket vanishing for the abelian mark groups
    and given by the cross product for the rotation algebra."""
    dim = d1.dim
    adim = d1.algebra_dim
    if d2.dim != dim or d2.algebra_dim != adim:
        raise UsageError("direction pairs have mismatched dimensions")

    def deriv_along(vfields, w):
        return fl.add_fields(*[fl.mul_fields(w.dx(k), vfields[k]) for k in range(dim)])

    v_new = [
        fl.add_fields(
            deriv_along(d1.v_fields, d2.v_fields[i]),
            fl.scale_field(-1.0, deriv_along(d2.v_fields, d1.v_fields[i])),
        )
        for i in range(dim)
    ]
    u_new = [
        fl.add_fields(
            deriv_along(d1.v_fields, d2.u_fields[j]),
            fl.scale_field(-1.0, deriv_along(d2.v_fields, d1.u_fields[j])),
        )
        for j in range(adim)
    ]
    if adim == 3 and marks.name == "sphere":
        # the rotation generators anti-commute with the matrix bracket
        # ([L_a, L_b] = -L_{a x b} for a left action), so the pointwise
        # algebra bracket realizing the operator commutator is cross(u2, u1)
        for j in range(3):
            a, b = (j + 1) % 3, (j + 2) % 3
            u_new[j] = fl.add_fields(
                u_new[j],
                fl.mul_fields(d2.u_fields[a], d1.u_fields[b]),
                fl.scale_field(-1.0, fl.mul_fields(d2.u_fields[b], d1.u_fields[a])),
            )
    return Direction(v_new, u_new)


def apply_k(direction, F, model):
    """Real form of the representation generator: K = (directional derivative)
    + (1/2) (log-derivative pairing) acting by multiplication."""
    return F.directional_derivative(direction) + 0.5 * (
        log_derivative_functional(direction, model) * F
    )


def divergence_value(terms, model, omega):
    """Divergence at omega of the cylinder vector field sum_j F_j (v_j, u_j):
    sum of directional derivatives plus drift pairings times coefficients."""
    total = 0.0
    for F, direction in terms:
        total += F.directional_derivative(direction).value(omega)
        total += log_derivative_functional(direction, model).value(omega) * F.value(omega)
    return total


def ibp_base_residual(phi1, phi2, direction, model, tol=1e-9):
    """Quadrature residual of the one-particle integration by parts identity:
    integral of (D phi1) phi2 + phi1 (D phi2) + phi1 phi2 beta against the
    driving measure; zero up to quadrature error when the identity holds."""
    d1 = directional_derivative_field(phi1, direction)
    d2 = directional_derivative_field(phi2, direction)
    beta = point_log_derivative_field(direction, model)
    integrand = fl.add_fields(
        fl.mul_fields(d1, phi2),
        fl.mul_fields(phi1, d2),
        fl.mul_fields(fl.mul_fields(phi1, phi2), beta),
    )
    if integrand is fl.ZERO:
        return 0.0
    return abs(model.expectation(integrand, tol=tol))


def ibp_config_residual(F1, F2, direction, model, n_samples, seed, mixing=None):
    """Monte Carlo residual of the configuration integration by parts formula
    under the point process law (or a mixture of scaled laws): the mean of
    (DF1) F2 + F1 (DF2) + F1 F2 B on a common sample stream, with its SE."""
    from .sampling import mc_estimate

    G = (
        F1.directional_derivative(direction) * F2
        + F1 * F2.directional_derivative(direction)
        + F1 * F2 * log_derivative_functional(direction, model)
    )
    res = mc_estimate(G, model, n_samples, seed, mixing=mixing)
    return abs(res.mean), res.se
