"""Orthogonal chaos layer over the marked point process.

The Charlier kernels are generated by the degree recursion

    Q_{n+1}(f^(n+1); w) = Q_n(f^n; w) (<f, w> - <f>) - n Q_n(f^(n-1) sym f^2; w)
                          - n Q_{n-1}(f^(n-1); w) <f^2>,    Q_0 = 1,

with <.> the mean against the driving measure.  The recursion only defines
diagonal tensors; mixed elementary tensors are reduced to diagonals by
polarization over subsets (with multiset collapsing so equal components do
not blow the sum up).  All kernels are materialized as polynomials in the
pairings of finitely many pointwise monomials of the involved test
functions, so evaluation at configurations is exact given the quadrature
means, and vectorizes over sample batches.

The same representation powers the Poisson exponentials, the add-one-point
(annihilation) operator, Fock-side inner products via permanents, and the
diagonal action of the heat semigroup on exponential vectors.
"""

from __future__ import annotations

import itertools
import math
import weakref

import numpy as np

from . import fields as fl
from .errors import DomainError, UsageError

__all__ = [
    "ChaosContext",
    "SymmetricTensor",
    "ChaosVector",
    "exp_vector",
    "PairingFunctional",
    "PoissonExponential",
    "annihilation_value",
    "fock_inner",
    "permanent",
    "HeatKernelModel",
    "EigenExpansion",
    "semigroup_apply",
    "semigroup_mc_check",
    "ProductFunctional",
]


# ---------------------------------------------------------------------------
# polynomials in base fields (pointwise) and in their pairings (per config)
# ---------------------------------------------------------------------------
#
# mono: tuple(sorted((base_index, power))) -- a pointwise product of powers
# poly: dict {mono: coeff}                 -- pointwise polynomial
# ppoly: dict {tuple(sorted((mono, power))): coeff} -- polynomial in pairings


def _poly_scale(p, c):
    if c == 0.0:
        return {}
    return {k: c * v for k, v in p.items()}

def _poly_add(p1, p2):
    out = dict(p1)
    for k, v in p2.items():
        out[k] = out.get(k, 0.0) + v
        if out[k] == 0.0:
            del out[k]
    return out

def _mono_mul(m1, m2):
    d = dict(m1)
    for b, p in m2:
        d[b] = d.get(b, 0) + p
    return tuple(sorted(d.items()))

def _poly_mul(p1, p2):
    out = {}
    for m1, c1 in p1.items():
        for m2, c2 in p2.items():
            k = _mono_mul(m1, m2)
            out[k] = out.get(k, 0.0) + c1 * c2
    return {k: v for k, v in out.items() if v != 0.0}

def _poly_key(p):
    return tuple(sorted(p.items()))


def _pp_const(c):
    return {(): c} if c != 0.0 else {}

def _pp_scale(pp, c):
    if c == 0.0:
        return {}
    return {k: c * v for k, v in pp.items()}

def _pp_add(pp1, pp2):
    out = dict(pp1)
    for k, v in pp2.items():
        out[k] = out.get(k, 0.0) + v
        if out[k] == 0.0:
            del out[k]
    return out

def _pp_mul(pp1, pp2):
    out = {}
    for t1, c1 in pp1.items():
        for t2, c2 in pp2.items():
            d = dict(t1)
            for mono, p in t2:
                d[mono] = d.get(mono, 0) + p
            k = tuple(sorted(d.items()))
            out[k] = out.get(k, 0.0) + c1 * c2
    return {k: v for k, v in out.items() if v != 0.0}

def _pp_from_poly(p):
    """The pairing of a pointwise polynomial, as a degree-one ppoly."""
    return {((mono, 1),): c for mono, c in p.items()}


class ChaosContext:
    """Shared state for chaos computations over one intensity model: the
    registry of base test functions, memoized measure moments of their
    monomials, and memoized kernel polynomials."""

    def __init__(self, model, max_degree=6):
        self.model = model
        self.max_degree = int(max_degree)
        self._bases = []
        self._base_ids = {}
        self._moments = {}
        self._diag_memo = {}
        self._elem_memo = {}
        self._inner_memo = {}

    # -- base registry -------------------------------------------------------
    def base_index(self, field):
        idx = self._base_ids.get(id(field))
        if idx is None:
            idx = len(self._bases)
            self._bases.append(field)
            self._base_ids[id(field)] = idx
        return idx

    def field_poly(self, field):
        return {((self.base_index(field), 1),): 1.0}

    def mono_values(self, mono, points, marks):
        if len(mono) == 0:
            return np.ones(np.broadcast_shapes(points.shape[:-1], marks.shape[:-1]))
        out = None
        for b, p in mono:
            v = self._bases[b].value(points, marks)
            v = v**p if p != 1 else v
            out = v if out is None else out * v
        return out

    # -- measure moments -------------------------------------------------------
    def moment(self, mono):
        val = self._moments.get(mono)
        if val is None:
            if len(mono) == 0:
                val = self.model.total_mass()
            else:
                box = None
                for b, _ in mono:
                    fb = self._bases[b].support_box
                    if fb is not None:
                        box = fb if box is None else (
                            np.maximum(box[0], fb[0]), np.minimum(box[1], fb[1]))
                val = self.model.expectation(
                    lambda x, m: self.mono_values(mono, x, m), support_box=box
                )
            self._moments[mono] = val
        return val

    def poly_mean(self, p):
        return sum(c * self.moment(mono) for mono, c in p.items())

    def inner(self, f, g):
        key = (id(f), id(g))
        val = self._inner_memo.get(key)
        if val is None:
            val = self.model.inner(f, g)
            self._inner_memo[key] = val
            self._inner_memo[(id(g), id(f))] = val
        return val

    # -- kernel construction -----------------------------------------------
    def diagonal(self, n, poly):
        """ppoly of the degree-n kernel on the diagonal tensor of a pointwise
        polynomial argument."""
        if n > self.max_degree:
            raise UsageError(f"chaos degree {n} exceeds the configured maximum {self.max_degree}")
        if n == 0:
            return _pp_const(1.0)
        if not poly:
            return {}
        key = (n, _poly_key(poly))
        pp = self._diag_memo.get(key)
        if pp is not None:
            return pp
        prev = self.diagonal(n - 1, poly)
        lin = _pp_add(_pp_from_poly(poly), _pp_const(-self.poly_mean(poly)))
        pp = _pp_mul(prev, lin)
        if n >= 2:
            sq = _poly_mul(poly, poly)
            mid = self.elementary_multiset(((poly, n - 2), (sq, 1)))
            pp = _pp_add(pp, _pp_scale(mid, -(n - 1)))
            pp = _pp_add(
                pp,
                _pp_scale(self.diagonal(n - 2, poly), -(n - 1) * self.poly_mean(sq)),
            )
        self._diag_memo[key] = pp
        return pp

    def elementary_multiset(self, components):
        """ppoly of the kernel on an elementary symmetric tensor given as
        ((poly, multiplicity), ...); reduces to diagonals by polarization."""
        components = tuple((dict(p), int(c)) for p, c in components if c > 0)
        n = sum(c for _, c in components)
        if n == 0:
            return _pp_const(1.0)
        if len(components) == 1:
            return self.diagonal(n, components[0][0])
        key = tuple(sorted((_poly_key(p), c) for p, c in components))
        pp = self._elem_memo.get(key)
        if pp is not None:
            return pp
        # polarization with multiset collapsing:
        # n! T = sum over (j_1..j_r), j_t <= c_t, of (-1)^(n - sum j)
        #        prod binom(c_t, j_t) * (sum_t j_t p_t)^(diag n)
        total = {}
        ranges = [range(c + 1) for _, c in components]
        for js in itertools.product(*ranges):
            if sum(js) == 0:
                continue
            combo = {}
            weight = (-1.0) ** (n - sum(js))
            for (p, c), j in zip(components, js):
                weight *= math.comb(c, j)
                if j:
                    combo = _poly_add(combo, _poly_scale(p, float(j)))
            total = _pp_add(total, _pp_scale(self.diagonal(n, combo), weight))
        pp = _pp_scale(total, 1.0 / math.factorial(n))
        self._elem_memo[key] = pp
        return pp

    def kernel_functional(self, n, tensor):
        """The degree-n kernel applied to a symmetric tensor, as an evaluable
        polynomial in pairings."""
        if tensor.degree != n:
            raise UsageError("tensor degree does not match the kernel degree")
        pp = {}
        for coeff, fields_tuple in tensor.terms:
            groups = {}
            for f in fields_tuple:
                b = self.base_index(f)
                groups[b] = groups.get(b, 0) + 1
            comps = tuple(({((b, 1),): 1.0}, c) for b, c in sorted(groups.items()))
            pp = _pp_add(pp, _pp_scale(self.elementary_multiset(comps), coeff))
        return PairingFunctional(self, pp)


# ---------------------------------------------------------------------------
# tensors and chaos vectors
# ---------------------------------------------------------------------------


class SymmetricTensor:
    """Finite combination of elementary symmetric products of test functions."""

    def __init__(self, degree, terms):
        self.degree = int(degree)
        self.terms = []
        for coeff, fields_tuple in terms:
            fields_tuple = tuple(fields_tuple)
            if len(fields_tuple) != self.degree:
                raise UsageError("elementary term length must equal the tensor degree")
            if coeff != 0.0:
                self.terms.append((float(coeff), fields_tuple))

    @classmethod
    def diagonal(cls, phi, n, coeff=1.0):
        return cls(n, [(coeff, (phi,) * n)])

    @classmethod
    def scalar(cls, c):
        return cls(0, [(float(c), ())])

    def scaled(self, c):
        return SymmetricTensor(self.degree, [(c * w, fs) for w, fs in self.terms])

    def prepend(self, phi):
        """Creation on the tensor side: phi sym this."""
        return SymmetricTensor(self.degree + 1, [(w, (phi,) + fs) for w, fs in self.terms])


class ChaosVector:
    """Finite sequence of symmetric tensors, one per degree."""

    def __init__(self, tensors):
        self.tensors = {}
        for t in tensors:
            if t.degree in self.tensors:
                raise UsageError("one tensor per degree")
            self.tensors[t.degree] = t

    def degrees(self):
        return sorted(self.tensors)


def exp_vector(phi, max_degree):
    """Truncated exponential vector: degree-n component phi^n / n!."""
    return ChaosVector(
        [SymmetricTensor.scalar(1.0)]
        + [SymmetricTensor.diagonal(phi, n, 1.0 / math.factorial(n)) for n in range(1, max_degree + 1)]
    )


# ---------------------------------------------------------------------------
# evaluation of pairing polynomials
# ---------------------------------------------------------------------------

_batch_cache: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


class PairingFunctional:
    """Configuration functional that is a polynomial in pairings of pointwise
    monomials over the context's base fields."""

    def __init__(self, context, ppoly):
        self.context = context
        self.ppoly = dict(ppoly)

    def _monos(self):
        out = set()
        for term in self.ppoly:
            for mono, _ in term:
                out.add(mono)
        return sorted(out)

    def _eval(self, pairings):
        out = 0.0
        for term, coeff in self.ppoly.items():
            acc = coeff
            for mono, p in term:
                v = pairings[mono]
                acc = acc * (v**p if p != 1 else v)
            out = out + acc
        return out

    def value(self, omega):
        pairings = {}
        for mono in self._monos():
            if len(omega) == 0:
                pairings[mono] = 0.0
            else:
                pairings[mono] = float(
                    np.sum(self.context.mono_values(mono, omega.points, omega.marks))
                )
        return float(self._eval(pairings))

    def batch_values(self, batch):
        table = _batch_cache.setdefault(batch, {})
        pairings = {}
        for mono in self._monos():
            key = (id(self.context), mono)
            arr = table.get(key)
            if arr is None:
                if batch.points.shape[0]:
                    vals = self.context.mono_values(mono, batch.points, batch.marks)
                else:
                    vals = np.zeros(0)
                arr = batch.segment_sum(vals)
                table[key] = arr
            pairings[mono] = arr
        out = self._eval(pairings)
        if np.isscalar(out):
            out = np.full(batch.n_samples, float(out))
        return out

    def values_with_point_shift(self, omega, xs, ms):
        base = {}
        for mono in self._monos():
            if len(omega) == 0:
                base[mono] = 0.0
            else:
                base[mono] = float(
                    np.sum(self.context.mono_values(mono, omega.points, omega.marks))
                )
        shifted = {
            mono: base[mono] + self.context.mono_values(mono, xs, ms) for mono in base
        }
        return self._eval(shifted)


def charlier(context, n, tensor, omega):
    """Value of the degree-n kernel on a symmetric tensor at a configuration."""
    return context.kernel_functional(n, tensor).value(omega)


# ---------------------------------------------------------------------------
# Poisson exponentials
# ---------------------------------------------------------------------------


class PoissonExponential:
    """Centered exponential e(phi; w) = exp(<log(1+phi), w> - <phi>).

    Requires phi > -1 on its support; checked on the quadrature grid at
    construction and at every evaluated point.
    """

    def __init__(self, phi, model, mean=None):
        self.phi = phi
        self.model = model
        self._check_domain()
        self.mean = model.expectation(phi) if mean is None else mean

    def _check_domain(self):
        nodes, _ = self.model.mark_rule()
        lo, hi = self.model.window.lows, self.model.window.highs
        xs = np.linspace(lo, hi, 101)
        vals = self.phi.value(xs[:, None, :], nodes[None, :, :])
        if np.min(vals) <= -1.0:
            raise DomainError("exponential argument must stay above -1 on its support")

    def _log_terms(self, points, marks):
        v = self.phi.value(points, marks)
        if np.any(v <= -1.0):
            raise DomainError("exponential argument hit -1 at a configuration point")
        return np.log1p(v)

    def value(self, omega):
        if len(omega) == 0:
            return float(np.exp(-self.mean))
        s = float(np.sum(self._log_terms(omega.points, omega.marks)))
        return float(np.exp(s - self.mean))

    def batch_values(self, batch):
        if batch.points.shape[0]:
            logs = self._log_terms(batch.points, batch.marks)
        else:
            logs = np.zeros(0)
        return np.exp(batch.segment_sum(logs) - self.mean)

    def values_with_point_shift(self, omega, xs, ms):
        base = 0.0
        if len(omega):
            base = float(np.sum(self._log_terms(omega.points, omega.marks)))
        return np.exp(base + self._log_terms(xs, ms) - self.mean)


class ProductFunctional:
    """Pointwise product of configuration functionals (shared sample slots)."""

    def __init__(self, *parts):
        self.parts = parts

    def value(self, omega):
        out = 1.0
        for p in self.parts:
            out *= p.value(omega)
        return out

    def batch_values(self, batch):
        out = None
        for p in self.parts:
            v = np.asarray(p.batch_values(batch), dtype=float)
            out = v if out is None else out * v
        return out


# ---------------------------------------------------------------------------
# add-one-point operator and Fock pairings
# ---------------------------------------------------------------------------


def annihilation_value(phi, F, model, omega, tol=1e-9):
    """Integral over the driving measure of (F(w + point) - F(w)) phi(point).

    F may expose values_with_point_shift for vectorized add-one-point
    evaluation (kernels, exponentials, cylinder functionals all do); plain
    callables fall back to configuration rebuilding.
    """
    box = getattr(phi, "support_box", None)
    f0 = F.value(omega) if hasattr(F, "value") else F(omega)
    if hasattr(F, "values_with_point_shift"):
        def integrand(x, m):
            return (F.values_with_point_shift(omega, x, m) - f0) * phi.value(x, m)
    else:
        def integrand(x, m):
            eval_f = F.value if hasattr(F, "value") else F
            vals = np.array([eval_f(omega.with_point(x, mi)) for mi in np.atleast_2d(m)])
            return (vals - f0) * phi.value(x, m)

    return model.expectation(integrand, tol=tol, support_box=box)


def permanent(mat):
    mat = np.asarray(mat, dtype=float)
    n = mat.shape[0]
    if n == 0:
        return 1.0
    total = 0.0
    for perm in itertools.permutations(range(n)):
        p = 1.0
        for i, j in enumerate(perm):
            p *= mat[i, j]
        total += p
    return total


def fock_inner(context, A, B):
    """Fock-side inner product of two chaos vectors: degree components pair
    through permanents of mean-measure Gram matrices, with the factorial
    degree weight; the convention makes the diagonal norm of phi^n equal
    (phi, phi)^n before the weight."""
    total = 0.0
    for n in set(A.degrees()) & set(B.degrees()):
        ta, tb = A.tensors[n], B.tensors[n]
        for ca, fa in ta.terms:
            for cb, fb in tb.terms:
                gram = np.array([[context.inner(f, g) for g in fb] for f in fa]).reshape(n, n)
                total += ca * cb * permanent(gram)
    return total


# ---------------------------------------------------------------------------
# heat semigroup via the eigenbasis of the one-particle operator
# ---------------------------------------------------------------------------


class HeatKernelModel:
    """Eigen data of the one-particle Dirichlet operator for the scenario
    with Gaussian base weight and uniform circle marks: Hermite polynomials
    in the base coordinate times circle harmonics in the mark, with
    eigenvalue (n, k) -> n + k^2.  The semigroup acts diagonally here."""

    def __init__(self, model):
        if model.marks.name != "circle" or model.dim != 1:
            raise UsageError("heat kernel model needs the circle-mark 1-d scenario")
        self.model = model
        self._fields = {}

    def eigenvalue(self, n, k):
        return float(n + k * k)

    def eigenfunction(self, n, k, kind="cos"):
        key = (n, k, kind)
        f = self._fields.get(key)
        if f is None:
            coeffs = fl.hermite_coeffs(n)
            herm = fl.XPoly(1, {(i,): c for i, c in enumerate(coeffs)})
            trig = fl.CircleTrig({(k, 0 if kind == "cos" else 1): 1.0})
            f = fl.mul_fields(herm, trig)
            self._fields[key] = f
        return f


class EigenExpansion:
    """Finite expansion in the heat-kernel eigenbasis: {(n, k, kind): coeff}."""

    def __init__(self, coeffs):
        self.coeffs = {k: float(v) for k, v in coeffs.items() if v != 0.0}
        for n, k, kind in self.coeffs:
            if kind not in ("cos", "sin") or (k == 0 and kind == "sin"):
                raise UsageError(f"bad eigen index {(n, k, kind)}")

    def damped(self, hk, t):
        return EigenExpansion(
            {
                key: c * math.exp(-t * hk.eigenvalue(key[0], key[1]))
                for key, c in self.coeffs.items()
            }
        )

    def to_field(self, hk):
        return fl.add_fields(
            *[fl.scale_field(c, hk.eigenfunction(*key)) for key, c in self.coeffs.items()]
        )

    def triples(self):
        """(n, k, coefficient) report rows; sin components flag k negative."""
        out = []
        for (n, k, kind), c in sorted(self.coeffs.items()):
            out.append((n, -k if kind == "sin" else k, c))
        return out


def semigroup_apply(hk, t, expansion):
    """Heat-evolved exponential functional.

    Applies the semigroup to exp(<log(1 + phi), .>) by damping the eigen
    coefficients: the result is exp(<log(1 + phi_t), .> - <phi_t - phi>),
    evaluated with the same centered machinery (a Poisson exponential times
    the constant exp(<phi>)).  At t = 0 the damping is the identity and the
    correction vanishes exactly.
    """
    damped = expansion.damped(hk, t)
    phi_t = damped.to_field(hk)
    mean_t = hk.model.expectation(phi_t) if damped.coeffs else 0.0
    mean_0 = hk.model.expectation(expansion.to_field(hk)) if expansion.coeffs else 0.0
    core = PoissonExponential(phi_t, hk.model, mean=mean_t)
    # exp(<log(1+phi_t), .>) - <phi_t - phi>) = e(phi_t; .) * exp(<phi>)
    return ProductFunctional(core, _ConstFunctional(math.exp(mean_0))), damped


class _ConstFunctional:
    def __init__(self, c):
        self.c = float(c)

    def value(self, omega):
        return self.c

    def batch_values(self, batch):
        return np.full(batch.n_samples, self.c)


def semigroup_mc_check(hk, t, exp_phi, exp_psi, n_samples, seed, block_size=4096):
    """Monte Carlo check that the semigroup acts as the second quantization on
    exponential vectors: with both slots centered, the mean of
    (T(t) e(phi))(w) * e(psi; w) must equal exp((phi_t, psi)).

    Returns (residual, standard error, estimate, target).
    """
    from .sampling import mc_estimate

    model = hk.model
    damped = exp_phi.damped(hk, t)
    phi_t = damped.to_field(hk)
    psi = exp_psi.to_field(hk)
    lhs = ProductFunctional(
        PoissonExponential(phi_t, model), PoissonExponential(psi, model)
    )
    target = math.exp(model.inner(phi_t, psi))
    res = mc_estimate(lhs, model, n_samples, seed, block_size=block_size)
    return abs(res.mean - target), res.se, res.mean, target
