"""The transformation group acting on marked configurations.

A basic element pairs a base diffeomorphism (the time-t flow of a compactly
supported bump field) with a smooth current (a compactly supported algebra
valued bump exponentiated pointwise into the group).  It moves a marked point
by first flowing the base coordinate and then rotating/scaling the mark by
the current evaluated at the arrived position.  Compositions and inverses are
provided as wrapper elements so group identities can be tested numerically.

The image of the driving measure under an element has an explicit density:
a ratio of the product density at the preimage pair over its value at the
point, times the translate density of the reference mark measure, times the
Jacobian determinant of the inverse base map.  Multiplying that density over
the points of a configuration gives the density of the transformed point
process law; points outside the element's support contribute exactly one.
The direction conventions are pinned by the change-of-variables identity
E[F(a(omega))] = E[F(omega) * density(a, omega)], which the test suite checks
by quadrature and Monte Carlo.
"""

from __future__ import annotations

import numpy as np

from .configuration import ConfigBatch, MarkedConfiguration
from .errors import UsageError
from .flows import flow

__all__ = [
    "GroupElementA",
    "compose",
    "inverse_element",
    "act_point",
    "act_config",
    "act_batch",
    "rn_density_point",
    "rn_density_config",
    "rn_density_batch",
]


class GroupElementA:
    """Element (psi, eta): psi the time-``time`` flow of ``v``, eta the
    pointwise group exponential of ``time * u``; either part may be absent."""

    def __init__(self, marks, v=None, u=None, time=1.0):
        self.marks = marks
        self.v = v
        self.u = u
        self.time = float(time)
        if v is None and u is None:
            pass  # the identity element is allowed
        if u is not None and u.n_components != marks.algebra_dim:
            raise UsageError("current amplitude does not match the algebra dimension")

    def support_mask(self, pts):
        mask = np.zeros(pts.shape[0], dtype=bool)
        if self.v is not None and self.time != 0.0:
            mask |= self.v.in_support(pts)
        if self.u is not None and self.time != 0.0:
            mask |= self.u.in_support(pts)
        return mask

    def forward(self, pts):
        if self.v is None or self.time == 0.0:
            return pts.copy()
        return flow(self.v, self.time, pts).endpoint

    def forward_with_jacdet(self, pts):
        if self.v is None or self.time == 0.0:
            return pts.copy(), np.ones(pts.shape[0])
        res = flow(self.v, self.time, pts)
        return res.endpoint, np.linalg.det(res.jacobian)

    def inverse(self, pts):
        if self.v is None or self.time == 0.0:
            return pts.copy()
        return flow(self.v, -self.time, pts).endpoint

    def inverse_with_jacdet(self, pts):
        if self.v is None or self.time == 0.0:
            return pts.copy(), np.ones(pts.shape[0])
        res = flow(self.v, -self.time, pts)
        return res.endpoint, np.linalg.det(res.jacobian)

    def eta_batch(self, pts):
        if self.u is None or self.time == 0.0:
            return self.marks.identity_batch(pts.shape[0])
        return self.marks.exp_batch(self.u.value(pts), t=self.time)


class ComposedElement:
    """Product a1 * a2, acting as a1 after a2."""

    def __init__(self, a1, a2):
        if a1.marks is not a2.marks and type(a1.marks) is not type(a2.marks):
            raise UsageError("cannot compose elements over different mark spaces")
        self.a1 = a1
        self.a2 = a2
        self.marks = a1.marks

    def support_mask(self, pts):
        return self.a1.support_mask(pts) | self.a2.support_mask(pts)

    def forward(self, pts):
        return self.a1.forward(self.a2.forward(pts))

    def forward_with_jacdet(self, pts):
        mid, d2 = self.a2.forward_with_jacdet(pts)
        end, d1 = self.a1.forward_with_jacdet(mid)
        return end, d1 * d2

    def inverse(self, pts):
        return self.a2.inverse(self.a1.inverse(pts))

    def inverse_with_jacdet(self, pts):
        mid, d1 = self.a1.inverse_with_jacdet(pts)
        pre, d2 = self.a2.inverse_with_jacdet(mid)
        return pre, d1 * d2

    def eta_batch(self, pts):
        # current of the product: eta1(y) * eta2(psi1^{-1}(y))
        g1 = self.a1.eta_batch(pts)
        g2 = self.a2.eta_batch(self.a1.inverse(pts))
        return self.marks.compose_batch(g1, g2)


class InverseElement:
    """Group inverse of an element: (psi, eta)^{-1} = (psi^{-1}, eta^{-1} o psi)."""

    def __init__(self, a):
        self.a = a
        self.marks = a.marks

    def support_mask(self, pts):
        return self.a.support_mask(pts)

    def forward(self, pts):
        return self.a.inverse(pts)

    def forward_with_jacdet(self, pts):
        return self.a.inverse_with_jacdet(pts)

    def inverse(self, pts):
        return self.a.forward(pts)

    def inverse_with_jacdet(self, pts):
        return self.a.forward_with_jacdet(pts)

    def eta_batch(self, pts):
        return self.marks.inverse_batch(self.a.eta_batch(self.a.forward(pts)))


def compose(a1, a2):
    return ComposedElement(a1, a2)


def inverse_element(a):
    return InverseElement(a)


# ---------------------------------------------------------------------------
# actions
# ---------------------------------------------------------------------------


def act_point(a, x, m):
    """Image of one marked point: (psi(x), eta(psi(x)) acting on m)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = np.atleast_1d(np.asarray(m, dtype=float))
    pts = x[None, :]
    if not bool(a.support_mask(pts)[0]):
        return x.copy(), m.copy()
    y = a.forward(pts)
    g = a.eta_batch(y)
    m_new = a.marks.act_batch(g, m[None, :])[0]
    return y[0], m_new


def _transform_points(a, points, marks_arr):
    """Pointwise image of flat point/mark arrays, identity outside support."""
    out_p = points.copy()
    out_m = marks_arr.copy()
    mask = a.support_mask(points)
    if np.any(mask):
        y = a.forward(points[mask])
        g = a.eta_batch(y)
        out_p[mask] = y
        out_m[mask] = a.marks.act_batch(g, marks_arr[mask])
    return out_p, out_m


def act_config(a, omega):
    """Pointwise image of a configuration; injectivity of the base map keeps
    base points distinct."""
    if len(omega) == 0:
        return omega
    p, m = _transform_points(a, omega.points, omega.marks)
    return MarkedConfiguration(p, m)


def act_batch(a, batch):
    p, m = _transform_points(a, batch.points, batch.marks)
    return ConfigBatch(p, m, batch.offsets)


# ---------------------------------------------------------------------------
# image-measure densities
# ---------------------------------------------------------------------------


def _point_densities(a, model, points, marks_arr):
    """Per-point density of the transformed driving measure against the
    original one; exactly 1 off the support of the element."""
    out = np.ones(points.shape[0])
    mask = a.support_mask(points)
    if not np.any(mask):
        return out
    pts = points[mask]
    mk = marks_arr[mask]
    pre, detinv = a.inverse_with_jacdet(pts)
    g = a.eta_batch(pts)
    m_pre = a.marks.act_batch(a.marks.inverse_batch(g), mk)
    ratio = model.q(pre, m_pre) / model.q(pts, mk)
    ref = a.marks.reference_density_batch(g, mk)
    out[mask] = ratio * ref * detinv
    return out


def rn_density_point(a, model, x, m):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = np.atleast_1d(np.asarray(m, dtype=float))
    return float(_point_densities(a, model, x[None, :], m[None, :])[0])


def rn_density_config(a, model, omega):
    """Density of the transformed point process law at a configuration: the
    product of per-point densities (finitely many factors differ from 1)."""
    if len(omega) == 0:
        return 1.0
    vals = _point_densities(a, model, omega.points, omega.marks)
    return float(np.prod(vals))


def rn_density_batch(a, model, batch):
    vals = _point_densities(a, model, batch.points, batch.marks)
    return batch.segment_prod(vals)
