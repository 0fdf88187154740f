"""Mark spaces carried by transitive smooth group actions, with the calculus
each model needs: the action, the exponential map, derivative generators, the
density of translated reference measure, and a fixed quadrature rule for the
reference measure.

Three concrete models are provided:

- ``CircleMarks``: angles in [0, 2*pi) rotated by the circle group; the
  reference measure (Lebesgue on the angle) is invariant.
- ``RayMarks``: positive reals scaled by the multiplicative group; Lebesgue
  measure on the ray is only quasiinvariant, with translate density 1/g.
- ``SphereMarks``: unit vectors in R^3 rotated by the rotation group; the
  surface measure is invariant.

Marks are passed around as 1-d arrays of length ``mark_dim`` (batched:
``(n, mark_dim)``), algebra vectors as arrays of length ``algebra_dim``.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import UsageError

__all__ = ["MarkSpace", "CircleMarks", "RayMarks", "SphereMarks", "get_marks"]

TWO_PI = 2.0 * np.pi


class MarkSpace:
    name: str
    mark_dim: int
    algebra_dim: int

    # -- group structure ----------------------------------------------------
    def identity(self):
        raise NotImplementedError

    def compose(self, g1, g2):
        raise NotImplementedError

    def inverse(self, g):
        raise NotImplementedError

    def exp(self, u, t=1.0):
        """Group element exp(t*u) for an algebra vector u."""
        raise NotImplementedError

    def exp_batch(self, u, t=1.0):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return np.array([self.exp(row, t) for row in u])

    def compose_batch(self, g1, g2):
        return np.array([self.compose(a, b) for a, b in zip(g1, g2)])

    def inverse_batch(self, g):
        return np.array([self.inverse(a) for a in g])

    def identity_batch(self, n):
        return np.array([self.identity() for _ in range(n)])

    # -- action on marks ----------------------------------------------------
    def act(self, g, m):
        raise NotImplementedError

    def act_batch(self, g, m):
        """Apply a batch of group elements to a batch of marks elementwise."""
        raise NotImplementedError

    def flow_mark(self, u, t, m):
        """Move a mark along the one-parameter motion of algebra vector u."""
        return self.act(self.exp(u, t), m)

    # -- reference measure --------------------------------------------------
    def reference_density(self, g, m):
        """Density at m of the g-translated reference measure against the
        reference measure itself."""
        raise NotImplementedError

    def reference_density_batch(self, g, m):
        return np.array(
            [self.reference_density(gi, mi) for gi, mi in zip(g, np.atleast_2d(m))]
        )

    def grad_reference_identity(self, m=None):
        """Algebra-valued gradient of the translate density in the group slot,
        taken at the identity (constant in m for all three models)."""
        raise NotImplementedError

    def mark_quadrature(self):
        """(nodes, weights) integrating smooth densities against the reference
        measure to near machine precision; nodes shape (K, mark_dim)."""
        raise NotImplementedError

    # -- calculus on mark-only functions --------------------------------------
    def gradient_of(self, field, m):
        """Algebra-valued derivative of a mark-only field at m: component j
        differentiates along the j-th one-parameter motion."""
        x0 = np.zeros(1)
        m = np.atleast_1d(np.asarray(m, dtype=float))
        return np.array([field.dm(j).at(x0, m) for j in range(self.algebra_dim)])

    def laplacian_of(self, field, m):
        """Mark-space Laplacian of a mark-only field at m (generator squares
        plus the reference-measure correction)."""
        from .fields import mark_laplacian

        lap = mark_laplacian(field, self.algebra_dim, self.grad_reference_identity())
        return lap.at(np.zeros(1), np.atleast_1d(np.asarray(m, dtype=float)))

    # -- misc ---------------------------------------------------------------
    def validate_mark(self, m):
        raise NotImplementedError

    def random_mark(self, rng):
        raise NotImplementedError


class CircleMarks(MarkSpace):
    name = "circle"
    mark_dim = 1
    algebra_dim = 1

    def identity(self):
        return 0.0

    def compose(self, g1, g2):
        return float((g1 + g2) % TWO_PI)

    def inverse(self, g):
        return float((-g) % TWO_PI)

    def exp(self, u, t=1.0):
        return float((t * np.asarray(u).reshape(-1)[0]) % TWO_PI)

    def exp_batch(self, u, t=1.0):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return (t * u[:, 0]) % TWO_PI

    def compose_batch(self, g1, g2):
        return (np.asarray(g1) + np.asarray(g2)) % TWO_PI

    def inverse_batch(self, g):
        return (-np.asarray(g)) % TWO_PI

    def identity_batch(self, n):
        return np.zeros(n)

    def act(self, g, m):
        m = np.asarray(m, dtype=float)
        return (m + g) % TWO_PI

    def act_batch(self, g, m):
        return (np.asarray(m, dtype=float) + np.asarray(g)[:, None]) % TWO_PI

    def reference_density(self, g, m):
        return 1.0

    def reference_density_batch(self, g, m):
        return np.ones(len(np.atleast_1d(g)))

    def grad_reference_identity(self, m=None):
        return np.zeros(1)

    def mark_quadrature(self, n=512):
        ang = np.arange(n) * (TWO_PI / n)
        return ang[:, None], np.full(n, TWO_PI / n)

    def validate_mark(self, m):
        m = np.atleast_1d(np.asarray(m, dtype=float))
        if m.shape != (1,) or not (0.0 <= m[0] < TWO_PI):
            raise UsageError(f"circle mark must be an angle in [0, 2*pi); got {m}")
        return m

    def random_mark(self, rng):
        return np.array([rng.uniform(0.0, TWO_PI)])


class RayMarks(MarkSpace):
    name = "dilation"
    mark_dim = 1
    algebra_dim = 1

    def identity(self):
        return 1.0

    def compose(self, g1, g2):
        return float(g1 * g2)

    def inverse(self, g):
        return 1.0 / float(g)

    def exp(self, u, t=1.0):
        return float(np.exp(t * np.asarray(u).reshape(-1)[0]))

    def exp_batch(self, u, t=1.0):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return np.exp(t * u[:, 0])

    def compose_batch(self, g1, g2):
        return np.asarray(g1) * np.asarray(g2)

    def inverse_batch(self, g):
        return 1.0 / np.asarray(g, dtype=float)

    def identity_batch(self, n):
        return np.ones(n)

    def act(self, g, m):
        return g * np.asarray(m, dtype=float)

    def act_batch(self, g, m):
        return np.asarray(g)[:, None] * np.asarray(m, dtype=float)

    def reference_density(self, g, m):
        # image of Lebesgue measure on the ray under m -> g*m has density 1/g
        return 1.0 / float(g)

    def reference_density_batch(self, g, m):
        return 1.0 / np.asarray(g, dtype=float)

    def grad_reference_identity(self, m=None):
        return np.array([-1.0])

    def mark_quadrature(self, cutoff=80.0, panel_nodes=48):
        edges = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, cutoff]
        xs, ws = leggauss(panel_nodes)
        nodes, weights = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            half = 0.5 * (b - a)
            nodes.append(0.5 * (a + b) + half * xs)
            weights.append(half * ws)
        return np.concatenate(nodes)[:, None], np.concatenate(weights)

    def validate_mark(self, m):
        m = np.atleast_1d(np.asarray(m, dtype=float))
        if m.shape != (1,) or not m[0] > 0.0:
            raise UsageError(f"ray mark must be a positive real; got {m}")
        return m

    def random_mark(self, rng):
        return np.array([rng.gamma(2.0, 1.0)])


def _skew(u):
    ux, uy, uz = u
    return np.array([[0.0, -uz, uy], [uz, 0.0, -ux], [-uy, ux, 0.0]])


def rotation_exp(w):
    """Rotation matrix exp of the skew matrix of w (closed form)."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    k = _skew(w)
    if theta < 1e-6:
        # series forms of sin(t)/t and (1-cos t)/t^2, accurate to O(theta^6)
        a = 1.0 - theta**2 / 6.0 + theta**4 / 120.0
        b = 0.5 - theta**2 / 24.0 + theta**4 / 720.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * k + b * (k @ k)


class SphereMarks(MarkSpace):
    name = "sphere"
    mark_dim = 3
    algebra_dim = 3

    def identity(self):
        return np.eye(3)

    def compose(self, g1, g2):
        return np.asarray(g1) @ np.asarray(g2)

    def inverse(self, g):
        return np.asarray(g).T

    def exp(self, u, t=1.0):
        return rotation_exp(t * np.asarray(u, dtype=float))

    def exp_batch(self, u, t=1.0):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return np.stack([rotation_exp(t * row) for row in u])

    def compose_batch(self, g1, g2):
        return np.einsum("nij,njk->nik", np.asarray(g1), np.asarray(g2))

    def inverse_batch(self, g):
        return np.swapaxes(np.asarray(g), -1, -2)

    def identity_batch(self, n):
        return np.broadcast_to(np.eye(3), (n, 3, 3)).copy()

    def act(self, g, m):
        return np.asarray(g) @ np.asarray(m, dtype=float)

    def act_batch(self, g, m):
        return np.einsum("nij,nj->ni", np.asarray(g), np.asarray(m, dtype=float))

    def reference_density(self, g, m):
        return 1.0

    def reference_density_batch(self, g, m):
        return np.ones(len(g))

    def grad_reference_identity(self, m=None):
        return np.zeros(3)

    def mark_quadrature(self, n_polar=48, n_azimuth=96):
        z, wz = leggauss(n_polar)  # z = cos(polar angle) on [-1, 1]
        phi = np.arange(n_azimuth) * (TWO_PI / n_azimuth)
        wphi = TWO_PI / n_azimuth
        zz = np.repeat(z, n_azimuth)
        pp = np.tile(phi, n_polar)
        s = np.sqrt(1.0 - zz**2)
        nodes = np.stack([s * np.cos(pp), s * np.sin(pp), zz], axis=1)
        weights = np.repeat(wz, n_azimuth) * wphi
        return nodes, weights

    def validate_mark(self, m):
        m = np.atleast_1d(np.asarray(m, dtype=float))
        if m.shape != (3,) or abs(np.linalg.norm(m) - 1.0) > 1e-12:
            raise UsageError(f"sphere mark must be a unit 3-vector; got {m}")
        return m

    def validate_group(self, g, tol=1e-10):
        g = np.asarray(g, dtype=float)
        if g.shape != (3, 3):
            raise UsageError("rotation must be a 3x3 matrix")
        if np.max(np.abs(g.T @ g - np.eye(3))) > tol or abs(np.linalg.det(g) - 1.0) > tol:
            raise UsageError("matrix is not a rotation within tolerance")
        return g

    def random_mark(self, rng):
        v = rng.standard_normal(3)
        return v / np.linalg.norm(v)


_REGISTRY = {
    "circle": CircleMarks,
    "dilation": RayMarks,
    "sphere": SphereMarks,
}


def get_marks(name):
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise UsageError(
            f"unknown mark space {name!r}; expected one of {sorted(_REGISTRY)}"
        ) from None
