"""Named scenarios wiring a mark space, window, base density, and mark family
together, plus factories for randomized test objects (bump fields, currents,
test functions, cylinder functionals) drawn inside a scenario's window.

Scenario names accepted by the harness:

- ``circle-mass2``: constant base density 2 on [0, 1], uniform circle marks
  (window mass is exactly 2).
- ``dilation-gamma``: constant base density 2 on [0, 1], Gamma(3, 1) marks on
  the positive ray.
- ``sphere-vmf``: constant base density 2 on [0, 1], von Mises-Fisher marks.
- ``gauss-hermite``: Gaussian base weight on [-8, 8] with uniform circle
  marks; the scenario whose one-particle operator has the Hermite-times-
  harmonics eigenbasis used by the semigroup experiments.
"""

from __future__ import annotations

import numpy as np

from . import fields as fl
from .calculus import CylinderFunction, Direction
from .errors import ConfigError
from .flows import BumpCurrent, BumpVectorField, Window, PROFILE_LIPSCHITZ
from .group_action import GroupElementA
from .intensity import (
    CircleUniform,
    CircleVonMises,
    ConstantDensity,
    GammaMarks,
    GaussianDensity,
    IntensityModel,
    SphereVonMisesFisher,
)
from .marks import get_marks

__all__ = [
    "SCENARIO_NAMES",
    "build_scenario",
    "random_bump_field",
    "random_current",
    "random_direction",
    "random_mark_field",
    "random_test_field",
    "random_cylinder",
    "random_group_element",
]


def _pop(params, key, default):
    return params.pop(key, default)


def build_scenario(name, params=None):
    """Construct a named scenario; unknown parameter keys are rejected."""
    params = dict(params or {})
    if name == "circle-mass2":
        level = float(_pop(params, "rho_level", 2.0))
        lo, hi = _pop(params, "window", (0.0, 1.0))
        model = IntensityModel(
            get_marks("circle"), Window([lo], [hi]), ConstantDensity(level), CircleUniform(), name
        )
    elif name == "dilation-gamma":
        level = float(_pop(params, "rho_level", 2.0))
        shape = float(_pop(params, "gamma_shape", 3.0))
        rate = float(_pop(params, "gamma_rate", 1.0))
        lo, hi = _pop(params, "window", (0.0, 1.0))
        model = IntensityModel(
            get_marks("dilation"),
            Window([lo], [hi]),
            ConstantDensity(level),
            GammaMarks(shape, rate),
            name,
        )
    elif name == "sphere-vmf":
        level = float(_pop(params, "rho_level", 2.0))
        kappa = float(_pop(params, "kappa", 2.0))
        lo, hi = _pop(params, "window", (0.0, 1.0))
        model = IntensityModel(
            get_marks("sphere"),
            Window([lo], [hi]),
            ConstantDensity(level),
            SphereVonMisesFisher([0.0, 0.0, 1.0], kappa),
            name,
        )
    elif name == "gauss-hermite":
        lo, hi = _pop(params, "window", (-8.0, 8.0))
        model = IntensityModel(
            get_marks("circle"), Window([lo], [hi]), GaussianDensity(), CircleUniform(), name
        )
    elif name == "circle-vonmises":
        # drifting mean direction: exercises the position derivative of the
        # mark density in the drift terms
        level = float(_pop(params, "rho_level", 2.0))
        kappa = float(_pop(params, "kappa", 1.5))
        slope = float(_pop(params, "mean_slope", 2.0))
        lo, hi = _pop(params, "window", (0.0, 1.0))
        model = IntensityModel(
            get_marks("circle"),
            Window([lo], [hi]),
            ConstantDensity(level),
            CircleVonMises(0.7, kappa, slope=[slope]),
            name,
        )
    else:
        raise ConfigError(f"unknown scenario {name!r}; expected one of {SCENARIO_NAMES}")
    if params:
        raise ConfigError(f"unknown scenario parameters: {sorted(params)}")
    return model


SCENARIO_NAMES = (
    "circle-mass2",
    "dilation-gamma",
    "sphere-vmf",
    "gauss-hermite",
    "circle-vonmises",
)


# ---------------------------------------------------------------------------
# randomized test objects
# ---------------------------------------------------------------------------


def _random_ball(model, rng, rel_radius=(0.10, 0.22), near=None):
    """Ball strictly inside the window; with ``near`` the center is drawn
    close to a given point so supports of related test objects overlap."""
    w = model.window
    size = float(np.min(w.highs - w.lows))
    radius = size * rng.uniform(*rel_radius)
    margin = radius + 0.02 * size
    lo, hi = w.lows + margin, w.highs - margin
    if near is None:
        center = rng.uniform(lo, hi)
    else:
        center = np.clip(near + rng.uniform(-0.5, 0.5, model.dim) * radius, lo, hi)
    return center, radius


def random_bump_field(model, rng, strength=0.5, near=None):
    """Bump base field supported strictly inside the window, with amplitude
    safely under the diffeomorphism cap."""
    center, radius = _random_ball(model, rng, near=near)
    direction = rng.standard_normal(model.dim)
    direction /= np.linalg.norm(direction)
    amp = direction * (strength * radius / PROFILE_LIPSCHITZ) * rng.uniform(0.3, 1.0)
    return BumpVectorField(center, radius, amp)


def random_current(model, rng, scale=0.8, near=None):
    center, radius = _random_ball(model, rng, near=near)
    amp = rng.uniform(-scale, scale, size=model.algebra_dim)
    return BumpCurrent(center, radius, amp)


def random_direction(model, rng, pure=None, near=None):
    v = None if pure == "current" else random_bump_field(model, rng, near=near)
    u = None if pure == "diffeo" else random_current(model, rng, near=near)
    return Direction.from_bumps(model.dim, model.algebra_dim, v=v, u=u)


def random_group_element(model, rng, pure=None, time=1.0, near=None):
    v = None if pure == "current" else random_bump_field(model, rng, near=near)
    u = None if pure == "diffeo" else random_current(model, rng, near=near)
    return GroupElementA(model.marks, v=v, u=u, time=time)


def random_mark_field(model, rng, scale=1.0):
    """Smooth bounded function of the mark alone, in the scenario's atom
    family (trig polynomial, decaying ray terms, low degree sphere
    polynomial)."""
    name = model.marks.name
    if name == "circle":
        terms = {}
        for k in range(0, 3):
            for s in (0, 1):
                if k == 0 and s == 1:
                    continue
                if rng.uniform() < 0.7:
                    terms[(k, s)] = scale * rng.uniform(-1.0, 1.0)
        terms.setdefault((1, 0), scale * rng.uniform(0.2, 1.0))
        return fl.CircleTrig(terms)
    if name == "dilation":
        terms = {(0.0, 0.0): scale * rng.uniform(-0.5, 0.5)}
        for p in (1.0, 2.0):
            if rng.uniform() < 0.8:
                terms[(p, -rng.uniform(0.5, 1.0))] = scale * rng.uniform(-1.0, 1.0)
        return fl.RayPolyExp(terms)
    if name == "sphere":
        coeffs = {(0, 0, 0): scale * rng.uniform(-0.3, 0.3)}
        for _ in range(3):
            e = tuple(rng.integers(0, 2, size=3))
            if sum(e) > 0:
                coeffs[e] = coeffs.get(e, 0.0) + scale * rng.uniform(-1.0, 1.0)
        return fl.SpherePoly(coeffs)
    raise ConfigError(f"no mark field family for {name!r}")


def random_test_field(model, rng, scale=1.0, near=None):
    """Compactly supported smooth test function on window x marks: a base
    bump atom times a mark atom."""
    center, radius = _random_ball(model, rng, rel_radius=(0.12, 0.3), near=near)
    base = fl.XBump(center, radius, {(0,) * model.dim: scale * rng.uniform(0.5, 2.0)})
    return fl.mul_fields(base, random_mark_field(model, rng))


def _random_outer(rng, n, bounded):
    lin = fl.outer_add(
        fl.OuterConst(rng.uniform(-0.3, 0.3)),
        *[fl.outer_mul(fl.OuterConst(rng.uniform(-1.0, 1.0)), fl.OuterVar(j)) for j in range(n)],
    )
    kind = rng.integers(0, 3 if bounded else 4)
    if kind == 0:
        return fl.outer_fun("sin", lin)
    if kind == 1:
        return fl.outer_fun("tanh", lin)
    if kind == 2:
        # 1 / (1 + (linear)^2), smooth and bounded with all derivatives bounded
        return fl.outer_pow(fl.outer_add(fl.OuterConst(1.0), fl.outer_pow(lin, 2)), -1)
    return fl.outer_add(fl.outer_pow(lin, 2), lin)


def random_cylinder(model, rng, n_tests=2, bounded=True, near=None):
    tests = [random_test_field(model, rng, near=near)]
    anchor = tests[0].support_box
    center = None if anchor is None else 0.5 * (anchor[0] + anchor[1])
    tests += [random_test_field(model, rng, near=center) for _ in range(n_tests - 1)]
    return CylinderFunction(tests, _random_outer(rng, n_tests, bounded))
