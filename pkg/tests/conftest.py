"""Shared finite-difference oracles for the exact derivative rules.

The oracles never use the derivative combinators under test: they evaluate
the function itself along small motions and difference numerically, with a
Richardson step-halving pair that also yields the observed convergence
order.
"""

import numpy as np
import pytest


def central_diff(f, h):
    """Central difference of a scalar function of one real variable at 0."""
    return (f(h) - f(-h)) / (2.0 * h)


def second_diff(f, h):
    return (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h)


def richardson_order(f, exact, h0=1e-3, second=False):
    """(extrapolated value, observed order) of a difference quotient.

    The observed order is log2 of the error ratio between steps h0 and h0/2;
    a second-order scheme should report close to 2 (higher when the next
    error term vanishes).
    """
    diff = second_diff if second else central_diff
    d1 = diff(f, h0)
    d2 = diff(f, h0 / 2.0)
    e1, e2 = abs(d1 - exact), abs(d2 - exact)
    if e2 == 0.0:
        return d2, np.inf
    order = np.log2(e1 / e2) if e1 > 0 else np.inf
    extr = (4.0 * d2 - d1) / 3.0
    return extr, order


def assert_derivative_matches(f, exact, h0=1e-3, second=False, atol=1e-8, min_order=1.7):
    """The difference quotient must extrapolate to the exact rule and show
    at least second order convergence (allowing noise slack)."""
    diff = second_diff if second else central_diff
    e2 = abs(diff(f, h0 / 2.0) - exact)
    extr, order = richardson_order(f, exact, h0=h0, second=second)
    scale = max(1.0, abs(exact))
    assert abs(extr - exact) <= atol * scale, (extr, exact)
    # order estimates are meaningless at exact zeros or at rounding level
    if abs(exact) > 1e-7 and e2 > 1e-11 * scale:
        assert order >= min_order, (order, exact)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
