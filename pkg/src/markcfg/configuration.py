"""Finite marked configurations: sets of (base point, mark) pairs with
pairwise distinct base points, plus their elementary functionals and a flat
batched layout used by the Monte Carlo drivers."""

from __future__ import annotations

import csv

import numpy as np

from .errors import UsageError

__all__ = [
    "MarkedConfiguration",
    "ConfigBatch",
    "pairing",
    "count",
    "restrict",
    "write_csv",
    "read_csv",
]


class MarkedConfiguration:
    """Immutable finite set of (x, m) pairs with distinct base points.

    Points are kept sorted lexicographically by base coordinates so that
    iteration order, sums, and serialized output are deterministic.
    """

    __slots__ = ("points", "marks")

    def __init__(self, points, marks, _presorted=False):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        marks = np.atleast_2d(np.asarray(marks, dtype=float))
        if points.size == 0:
            points = points.reshape(0, points.shape[-1] if points.ndim > 1 else 1)
            marks = marks.reshape(0, marks.shape[-1] if marks.ndim > 1 else 1)
        if len(points) != len(marks):
            raise UsageError("points and marks must have equal length")
        if not _presorted and len(points) > 1:
            order = np.lexsort(points.T[::-1])
            points = points[order]
            marks = marks[order]
        if len(points) > 1:
            dup = np.all(points[1:] == points[:-1], axis=1)
            if np.any(dup):
                i = int(np.argmax(dup))
                raise UsageError(
                    f"duplicate base point in configuration: {points[i + 1].tolist()}"
                )
        self.points = points
        self.marks = marks
        self.points.setflags(write=False)
        self.marks.setflags(write=False)

    @classmethod
    def empty(cls, dim, mark_dim):
        return cls(np.zeros((0, dim)), np.zeros((0, mark_dim)))

    def __len__(self):
        return self.points.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self.points[i], self.marks[i]

    def __eq__(self, other):
        return (
            isinstance(other, MarkedConfiguration)
            and self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.marks, other.marks)
        )

    def __repr__(self):
        return f"MarkedConfiguration({len(self)} points, dim={self.points.shape[1]})"

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def mark_dim(self):
        return self.marks.shape[1]

    def with_point(self, x, m):
        """Configuration with one extra point (used by the add-one-point
        difference operator)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        m = np.atleast_1d(np.asarray(m, dtype=float))
        return MarkedConfiguration(
            np.vstack([self.points, x[None, :]]), np.vstack([self.marks, m[None, :]])
        )


def pairing(f, omega):
    """Sum of f over the points of the configuration (finitely many terms)."""
    if len(omega) == 0:
        return 0.0
    vals = f(omega.points, omega.marks) if callable(f) else f.value(omega.points, omega.marks)
    return float(np.sum(vals))


def count(omega, window, mark_predicate=None):
    """Number of configuration points in a base window, optionally filtered
    by a predicate on the marks."""
    if len(omega) == 0:
        return 0
    keep = window.contains(omega.points)
    if mark_predicate is not None:
        keep = keep & np.asarray(mark_predicate(omega.marks), dtype=bool)
    return int(np.sum(keep))


def restrict(omega, window):
    """Sub-configuration of points whose base coordinate lies in the window."""
    if len(omega) == 0:
        return omega
    keep = window.contains(omega.points)
    return MarkedConfiguration(omega.points[keep], omega.marks[keep], _presorted=True)


class ConfigBatch:
    """Flat storage for many configurations: all points concatenated, with
    offsets delimiting each sample.  This is the layout the vectorized Monte
    Carlo evaluators consume."""

    __slots__ = ("points", "marks", "offsets", "__weakref__")

    def __init__(self, points, marks, offsets):
        self.points = np.asarray(points, dtype=float)
        self.marks = np.asarray(marks, dtype=float)
        self.offsets = np.asarray(offsets, dtype=np.int64)

    @property
    def n_samples(self):
        return self.offsets.shape[0] - 1

    @property
    def counts(self):
        return np.diff(self.offsets)

    def segment_sum(self, values):
        """Per-sample sums of a per-point array (cumsum based so that empty
        segments come out as exact zeros)."""
        c = np.concatenate([[0.0], np.cumsum(values)])
        return c[self.offsets[1:]] - c[self.offsets[:-1]]

    def segment_prod(self, values):
        """Per-sample products of a per-point array (empty product is 1)."""
        c = np.concatenate([[0.0], np.cumsum(np.log(values))])
        return np.exp(c[self.offsets[1:]] - c[self.offsets[:-1]])

    def config(self, i):
        lo, hi = self.offsets[i], self.offsets[i + 1]
        return MarkedConfiguration(self.points[lo:hi], self.marks[lo:hi])

    def __iter__(self):
        for i in range(self.n_samples):
            yield self.config(i)

    @classmethod
    def from_configs(cls, configs):
        counts = [len(c) for c in configs]
        offsets = np.concatenate([[0], np.cumsum(counts)])
        if sum(counts) == 0:
            d = configs[0].dim if configs else 1
            md = configs[0].mark_dim if configs else 1
            return cls(np.zeros((0, d)), np.zeros((0, md)), offsets)
        points = np.vstack([c.points for c in configs if len(c)])
        marks = np.vstack([c.marks for c in configs if len(c)])
        return cls(points, marks, offsets)


_CSV_NOTE = "# one row per point: base coordinates x0..x{d-1}, mark coordinates m0..m{k-1}"


def write_csv(omega, path):
    """One CSV row per configuration point; header names the coordinates."""
    d, k = omega.dim, omega.mark_dim
    header = [f"x{i}" for i in range(d)] + [f"m{j}" for j in range(k)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for x, m in omega:
            writer.writerow([repr(float(v)) for v in x] + [repr(float(v)) for v in m])


def read_csv(path):
    """Inverse of :func:`write_csv`; dimensions are recovered from the header."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = sum(1 for h in header if h.startswith("x"))
        k = len(header) - d
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        return MarkedConfiguration.empty(d, k)
    arr = np.asarray(rows)
    return MarkedConfiguration(arr[:, :d], arr[:, d:])
