"""Sampling of the marked point process and Monte Carlo estimation.

Randomness contract: the stream for sample ``i`` of a run with seed ``s`` is
the counter-based Philox generator keyed by ``(s, i)``.  Streams are therefore
splittable by construction; estimates depend only on (seed, block size), not
on how many workers or calls produced them.  A run first draws the point
count, then base positions by rejection from the window, then the marks, all
from the sample's own stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .configuration import ConfigBatch, MarkedConfiguration
from .errors import ConfigError, UsageError

__all__ = [
    "SampleStreams",
    "sample_configuration",
    "sample_mixed_configuration",
    "sample_batch",
    "mc_estimate",
    "MCResult",
    "mean_and_se",
]


class SampleStreams:
    """Per-index Philox streams with cheap state reset.

    ``generator(i)`` returns a generator whose output is bit-identical to a
    fresh ``Generator(Philox(key=[seed, i]))`` but without reconstructing the
    generator object for every sample.
    """

    def __init__(self, seed):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise UsageError("seed must fit in an unsigned 64-bit integer")
        self.seed = seed
        self._bg = np.random.Philox(key=np.array([seed, 0], dtype=np.uint64))
        self._gen = np.random.Generator(self._bg)
        self._state = self._bg.state

    def generator(self, index):
        st = self._state
        st["state"]["key"][0] = self.seed
        st["state"]["key"][1] = int(index)
        st["state"]["counter"][:] = 0
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bg.state = st
        return self._gen


def _rejection_positions(model, n, rng):
    """n base positions with law proportional to rho on the window."""
    if n == 0:
        return np.zeros((0, model.dim))
    bound = model.rho_max
    out = np.empty((n, model.dim))
    got = 0
    while got < n:
        k = max(2 * (n - got), 8)
        cand = model.window.uniform(rng, k)
        vals = model.rho.value(cand)
        if np.any(vals > bound * (1.0 + 1e-9)):
            bad = cand[np.argmax(vals)]
            raise ConfigError(
                f"rejection bound violated: rho({bad.tolist()}) = {vals.max():.6g} "
                f"exceeds the declared bound {bound:.6g}"
            )
        accept = rng.uniform(size=k) * bound < vals
        take = min(int(np.sum(accept)), n - got)
        if take:
            out[got : got + take] = cand[accept][:take]
            got += take
    return out


def _distinct_or_raise(xs, seed, index):
    if len(xs) > 1:
        order = np.lexsort(xs.T[::-1])
        s = xs[order]
        if np.any(np.all(s[1:] == s[:-1], axis=1)):
            raise ConfigError(
                f"duplicate base point drawn (seed={seed}, sample index={index}); "
                "this has probability zero under a continuous base density"
            )


def sample_configuration(model, rng, scale=1.0):
    """One draw of the marked point process on the model window."""
    mass = scale * model.total_mass()
    n = int(rng.poisson(mass)) if mass > 0.0 else 0
    xs = _rejection_positions(model, n, rng)
    ms = model.family.sample(xs, rng) if n else np.zeros((0, model.mark_dim))
    return MarkedConfiguration(xs, ms)


def sample_mixed_configuration(model, mixing, rng):
    """One draw under the mixture law: a random scale first, then a point
    process draw with the scaled intensity (scale zero gives the empty
    configuration)."""
    return sample_configuration(model, rng, scale=mixing.sample(rng))


def sample_batch(model, n_samples, seed, start_index=0, mixing=None):
    """Draw ``n_samples`` configurations into a flat :class:`ConfigBatch`.

    With ``mixing`` provided, each sample first draws a scale z from the
    mixing law (from its own stream) and then a point process draw with the
    scaled intensity; z = 0 yields the empty configuration.  Returns
    ``(batch, scales)``; scales is None without mixing.
    """
    streams = SampleStreams(seed)
    mass = model.total_mass()
    pts_chunks, mrk_chunks = [], []
    counts = np.empty(n_samples, dtype=np.int64)
    scales = np.empty(n_samples) if mixing is not None else None
    for i in range(n_samples):
        rng = streams.generator(start_index + i)
        z = 1.0
        if mixing is not None:
            z = mixing.sample(rng)
            scales[i] = z
        lam = z * mass
        n = int(rng.poisson(lam)) if lam > 0.0 else 0
        counts[i] = n
        if n:
            xs = _rejection_positions(model, n, rng)
            _distinct_or_raise(xs, seed, start_index + i)
            pts_chunks.append(xs)
            mrk_chunks.append(model.family.sample(xs, rng))
    offsets = np.concatenate([[0], np.cumsum(counts)])
    if pts_chunks:
        points = np.vstack(pts_chunks)
        marks = np.vstack(mrk_chunks)
    else:
        points = np.zeros((0, model.dim))
        marks = np.zeros((0, model.mark_dim))
    batch = ConfigBatch(points, marks, offsets)
    return batch, scales


@dataclass
class MCResult:
    mean: float
    se: float
    n: int

    def within(self, target, factor=4.0, floor=1e-7):
        """Tolerance rule used throughout: pass iff the estimate is within
        max(factor * standard error, floor) of the target."""
        return abs(self.mean - target) <= max(factor * self.se, floor)


def mean_and_se(values):
    values = np.asarray(values, dtype=float)
    n = values.size
    mean = float(values.mean())
    se = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return MCResult(mean, se, n)


def _evaluate(functional, batch):
    if hasattr(functional, "batch_values"):
        return np.asarray(functional.batch_values(batch), dtype=float)
    return np.array([functional(c) for c in batch], dtype=float)


def mc_estimate(functional, model, n_samples, seed, mixing=None, block_size=4096):
    """Monte Carlo mean and standard error of a configuration functional.

    ``functional`` is either a plain callable on configurations or an object
    with a vectorized ``batch_values(ConfigBatch)`` method.  Sampling walks
    the per-index streams block by block in index order, so the result is
    reproducible bit for bit from (seed, block size).
    """
    if n_samples < 2:
        raise UsageError("n_samples must be at least 2")
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        k = min(block_size, n_samples - done)
        batch, _ = sample_batch(model, k, seed, start_index=done, mixing=mixing)
        vals = _evaluate(functional, batch)
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
        done += k
    mean = total / n_samples
    var = max(total_sq - n_samples * mean * mean, 0.0) / (n_samples - 1)
    return MCResult(mean, float(np.sqrt(var / n_samples)), n_samples)
