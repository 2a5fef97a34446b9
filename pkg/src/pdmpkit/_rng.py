"""Seeded random streams.

Every stochastic routine takes an explicit ``numpy.random.Generator``.
Replica streams are derived from a master seed by keying a
``SeedSequence`` with integer counters, so the stream for replica ``k``
depends only on ``(seed, k)`` and not on how many replicas ran before it.
"""

import numpy as np


def make_rng(seed, *keys):
    """Return a PCG64 generator for ``seed`` split by the integer ``keys``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def as_rng(stream):
    if isinstance(stream, np.random.Generator):
        return stream
    return make_rng(0 if stream is None else stream)


def exponential(rng, rate, size=None):
    # inverse CDF on a 64-bit uniform keeps draws identical across platforms
    u = rng.random(size)
    return -np.log1p(-u) / rate


def categorical(rng, probs):
    """Draw one index per row of ``probs`` (shape ``(n, k)``)."""
    probs = np.atleast_2d(probs)
    u = rng.random(probs.shape[0])
    cdf = np.cumsum(probs, axis=1)
    idx = (u[:, None] * cdf[:, -1:] >= cdf).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)
