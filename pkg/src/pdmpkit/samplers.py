"""Simulation of the post-jump chain, the interpolated process and the
one-step kernels, plus quadrature for ``G f`` and path time averages.

Batched routines take states as an array ``ys`` of shape (n, d) and
regimes ``regs`` of shape (n,).  Test functions are batched too:
``f(ys, regs) -> (n,)``.
"""

from dataclasses import dataclass
import math

import numpy as np

from ._rng import categorical, exponential
from .core import HybridState, sample_theta
from .flows import flow

LAGUERRE_NODES = 32
SIMPSON_MIN = 8
SIMPSON_H = 0.05


def sample_holding_time(rng, lam, size=None):
    if not lam > 0:
        raise ValueError("jump rate must be positive")
    return exponential(rng, lam, size)


def sample_jump(spec, rng, y_pre):
    """Draw ``(theta, h)`` for each row of ``y_pre``."""
    y_pre = np.atleast_2d(y_pre)
    theta = sample_theta(spec, rng, y_pre)
    h = spec.perturbation.sample(rng, len(y_pre), spec.dim)
    return theta, h


def chain_step_batch(spec, rng, ys, regs):
    """One transition for every row.  Returns ``(y', j, t, theta, h)``."""
    ys = np.atleast_2d(ys)
    regs = np.asarray(regs, dtype=int).reshape(len(ys))
    t = sample_holding_time(rng, spec.jump_rate, len(ys))
    y_pre = flow(spec, regs, t, ys)
    theta, h = sample_jump(spec, rng, y_pre)
    y_new = spec.jump_map(theta, y_pre) + h
    j = switch(spec, rng, regs, y_new)
    return y_new, j, t, theta, h


def switch(spec, rng, regs, y_new):
    if spec.regime_count == 1:
        return np.zeros(len(y_new), dtype=int)
    pi = spec.switch_probs(y_new)
    rows = pi[np.arange(len(y_new)), regs]
    return categorical(rng, rows)


def chain_step(spec, rng, x):
    y, j, *_ = chain_step_batch(spec, rng, x.y[None], [x.i])
    return HybridState(y[0], int(j[0]))


def sample_G_batch(spec, rng, ys, regs):
    ys = np.atleast_2d(ys)
    regs = np.asarray(regs, dtype=int).reshape(len(ys))
    t = sample_holding_time(rng, spec.jump_rate, len(ys))
    return flow(spec, regs, t, ys), regs.copy()


def sample_W_batch(spec, rng, ys, regs):
    ys = np.atleast_2d(ys)
    regs = np.asarray(regs, dtype=int).reshape(len(ys))
    theta, h = sample_jump(spec, rng, ys)
    y_new = spec.jump_map(theta, ys) + h
    return y_new, switch(spec, rng, regs, y_new)


def sample_G(spec, rng, x):
    y, i = sample_G_batch(spec, rng, x.y[None], [x.i])
    return HybridState(y[0], int(i[0]))


def sample_W(spec, rng, x):
    y, j = sample_W_batch(spec, rng, x.y[None], [x.i])
    return HybridState(y[0], int(j[0]))


@dataclass(frozen=True)
class ChainTrajectory:
    """States ``(Y_k, xi_k)`` for k = 0..n with jump times and marks.

    ``thetas[k-1]`` and ``hs[k-1]`` are the marks that produced state k.
    """

    ys: np.ndarray
    regs: np.ndarray
    times: np.ndarray
    thetas: np.ndarray
    hs: np.ndarray

    def __len__(self):
        return len(self.ys)

    def state(self, k):
        return HybridState(self.ys[k], int(self.regs[k]))

    @property
    def steps(self):
        return len(self.ys) - 1

    @property
    def holding(self):
        return np.diff(self.times)


def simulate_chain(spec, rng, x0, n):
    """Run ``n`` chain steps from ``x0``."""
    if n < 0:
        raise ValueError("number of steps must be nonnegative")
    d, k = spec.dim, spec.theta_dim
    ys = np.empty((n + 1, d))
    regs = np.empty(n + 1, dtype=int)
    times = np.zeros(n + 1)
    thetas = np.empty((n, k))
    hs = np.empty((n, d))
    ys[0], regs[0] = x0.y, x0.i
    y, r = x0.y[None].copy(), np.array([x0.i])
    for m in range(n):
        y, r, t, th, h = chain_step_batch(spec, rng, y, r)
        ys[m + 1], regs[m + 1] = y[0], r[0]
        times[m + 1] = times[m] + t[0]
        thetas[m], hs[m] = th[0], h[0]
    return ChainTrajectory(ys, regs, times, thetas, hs)


def simulate_ensemble(spec, rng, ys, regs, n, checkpoints=None):
    """Advance many independent chains in lockstep.

    Returns the final ``(ys, regs)`` and, if ``checkpoints`` is given, a
    dict mapping each checkpoint step to a copy of the ensemble state.
    """
    ys = np.array(np.atleast_2d(ys), dtype=float)
    regs = np.array(regs, dtype=int).reshape(len(ys))
    snaps = {}
    marks = set(checkpoints or ())
    if 0 in marks:
        snaps[0] = (ys.copy(), regs.copy())
    for m in range(1, n + 1):
        ys, regs, *_ = chain_step_batch(spec, rng, ys, regs)
        if m in marks:
            snaps[m] = (ys.copy(), regs.copy())
    return (ys, regs), snaps


@dataclass(frozen=True)
class PdmpPath:
    """Interpolated process built from a chain trajectory.

    The trajectory extends one jump past the horizon so that every
    ``t <= horizon`` falls in a closed segment.
    """

    spec: object
    traj: ChainTrajectory
    horizon: float

    def locate(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.horizon):
            raise ValueError("evaluation time outside [0, horizon]")
        return np.searchsorted(self.traj.times, t, side="right") - 1

    def at(self, t):
        """States ``(ys, regs)`` at the times ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = self.locate(t)
        regs = self.traj.regs[k]
        ys = flow(self.spec, regs, t - self.traj.times[k], self.traj.ys[k])
        return np.atleast_2d(ys), regs

    def __call__(self, t):
        ys, regs = self.at([t])
        return HybridState(ys[0], int(regs[0]))


def simulate_pdmp(spec, rng, x0, horizon, chunk=None):
    """Simulate jumps until the jump time exceeds ``horizon``."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    d, k = spec.dim, spec.theta_dim
    ys, regs, times, thetas, hs = [x0.y.copy()], [x0.i], [0.0], [], []
    y, r, tau = x0.y[None].copy(), np.array([x0.i]), 0.0
    while tau <= horizon:
        y, r, t, th, h = chain_step_batch(spec, rng, y, r)
        tau = tau + float(t[0])
        ys.append(y[0])
        regs.append(int(r[0]))
        times.append(tau)
        thetas.append(th[0])
        hs.append(h[0])
    traj = ChainTrajectory(np.array(ys).reshape(-1, d), np.array(regs, dtype=int),
                           np.array(times), np.array(thetas).reshape(-1, k),
                           np.array(hs).reshape(-1, d))
    return PdmpPath(spec, traj, float(horizon))


def count_jumps(path, t):
    """Number of jumps in ``(0, t]``."""
    return int(np.searchsorted(path.traj.times, t, side="right") - 1)


def apply_G_quadrature(spec, f, ys, regs, nodes=LAGUERRE_NODES):
    """``G f`` at each row by Gauss-Laguerre quadrature in ``u = lambda t``."""
    if nodes < 8:
        raise ValueError("need at least 8 quadrature nodes")
    ys = np.atleast_2d(ys)
    regs = np.asarray(regs, dtype=int).reshape(len(ys))
    x, w = np.polynomial.laguerre.laggauss(nodes)
    n = len(ys)
    t = np.tile(x / spec.jump_rate, n)
    rr = np.repeat(regs, nodes)
    yt = flow(spec, rr, t, np.repeat(ys, nodes, axis=0))
    vals = np.asarray(f(yt, rr), dtype=float).reshape(n, nodes)
    return vals @ w


def _simpson_nodes(a, b, h=SIMPSON_H, m_min=SIMPSON_MIN):
    """Composite Simpson nodes and weights on each interval ``[a_k, b_k]``.

    Returns ``(times, weights, segment_index)`` flattened over segments.
    """
    length = b - a
    m = np.maximum(m_min, np.ceil(length / h).astype(int))
    m += m % 2
    counts = m + 1
    seg = np.repeat(np.arange(len(a)), counts)
    start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    pos = np.arange(counts.sum()) - np.repeat(start, counts)
    mm = m[seg]
    times = a[seg] + length[seg] * pos / mm
    coef = np.where(pos % 2 == 1, 4.0, 2.0)
    coef[(pos == 0) | (pos == mm)] = 1.0
    weights = coef * length[seg] / (3.0 * mm)
    return times, weights, seg


def segment_integrals(path, f, t):
    """Integrals of ``f`` along the path over ``[tau_k, min(tau_{k+1}, t)]``.

    One value per segment that starts before ``t``.
    """
    if not 0 < t <= path.horizon:
        raise ValueError("t must lie in (0, horizon]")
    times = path.traj.times
    nseg = int(np.searchsorted(times, t, side="left"))
    a = times[:nseg]
    b = np.minimum(times[1:nseg + 1], t)
    s, w, seg = _simpson_nodes(a, b)
    ys = flow(path.spec, path.traj.regs[seg], s - a[seg], path.traj.ys[seg])
    vals = np.asarray(f(np.atleast_2d(ys), path.traj.regs[seg]), dtype=float)
    return np.bincount(seg, weights=vals * w, minlength=nseg)


def time_average(path, f, t):
    """``(1/t) int_0^t f(path(s)) ds`` by composite Simpson per segment."""
    return float(segment_integrals(path, f, t).sum() / t)


def monte_carlo_PV(spec, rng, ys, regs, n, reference_point=None):
    """Monte Carlo ``P V(x)`` with ``V = |y - y*|``; returns means and standard errors."""
    ref = spec.reference_point if reference_point is None else reference_point
    ys = np.atleast_2d(ys)
    m = len(ys)
    y1, *_ = chain_step_batch(spec, rng, np.repeat(ys, n, axis=0), np.repeat(regs, n))
    v = np.linalg.norm(y1 - ref, axis=1).reshape(m, n)
    return v.mean(axis=1), v.std(axis=1, ddof=1) / math.sqrt(n)
