"""Empirical measures on the hybrid space and the Fortet-Mourier distance.

The distance is the supremum of ``<f, mu1 - mu2>`` over ``|f| <= 1`` and
``|f(x) - f(x')| <= rho_c(x, x')``.  On a finite support this is a linear
program in the values of ``f``.  For two probability measures it also
equals the optimal transport cost for ``min(rho_c, 2)``, which gives an
independent assignment-based route for uniform clouds of equal size.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog

from .core import HybridMetric
from .errors import LPError

MAX_LP_SUPPORT = 500


@dataclass(frozen=True)
class EmpiricalMeasure:
    ys: np.ndarray
    regs: np.ndarray
    weights: np.ndarray
    c: float

    def __post_init__(self):
        ys = np.atleast_2d(np.asarray(self.ys, dtype=float))
        regs = np.asarray(self.regs, dtype=int).reshape(len(ys))
        w = np.asarray(self.weights, dtype=float).reshape(len(ys))
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum():.15g}, not 1")
        if not self.c > 0:
            raise ValueError("metric weight c must be positive")
        for k, v in (("ys", ys), ("regs", regs), ("weights", w)):
            v.flags.writeable = False
            object.__setattr__(self, k, v)

    @classmethod
    def uniform(cls, ys, regs, c):
        ys = np.atleast_2d(ys)
        n = len(ys)
        return cls(ys, regs, np.full(n, 1.0 / n), c)

    @classmethod
    def from_states(cls, states, c, weights=None):
        ys = np.array([s.y for s in states])
        regs = np.array([s.i for s in states])
        if weights is None:
            return cls.uniform(ys, regs, c)
        return cls(ys, regs, weights, c)

    def __len__(self):
        return len(self.ys)

    @property
    def metric(self):
        return HybridMetric(self.c)

    @property
    def is_uniform(self):
        return np.all(self.weights == self.weights[0])

    def integrate(self, f):
        return float(np.asarray(f(self.ys, self.regs), dtype=float) @ self.weights)

    def subset(self, idx):
        w = self.weights[idx]
        return EmpiricalMeasure(self.ys[idx], self.regs[idx], w / w.sum(), self.c)


def _check_pair(mu1, mu2):
    if mu1.c != mu2.c:
        raise ValueError("measures use different metric weights")
    if mu1.ys.shape[1] != mu2.ys.shape[1]:
        raise ValueError("dimension mismatch")


def combined_support(mu1, mu2):
    """Merge both supports; returns ``(ys, regs, w1 - w2)`` on distinct points."""
    ys = np.vstack([mu1.ys, mu2.ys])
    regs = np.concatenate([mu1.regs, mu2.regs])
    diff = np.concatenate([mu1.weights, -mu2.weights])
    key = np.hstack([ys, regs[:, None].astype(float)])
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    return uniq[:, :-1], uniq[:, -1].astype(int), np.bincount(inv, weights=diff)


def fm_lp(ys, regs, g, c):
    """Solve ``max <f, g>`` over the Fortet-Mourier unit ball on the points.

    Only pairs with ``rho_c < 2`` need a constraint: the box ``|f| <= 1``
    already enforces the others.  Returns ``(value, f)``.
    """
    m = len(ys)
    if m == 1:
        f = np.sign(g)
        return float(abs(g[0])), f
    D = HybridMetric(c).pairwise(ys, regs, ys, regs)
    iu, ju = np.nonzero(np.triu(D < 2.0, k=1))
    return _solve_f_lp(m, iu, ju, D[iu, ju], g)


def _solve_f_lp(m, iu, ju, cost, g):
    k = len(iu)
    rows = np.arange(k)
    A = sparse.coo_matrix(
        (np.concatenate([np.ones(k), -np.ones(k)]),
         (np.concatenate([rows, rows]), np.concatenate([iu, ju]))), shape=(k, m)).tocsr()
    A_ub = sparse.vstack([A, -A]).tocsr() if k else None
    b_ub = np.concatenate([cost, cost]) if k else None
    res = linprog(-g, A_ub=A_ub, b_ub=b_ub, bounds=[(-1.0, 1.0)] * m, method="highs")
    if res.status != 0:
        raise LPError(f"linear program failed: status {res.status}, {res.message}")
    return float(-res.fun), res.x


def fm_line_lp(ys, regs, g, c):
    """Exact LP in one dimension using only neighbour constraints.

    Within a regime, constraints between sorted neighbours imply all
    others because the distance is additive along the line.  Across
    regimes, each point needs its nearest left and right neighbours in
    every other regime; with ``c >= 2`` regimes decouple entirely.
    """
    x = ys[:, 0]
    pairs = []
    for r in np.unique(regs):
        idx = np.nonzero(regs == r)[0]
        idx = idx[np.argsort(x[idx], kind="stable")]
        pairs.append(np.stack([idx[:-1], idx[1:]], axis=1))
        if c >= 2:
            continue
        for s in np.unique(regs):
            if s == r:
                continue
            jdx = np.nonzero(regs == s)[0]
            jdx = jdx[np.argsort(x[jdx], kind="stable")]
            pos = np.searchsorted(x[jdx], x[idx])
            left = pos - 1
            ok = left >= 0
            pairs.append(np.stack([idx[ok], jdx[left[ok]]], axis=1))
            ok = pos < len(jdx)
            pairs.append(np.stack([idx[ok], jdx[pos[ok]]], axis=1))
    P = np.vstack(pairs) if pairs else np.empty((0, 2), dtype=int)
    cost = np.abs(x[P[:, 0]] - x[P[:, 1]]) + c * (regs[P[:, 0]] != regs[P[:, 1]])
    keep = cost < 2.0
    P, cost = P[keep], cost[keep]
    return _solve_f_lp(len(x), P[:, 0], P[:, 1], cost, g)


def fm_assignment(mu1, mu2):
    """Exact distance for uniform clouds of equal size via optimal matching."""
    n = len(mu1)
    cost = HybridMetric(mu1.c).pairwise(mu1.ys, mu1.regs, mu2.ys, mu2.regs, cap=2.0)
    r, s = linear_sum_assignment(cost)
    return float(cost[r, s].sum() / n)


def fm_distance_exact(mu1, mu2, method="auto", max_support=MAX_LP_SUPPORT,
                      return_witness=False):
    """Exact Fortet-Mourier distance between two empirical measures.

    ``method`` is ``lp`` (general LP on the combined support), ``line``
    (one-dimensional sparse LP), ``assignment`` (uniform, equal sizes) or
    ``auto``.  ``max_support`` caps the combined support (``None`` lifts
    the cap).  With ``return_witness`` the maximizing ``f`` on the
    combined support is returned as ``(value, ys, regs, f)``.
    """
    _check_pair(mu1, mu2)
    if max_support is not None and len(mu1) + len(mu2) > max_support:
        raise ValueError(f"combined support {len(mu1) + len(mu2)} exceeds {max_support}; "
                         "use fm_distance_subsampled")
    if method == "auto":
        if return_witness or mu1.ys.shape[1] == 1:
            method = "line" if mu1.ys.shape[1] == 1 else "lp"
        elif len(mu1) == len(mu2) and mu1.is_uniform and mu2.is_uniform:
            method = "assignment"
        else:
            method = "line" if mu1.ys.shape[1] == 1 else "lp"
    if method == "assignment":
        if len(mu1) != len(mu2) or not (mu1.is_uniform and mu2.is_uniform):
            raise ValueError("assignment route needs uniform measures of equal size")
        return fm_assignment(mu1, mu2)
    ys, regs, g = combined_support(mu1, mu2)
    if np.all(np.abs(g) < 1e-15):
        val, f = 0.0, np.zeros(len(g))
    elif method == "line":
        val, f = fm_line_lp(ys, regs, g, mu1.c)
    elif method == "lp":
        val, f = fm_lp(ys, regs, g, mu1.c)
    else:
        raise ValueError(f"unknown method {method!r}")
    val = max(val, 0.0)
    return (val, ys, regs, f) if return_witness else val


def fm_distance_subsampled(mu1, mu2, rng, size=MAX_LP_SUPPORT, repeats=5, paired=False):
    """Average exact distance between weight-proportional subsamples.

    Each measure is resampled to ``size // 2`` points.  With ``paired``
    both draws use the same indices, for ensembles with common random
    numbers.  Returns ``(mean, spread)`` where spread is the sample
    standard deviation over repeats.
    """
    _check_pair(mu1, mu2)
    k = size // 2
    vals = []
    for _ in range(repeats):
        i1 = rng.choice(len(mu1), k, p=mu1.weights)
        i2 = i1 if paired else rng.choice(len(mu2), k, p=mu2.weights)
        a = EmpiricalMeasure.uniform(mu1.ys[i1], mu1.regs[i1], mu1.c)
        b = EmpiricalMeasure.uniform(mu2.ys[i2], mu2.regs[i2], mu2.c)
        vals.append(fm_distance_exact(a, b, max_support=None))
    vals = np.array(vals)
    return float(vals.mean()), float(vals.std(ddof=1)) if repeats > 1 else 0.0


def fm_distance_blocked(mu1, mu2, rng, block=2500):
    """Mean exact distance over random equal blocks of two uniform clouds.

    For uniform clouds of equal size, splitting both into matched blocks
    gives a feasible transport plan, so the result is an upper bound on the
    exact distance of the full clouds.
    """
    _check_pair(mu1, mu2)
    if not (mu1.is_uniform and mu2.is_uniform):
        raise ValueError("blocked estimator needs uniform measures")
    n = min(len(mu1), len(mu2))
    p1 = rng.permutation(len(mu1))[:n]
    p2 = rng.permutation(len(mu2))[:n]
    nb = max(1, n // block)
    size = n // nb
    total = 0.0
    for b in range(nb):
        s = slice(b * size, (b + 1) * size)
        total += fm_assignment(
            EmpiricalMeasure.uniform(mu1.ys[p1[s]], mu1.regs[p1[s]], mu1.c),
            EmpiricalMeasure.uniform(mu2.ys[p2[s]], mu2.regs[p2[s]], mu2.c))
    return total / nb


def paired_bound(mu1, mu2):
    """Cost of the identity matching of two uniform clouds of equal size."""
    if len(mu1) != len(mu2):
        raise ValueError("paired bound needs equal sizes")
    d = np.linalg.norm(mu1.ys - mu2.ys, axis=1) + mu1.c * (mu1.regs != mu2.regs)
    return float(np.minimum(d, 2.0).mean())


def noise_floor(mu, rng, method="auto"):
    """Distance between two random halves of a uniform cloud."""
    n = len(mu) // 2
    p = rng.permutation(len(mu))
    a = EmpiricalMeasure.uniform(mu.ys[p[:n]], mu.regs[p[:n]], mu.c)
    b = EmpiricalMeasure.uniform(mu.ys[p[n:2 * n]], mu.regs[p[n:2 * n]], mu.c)
    return fm_distance_exact(a, b, method=method, max_support=None)


def check_unit_ball(f, ys, regs, c, rng, pairs=200, tol=1e-9):
    """Raise ValueError when ``f`` leaves the unit ball on sampled points."""
    v = np.asarray(f(ys, regs), dtype=float)
    if np.any(np.abs(v) > 1 + tol):
        raise ValueError("dictionary function exceeds 1 in absolute value")
    i = rng.integers(0, len(ys), pairs)
    j = rng.integers(0, len(ys), pairs)
    d = np.linalg.norm(ys[i] - ys[j], axis=1) + c * (regs[i] != regs[j])
    if np.any(np.abs(v[i] - v[j]) > d + tol):
        raise ValueError("dictionary function is not 1-Lipschitz for rho_c")


def fm_distance_dictionary(mu1, mu2, dictionary, rng=None, pairs=200):
    """Lower bound ``max_f |<f, mu1 - mu2>|`` over a dictionary."""
    _check_pair(mu1, mu2)
    if not dictionary:
        return 0.0
    rng = rng if rng is not None else np.random.default_rng(0)
    ys = np.vstack([mu1.ys, mu2.ys])
    regs = np.concatenate([mu1.regs, mu2.regs])
    best = 0.0
    for f in dictionary:
        check_unit_ball(f, ys, regs, mu1.c, rng, pairs)
        best = max(best, abs(mu1.integrate(f) - mu2.integrate(f)))
    return best


def default_dictionary(mu1, mu2, rng, anchors=16, ramps=8):
    """Clipped coordinate ramps, radial bumps and scaled regime indicators."""
    c = mu1.c
    ys = np.vstack([mu1.ys, mu2.ys])
    regs = np.concatenate([mu1.regs, mu2.regs])
    out = []
    for k in range(ys.shape[1]):
        for s in np.quantile(ys[:, k], np.linspace(0, 1, ramps)):
            out.append(lambda y, r, k=k, s=s: np.clip(y[:, k] - s, -1.0, 1.0))
    for a in rng.choice(len(ys), min(anchors, len(ys)), replace=False):
        ya, ra = ys[a].copy(), int(regs[a])
        out.append(lambda y, r, ya=ya, ra=ra: np.maximum(
            0.0, 1.0 - np.linalg.norm(y - ya, axis=1) - c * (r != ra)))
    scale = min(1.0, c)
    for r0 in np.unique(regs):
        out.append(lambda y, r, r0=r0: scale * (r == r0))
    return out


def marginalize_Y(mu):
    """Drop the regime index and merge coincident points."""
    uniq, inv = np.unique(mu.ys, axis=0, return_inverse=True)
    w = np.bincount(inv.reshape(-1), weights=mu.weights)
    return EmpiricalMeasure(uniq, np.zeros(len(uniq), dtype=int), w / w.sum(), mu.c)


def lyapunov_moment(mu, reference_point):
    return float(np.linalg.norm(mu.ys - np.asarray(reference_point), axis=1) @ mu.weights)


@dataclass(frozen=True)
class GeometricFit:
    C: float
    beta: float
    r2: float
    beta_raw: float
    floored: tuple


def fit_geometric_rate(ns, ds, floor=None):
    """Least-squares fit of ``log d_n = log C + n log beta``.

    Entries ``<= 0`` are replaced by ``floor`` (default: a tenth of the
    smallest positive entry) and their indices reported in ``floored``.
    ``beta`` is clipped to ``(0, 1]``; ``beta_raw`` is the unclipped value.
    """
    ns = np.asarray(ns, dtype=float)
    ds = np.asarray(ds, dtype=float)
    pos = ds > 0
    if pos.sum() < 5:
        raise ValueError("need at least 5 positive distances")
    if floor is None:
        floor = ds[pos].min() / 10
    floored = tuple(int(k) for k in np.nonzero(~pos)[0])
    ds = np.where(pos, ds, floor)
    y = np.log(ds)
    A = np.stack([np.ones_like(ns), ns], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    sst = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 if sst <= 1e-300 else float(1 - (resid ** 2).sum() / sst)
    beta_raw = math.exp(coef[1])
    return GeometricFit(math.exp(coef[0]), min(beta_raw, 1.0), r2, beta_raw, floored)
