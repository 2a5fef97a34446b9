"""Markovian coupling of two copies of the chain.

The coupled kernel is ``B = Q + R``.  ``Q`` is realised by thinning with
shared randomness: both coordinates use the same holding time, noise,
jump parameter and new regime, and a proposal drawn from the first
coordinate's law is kept with probability ``min(p1, p2)/p1`` (jump
parameter) and ``min(pi1, pi2)/pi1`` (regime).  ``R`` tops ``Q`` up to a
coupling; each of its coordinates is drawn independently as the first
*rejected* proposal of the thinning pipeline run from that coordinate's
side, which has law ``(P(x_k, .) - Q_k)/(1 - |Q|)``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from ._rng import categorical, exponential
from .core import HybridState, sample_states, sample_theta
from .errors import ResidualMassError, SpecError
from .flows import flow
from .reports import Verdict, verdict_pairs
from .samplers import chain_step_batch, monte_carlo_PV, simulate_ensemble

MAX_RESIDUAL_ATTEMPTS = 10**6
ZETA_GRID = (0.5, 0.7, 0.9, 0.95)


@dataclass(frozen=True)
class CoupledState:
    x1: HybridState
    x2: HybridState


@dataclass(frozen=True)
class CoupledStepRecord:
    next: CoupledState
    branch: str
    shared_draws: tuple = None


def _thinning(spec, rng, ya, ra, yb, rb):
    """Run the thinning pipeline proposing from side ``a``.

    Returns ``(accepted, (ya', j), (yb', j), draws)``; the side-``b`` image
    uses the same ``(t, h, theta, j)``.
    """
    n = len(ya)
    t = exponential(rng, spec.jump_rate, n)
    h = spec.perturbation.sample(rng, n, spec.dim)
    sa = flow(spec, ra, t, ya)
    sb = flow(spec, rb, t, yb)
    theta = sample_theta(spec, rng, sa)
    pa = np.asarray(spec.jump_density(sa, theta), dtype=float)
    pb = np.asarray(spec.jump_density(sb, theta), dtype=float)
    ok_theta = rng.random(n) * pa < np.minimum(pa, pb)
    wa = spec.jump_map(theta, sa) + h
    wb = spec.jump_map(theta, sb) + h
    if spec.regime_count == 1:
        j = np.zeros(n, dtype=int)
        ok_j = np.ones(n, dtype=bool)
    else:
        pia = spec.switch_probs(wa)[np.arange(n), ra]
        pib = spec.switch_probs(wb)[np.arange(n), rb]
        if np.any(pia.sum(axis=1) <= 0) or np.any(pib.sum(axis=1) <= 0):
            raise SpecError("zero switching row")
        j = categorical(rng, pia)
        qa = pia[np.arange(n), j]
        qb = pib[np.arange(n), j]
        ok_j = rng.random(n) * qa < np.minimum(qa, qb)
    acc = ok_theta & ok_j
    return acc, (wa, j), (wb, j), (t, h, theta, j)


def _batch(y1, r1, y2, r2):
    y1 = np.atleast_2d(np.asarray(y1, dtype=float))
    y2 = np.atleast_2d(np.asarray(y2, dtype=float))
    r1 = np.asarray(r1, dtype=int).reshape(len(y1))
    r2 = np.asarray(r2, dtype=int).reshape(len(y2))
    return y1, r1, y2, r2


def sample_Q_batch(spec, rng, y1, r1, y2, r2):
    """One thinning attempt per pair.

    Returns ``(accepted, y1', r1', y2', r2', draws)``; rows with
    ``accepted`` false carry the rejected proposal and must be ignored as
    ``Q`` outputs.
    """
    y1, r1, y2, r2 = _batch(y1, r1, y2, r2)
    acc, (w1, j), (w2, _), draws = _thinning(spec, rng, y1, r1, y2, r2)
    return acc, w1, j, w2, j.copy(), draws


def sample_Q(spec, consts, rng, x1, x2):
    """Thinning sample of ``Q``; ``None`` on rejection, else ``(x1', x2', draws)``."""
    acc, w1, j1, w2, j2, draws = sample_Q_batch(spec, rng, x1.y[None], [x1.i], x2.y[None], [x2.i])
    if not acc[0]:
        return None
    shared = tuple(np.asarray(d)[0] for d in draws)
    return HybridState(w1[0], j1[0]), HybridState(w2[0], j2[0]), shared


def _residual_side(spec, rng, ya, ra, yb, rb, max_attempts):
    n = len(ya)
    out_y = np.empty_like(ya)
    out_r = np.empty(n, dtype=int)
    pending = np.arange(n)
    attempts = 0
    while pending.size:
        attempts += 1
        if attempts > max_attempts:
            raise ResidualMassError(
                f"{pending.size} pair(s) without rejection after {max_attempts} attempts")
        acc, (wa, j), _, _ = _thinning(spec, rng, ya[pending], ra[pending],
                                       yb[pending], rb[pending])
        rej = ~acc
        out_y[pending[rej]] = wa[rej]
        out_r[pending[rej]] = j[rej]
        pending = pending[acc]
    return out_y, out_r


def sample_residual_batch(spec, rng, y1, r1, y2, r2, max_attempts=MAX_RESIDUAL_ATTEMPTS):
    """Independent residual draws for both coordinates of each pair."""
    y1, r1, y2, r2 = _batch(y1, r1, y2, r2)
    same = np.all(y1 == y2, axis=1) & (r1 == r2)
    if np.any(same):
        raise ResidualMassError("identical coordinates are coupled with mass one")
    a_y, a_r = _residual_side(spec, rng, y1, r1, y2, r2, max_attempts)
    b_y, b_r = _residual_side(spec, rng, y2, r2, y1, r1, max_attempts)
    return a_y, a_r, b_y, b_r


def sample_residual(spec, consts, rng, x1, x2, max_attempts=MAX_RESIDUAL_ATTEMPTS):
    a_y, a_r, b_y, b_r = sample_residual_batch(spec, rng, x1.y[None], [x1.i], x2.y[None],
                                               [x2.i], max_attempts)
    return HybridState(a_y[0], a_r[0]), HybridState(b_y[0], b_r[0])


def coupled_step_batch(spec, rng, y1, r1, y2, r2, max_attempts=MAX_RESIDUAL_ATTEMPTS):
    """One step of ``B`` per pair.  Returns ``(y1', r1', y2', r2', via_Q, draws)``.

    Pairs with identical coordinates are always accepted by ``Q``.
    """
    y1, r1, y2, r2 = _batch(y1, r1, y2, r2)
    acc, w1, j1, w2, j2, draws = sample_Q_batch(spec, rng, y1, r1, y2, r2)
    rej = np.nonzero(~acc)[0]
    if rej.size:
        a_y, a_r, b_y, b_r = sample_residual_batch(spec, rng, y1[rej], r1[rej], y2[rej],
                                                   r2[rej], max_attempts)
        w1[rej], j1[rej], w2[rej], j2[rej] = a_y, a_r, b_y, b_r
    return w1, j1, w2, j2, acc, draws


def coupled_step(spec, consts, rng, cs):
    x1, x2 = cs.x1, cs.x2
    w1, j1, w2, j2, acc, draws = coupled_step_batch(spec, rng, x1.y[None], [x1.i],
                                                    x2.y[None], [x2.i])
    nxt = CoupledState(HybridState(w1[0], j1[0]), HybridState(w2[0], j2[0]))
    if acc[0]:
        return CoupledStepRecord(nxt, "via_Q", tuple(np.asarray(d)[0] for d in draws))
    return CoupledStepRecord(nxt, "residual")


def V(consts, y):
    return consts.V(y)


def in_F(consts, y1, r1, y2, r2):
    """Pairs with equal regimes or with ``V(x1) + V(x2) < R``."""
    return (np.asarray(r1) == np.asarray(r2)) | in_K(consts, y1, r1, y2, r2)


def in_K(consts, y1, r1, y2, r2):
    return consts.V(y1) + consts.V(y2) < consts.R


def coupling_time_kappa(spec, consts, rng, y1, r1, y2, r2, max_steps, convention="N0"):
    """Steps until each pair enters ``K``.

    ``convention`` is ``N0`` (a start inside ``K`` gives 0) or ``N`` (first
    entry at a step >= 1).  Returns ``(kappa, censored)``; censored pairs
    report ``max_steps``.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    y1, r1, y2, r2 = _batch(y1, r1, y2, r2)
    n = len(y1)
    kappa = np.full(n, max_steps, dtype=int)
    done = np.zeros(n, dtype=bool)
    if convention == "N0":
        done = in_K(consts, y1, r1, y2, r2)
        kappa[done] = 0
    elif convention != "N":
        raise ValueError(convention)
    act = np.nonzero(~done)[0]
    y1, r1, y2, r2 = y1[act], r1[act], y2[act], r2[act]
    for step in range(1, max_steps + 1):
        if act.size == 0:
            break
        y1, r1, y2, r2, _, _ = coupled_step_batch(spec, rng, y1, r1, y2, r2)
        hit = in_K(consts, y1, r1, y2, r2)
        kappa[act[hit]] = step
        done[act[hit]] = True
        keep = ~hit
        act, y1, r1, y2, r2 = act[keep], y1[keep], r1[keep], y2[keep], r2[keep]
    return kappa, ~done


def geometric_tail(kappa, censored, zetas=ZETA_GRID, rel_se=0.1):
    """Estimates of ``E zeta^{-kappa}`` with a stability flag per zeta.

    An estimate is stable when nothing is censored and its relative
    standard error is below ``rel_se``.  Returns a list of dicts and the
    smallest stable zeta (or ``None``).
    """
    out = []
    best = None
    for z in sorted(zetas):
        v = np.power(float(z), -kappa.astype(float))
        m = float(v.mean())
        se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else math.inf
        stable = bool(not censored.any() and np.isfinite(m) and se <= rel_se * m)
        out.append({"zeta": z, "mean": m, "se": se, "stable": stable})
        if stable and best is None:
            best = z
    return out, best


@dataclass
class CouplingReport:
    verdicts: list
    pairs: list = field(default_factory=list)

    @property
    def passed(self):
        return all(v.passed is not False for v in self.verdicts)

    def __getitem__(self, name):
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def to_pairs(self):
        return [("all_pass", self.passed)] + verdict_pairs(self.verdicts)


def sample_F_pairs(spec, consts, rng, n, burn=50):
    """Half the pairs inside ``K``, half from a chain ensemble in equilibrium.

    Equilibrium pairs get equal regimes so that they lie in ``F``.
    """
    N = spec.regime_count
    n1 = n // 2
    y1 = sample_states(spec, rng, n1, consts.R / 2)
    y2 = sample_states(spec, rng, n1, consts.R / 2)
    r1 = rng.integers(0, N, n1)
    r2 = rng.integers(0, N, n1)
    n2 = n - n1
    start = np.broadcast_to(spec.reference_point, (2 * n2, spec.dim))
    (ye, re), _ = simulate_ensemble(spec, rng, start, np.zeros(2 * n2, dtype=int), burn)
    y1 = np.vstack([y1, ye[:n2]])
    y2 = np.vstack([y2, ye[n2:]])
    r1 = np.concatenate([r1, re[:n2]])
    r2 = np.concatenate([r2, re[:n2]])
    return y1, r1, y2, r2


def verify_B_conditions(spec, consts, rng, pairs=50, draws=10**4, states=50, pv_draws=10**4):
    """Monte Carlo verdicts for the coupling conditions.

    Each pair in ``F`` gets ``draws`` thinning attempts.  Bands are three
    standard errors.
    """
    c = consts.c
    verdicts = []
    # drift at single states
    ys = sample_states(spec, rng, states, consts.M)
    regs = rng.integers(0, spec.regime_count, states)
    pv, se = monte_carlo_PV(spec, rng, ys, regs, pv_draws)
    rhs = consts.a * consts.V(ys) + consts.b
    slack = pv - rhs - 3 * se
    k = int(np.argmax(slack))
    verdicts.append(Verdict("drift", bool(np.all(slack <= 0)), float(pv[k]), float(rhs[k] + 3 * se[k]),
                            states, {"draws": pv_draws, "worst_y": ys[k], "worst_i": int(regs[k])}))

    y1, r1, y2, r2 = sample_F_pairs(spec, consts, rng, pairs)
    rows = []
    b2_ok = True
    for p in range(pairs):
        Y1 = np.repeat(y1[p:p + 1], draws, axis=0)
        Y2 = np.repeat(y2[p:p + 1], draws, axis=0)
        R1 = np.full(draws, r1[p])
        R2 = np.full(draws, r2[p])
        acc, w1, j1, w2, j2, _ = sample_Q_batch(spec, rng, Y1, R1, Y2, R2)
        rho0 = float(np.linalg.norm(y1[p] - y2[p]) + c * (r1[p] != r2[p]))
        rho1 = np.linalg.norm(w1 - w2, axis=1) + c * (j1 != j2)
        contr = np.where(acc, rho1, 0.0)
        inU = acc & (rho1 <= consts.q * rho0 + 1e-12)
        if np.any(acc):
            b2_ok &= bool(np.all(in_F(consts, w1[acc], j1[acc], w2[acc], j2[acc])))
        mass = float(acc.mean())
        rows.append({
            "pair": p, "y1": y1[p], "i1": int(r1[p]), "y2": y2[p], "i2": int(r2[p]),
            "rho": rho0, "mass": mass, "mass_se": math.sqrt(mass * (1 - mass) / draws),
            "contraction": float(contr.mean()), "contraction_se": float(contr.std(ddof=1) / math.sqrt(draws)),
            "u_mass": float(inU.mean()), "u_se": float(inU.std(ddof=1) / math.sqrt(draws)),
        })

    def worst(key, bound, se_key, sign):
        # sign=+1: value must not exceed bound; sign=-1: must not fall below
        margins = [sign * (r[key] - bound(r)) - 3 * r[se_key] for r in rows]
        k = int(np.argmax(margins))
        return k, margins[k] <= 0

    k, ok = worst("contraction", lambda r: consts.q * r["rho"], "contraction_se", 1)
    verdicts.append(Verdict("contraction", bool(ok), rows[k]["contraction"], consts.q * rows[k]["rho"], pairs,
                            {"draws": draws, "witness_pair": k, "q": consts.q}))
    k, ok = worst("u_mass", lambda r: consts.delta, "u_se", -1)
    verdicts.append(Verdict("small_set_mass", bool(ok), rows[k]["u_mass"], consts.delta, pairs,
                            {"draws": draws, "witness_pair": k}))
    for r in rows:
        r["deficit"] = 1 - r["mass"]
    k, ok = worst("deficit", lambda r: consts.l * r["rho"], "mass_se", 1)
    verdicts.append(Verdict("mass_deficit", bool(ok), rows[k]["deficit"], consts.l * rows[k]["rho"], pairs,
                            {"draws": draws, "witness_pair": k, "l": consts.l}))
    verdicts.append(Verdict("support", b2_ok, float(b2_ok), 1.0, pairs))
    return CouplingReport(verdicts, rows)
