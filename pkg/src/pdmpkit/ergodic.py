"""Experiment drivers: invariant measures, the chain/process correspondence,
strong laws, the martingale decomposition and the short-time expansion."""

from dataclasses import dataclass, field
import math

import numpy as np

from ._rng import exponential, make_rng
from .core import sample_theta, theta_rule
from .flows import flow
from .metrics import (EmpiricalMeasure, fit_geometric_rate, fm_distance_blocked,
                      fm_distance_exact, marginalize_Y, paired_bound)
from .reports import Verdict
from .samplers import (_simpson_nodes, apply_G_quadrature, chain_step_batch, count_jumps,
                       sample_G_batch, sample_W_batch, segment_integrals, simulate_chain,
                       simulate_ensemble, simulate_pdmp, switch)


@dataclass
class ExperimentResult:
    name: str
    digest: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)

    @property
    def passed(self):
        return all(v.passed is not False for v in self.verdicts)

    def verdict(self, name):
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)


def _digest(spec, **budgets):
    return {"spec_hash": spec.spec_hash(), **budgets}


def estimate_invariant_chain(spec, rng, x0, c, burn_in=1000, n=10**4, thin=5):
    """Occupation measure of one chain run: states ``burn_in + thin*m``, m = 1..n."""
    if n < 1:
        raise ValueError("n must be positive")
    traj = simulate_chain(spec, rng, x0, burn_in + n * thin)
    idx = burn_in + thin * np.arange(1, n + 1)
    return EmpiricalMeasure.uniform(traj.ys[idx], traj.regs[idx], c)


def estimate_invariant_pdmp(spec, rng, x0, horizon, sample_times, c):
    """The process evaluated at ``sample_times`` on one path."""
    path = simulate_pdmp(spec, rng, x0, horizon)
    ys, regs = path.at(np.asarray(sample_times, dtype=float))
    return EmpiricalMeasure.uniform(ys, regs, c)


def equal_times(burn_in, horizon, n):
    return burn_in + (horizon - burn_in) * np.arange(1, n + 1) / n


def poisson_times(rng, burn_in, horizon, n):
    """``n`` increasing times with exponential gaps rescaled into the window."""
    gaps = exponential(rng, 1.0, n + 1)
    cum = np.cumsum(gaps)
    return burn_in + (horizon - burn_in) * cum[:-1] / cum[-1]


def invariant_ensemble(spec, rng, c, chains=1000, steps=100, burn_in=100):
    """Invariant sample from many chains in lockstep (all states after burn-in)."""
    start = np.broadcast_to(spec.reference_point, (chains, spec.dim))
    ys, regs = np.array(start), np.zeros(chains, dtype=int)
    (ys, regs), _ = simulate_ensemble(spec, rng, ys, regs, burn_in)
    out_y, out_r = [], []
    for _ in range(steps):
        ys, regs, *_ = chain_step_batch(spec, rng, ys, regs)
        out_y.append(ys)
        out_r.append(regs)
    return EmpiricalMeasure.uniform(np.vstack(out_y), np.concatenate(out_r), c)


def push_G(spec, rng, mu, per_point=1):
    ys = np.repeat(mu.ys, per_point, axis=0)
    regs = np.repeat(mu.regs, per_point)
    y, r = sample_G_batch(spec, rng, ys, regs)
    return EmpiricalMeasure.uniform(y, r, mu.c)


def push_W(spec, rng, mu, per_point=1):
    ys = np.repeat(mu.ys, per_point, axis=0)
    regs = np.repeat(mu.regs, per_point)
    y, r = sample_W_batch(spec, rng, ys, regs)
    return EmpiricalMeasure.uniform(y, r, mu.c)


def _subsample(mu, rng, n):
    if len(mu) <= n:
        return mu
    idx = rng.choice(len(mu), n, replace=False)
    return EmpiricalMeasure.uniform(mu.ys[idx], mu.regs[idx], mu.c)


def large_fm(mu1, mu2, rng, block=2500):
    """Distance between large uniform clouds.

    Exact when both fit in one block; otherwise the mean over matched
    random blocks, an upper bound on the exact value for equal sizes.
    """
    n = min(len(mu1), len(mu2))
    if n <= block and len(mu1) == len(mu2):
        return fm_distance_exact(mu1, mu2, max_support=None)
    return fm_distance_blocked(mu1, mu2, rng, block)


def check_relation_G(spec, rng, mu_chain, nu_pdmp, per_point_draws=16, tol=None, block=2500):
    """Distances ``d(mu G, nu)`` and ``d(nu W, mu)`` with the split-half floor."""
    muG = push_G(spec, rng, mu_chain, per_point_draws)
    nuW = push_W(spec, rng, nu_pdmp, per_point_draws)
    n = min(len(mu_chain), len(nu_pdmp))
    dG = large_fm(_subsample(muG, rng, n), _subsample(nu_pdmp, rng, n), rng, block)
    dW = large_fm(_subsample(nuW, rng, n), _subsample(mu_chain, rng, n), rng, block)
    half = len(mu_chain) // 2
    p = rng.permutation(len(mu_chain))
    floor = large_fm(mu_chain.subset(p[:half]), mu_chain.subset(p[half:2 * half]), rng, block)
    tol = max(0.05, 3 * floor) if tol is None else tol
    return ExperimentResult(
        "relation_GW", _digest(spec, chain=len(mu_chain), pdmp=len(nu_pdmp),
                               per_point=per_point_draws, block=block),
        {"d_muG_nu": dG, "d_nuW_mu": dW, "noise_floor": floor, "tolerance": tol},
        verdicts=[Verdict("muG_vs_nu", dG <= tol, dG, tol, n),
                  Verdict("nuW_vs_mu", dW <= tol, dW, tol, n)])


def check_P_equals_GW(spec, rng, x, n=10**4, tol=0.03, c=1.0):
    """One chain step versus ``W`` after ``G`` from the same state."""
    if n < 1000:
        raise ValueError("need at least 1000 draws")
    ys = np.repeat(x.y[None], n, axis=0)
    regs = np.full(n, x.i)
    yP, rP, *_ = chain_step_batch(spec, rng, ys, regs)
    yG, rG = sample_G_batch(spec, rng, ys, regs)
    yW, rW = sample_W_batch(spec, rng, yG, rG)
    a = EmpiricalMeasure.uniform(yP, rP, c)
    b = EmpiricalMeasure.uniform(yW, rW, c)
    d = fm_distance_exact(a, b, max_support=None)
    verdicts = [Verdict("P_equals_GW", d <= tol, d, tol, n)]
    for j in range(spec.regime_count):
        fa, fb = float((rP == j).mean()), float((rW == j).mean())
        se = math.sqrt(max(fa * (1 - fa) + fb * (1 - fb), 1e-300) / n)
        verdicts.append(Verdict(f"regime_{j}_frequency", abs(fa - fb) <= 3 * se,
                                abs(fa - fb), 3 * se, n))
    return ExperimentResult("P_equals_GW", _digest(spec, n=n, state=list(x.y), regime=x.i),
                            {"distance": d}, verdicts=verdicts)


def default_checkpoints(n, start=100, count=12):
    pts = np.unique(np.round(np.geomspace(min(start, n), n, count)).astype(int))
    return pts[pts >= 1]


def _slope(ns, gaps):
    ok = gaps > 0
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(ns[ok]), np.log(gaps[ok]), 1)[0])


def slln_chain(spec, rng, f, x0, n, checkpoints=None, replicas=16, reference=None,
               tol=0.02, slope_range=(-0.75, -0.25)):
    """Running averages ``(1/m) sum_{k=1}^m f(X_k)`` for ``replicas`` chains.

    Replica 0 is the reported run; the root-mean-square gap over replicas
    feeds the slope test.  ``reference`` is ``<f, mu*>`` from an
    independent estimate.
    """
    if n < 1000:
        raise ValueError("n must be at least 1000")
    cps = default_checkpoints(n) if checkpoints is None else np.asarray(checkpoints)
    ys = np.repeat(x0.y[None], replicas, axis=0)
    regs = np.full(replicas, x0.i)
    sums = np.zeros(replicas)
    avg = np.empty((len(cps), replicas))
    marks = {int(k): m for m, k in enumerate(cps)}
    for k in range(1, n + 1):
        ys, regs, *_ = chain_step_batch(spec, rng, ys, regs)
        sums += f(ys, regs)
        if k in marks:
            avg[marks[k]] = sums / k
    return _slln_result("slln_chain", spec, cps, avg, reference, tol, slope_range,
                        {"n": n, "replicas": replicas})


def _slln_result(name, spec, cps, avg, reference, tol, slope_range, budgets):
    gaps = avg - reference
    rms = np.sqrt((gaps ** 2).mean(axis=1))
    slope = _slope(cps.astype(float), rms)
    final = float(abs(gaps[-1, 0]))
    verdicts = [Verdict("final_gap", final <= tol, final, tol, int(cps[-1])),
                Verdict("gap_slope", bool(slope_range[0] <= slope <= slope_range[1]),
                        slope, slope_range[1], len(cps), {"low": slope_range[0]})]
    return ExperimentResult(
        name, _digest(spec, **budgets),
        {"reference": reference, "final_average": float(avg[-1, 0]), "final_gap": final,
         "slope": slope},
        {"checkpoint": cps, "average": avg[:, 0], "rms_gap": rms}, verdicts)


def running_time_averages(path, f, ts):
    """``(1/t) int_0^t f`` at each ``t`` in ``ts`` from one set of segment integrals."""
    ts = np.asarray(ts, dtype=float)
    times = path.traj.times
    full = segment_integrals(path, f, path.horizon)
    cum = np.concatenate([[0.0], np.cumsum(full)])
    k = np.searchsorted(times, ts, side="right") - 1
    a = times[k]
    s, w, seg = _simpson_nodes(a, ts)
    ys = flow(path.spec, path.traj.regs[k][seg], s - a[seg], path.traj.ys[k][seg])
    part = np.bincount(seg, weights=f(np.atleast_2d(ys), path.traj.regs[k][seg]) * w,
                       minlength=len(ts))
    return (cum[k] + part) / ts


def slln_pdmp(spec, consts, rng, f, x0, horizon, checkpoints=None, replicas=16,
              reference=None, tol=0.03, slope_range=(-0.75, -0.25)):
    """Running time averages on ``replicas`` independent paths."""
    if not consts.lcal[1] == 0:
        raise ValueError("the continuous-time strong law needs a constant lcal "
                         "(flow-switching Lipschitz term independent of |y|)")
    cps = (default_checkpoints(int(horizon), 10) if checkpoints is None
           else np.asarray(checkpoints, dtype=float))
    cps = np.asarray(cps, dtype=float)
    avg = np.empty((len(cps), replicas))
    for r in range(replicas):
        path = simulate_pdmp(spec, rng, x0, horizon)
        avg[:, r] = running_time_averages(path, f, cps)
    return _slln_result("slln_pdmp", spec, cps, avg, reference, tol, slope_range,
                        {"horizon": horizon, "replicas": replicas})


def cd_conv_gap(spec, path, f, t, nodes=32):
    """Time average on ``[0, t]`` minus the mean of ``G f`` over pre-t post-jump states."""
    nt = count_jumps(path, t)
    if nt < 1:
        raise ValueError("no jump before t")
    Gf = apply_G_quadrature(spec, f, path.traj.ys[:nt], path.traj.regs[:nt], nodes)
    return float(segment_integrals(path, f, t).sum() / t - Gf.mean())


def martingale_diagnostics(spec, path, f, f_sup=1.0, nodes=32):
    """Increments ``int_{tau_k}^{tau_{k+1}} f - G f(Y_k, xi_k)/lambda`` over complete segments."""
    lam = spec.jump_rate
    n = count_jumps(path, path.horizon)
    if n < 100:
        raise ValueError("need at least 100 jumps")
    t_n = path.traj.times[n]
    seg = segment_integrals(path, f, t_n)[:n]
    Gf = apply_G_quadrature(spec, f, path.traj.ys[:n], path.traj.regs[:n], nodes)
    inc = seg - Gf / lam
    M = np.cumsum(inc)
    mean = float(inc.mean())
    sd = float(inc.std(ddof=1))
    se = sd / math.sqrt(n)
    second = float((inc ** 2).mean())
    bound = 6 * f_sup ** 2 / lam ** 2
    final = abs(M[-1]) / n
    verdicts = [
        Verdict("increment_mean", abs(mean) <= 3 * se, mean, 3 * se, n),
        Verdict("second_moment", second <= bound, second, bound, n),
        Verdict("M_over_n", final <= 3 * se, final, 3 * se, n),
    ]
    cps = default_checkpoints(n, 10)
    return ExperimentResult(
        "martingale", _digest(spec, jumps=n),
        {"mean": mean, "stderr": se, "second_moment": second, "bound": bound,
         "second_moment_se": float((inc ** 2).std(ddof=1) / math.sqrt(n))},
        {"checkpoint": cps, "M_over_n": M[cps - 1] / cps}, verdicts)


def simulate_to_time(spec, rng, ys, regs, t):
    """Independent copies of the process at time ``t``; returns ``(ys, regs, jumps)``."""
    ys = np.array(np.atleast_2d(ys), dtype=float)
    regs = np.array(regs, dtype=int).reshape(len(ys))
    n = len(ys)
    remaining = np.full(n, float(t))
    jumps = np.zeros(n, dtype=int)
    active = np.arange(n)
    while active.size:
        tau = exponential(rng, spec.jump_rate, active.size)
        stop = tau > remaining[active]
        done = active[stop]
        ys[done] = flow(spec, regs[done], remaining[done], ys[done])
        go = active[~stop]
        if go.size:
            pre = flow(spec, regs[go], tau[~stop], ys[go])
            theta = sample_theta(spec, rng, pre)
            h = spec.perturbation.sample(rng, go.size, spec.dim)
            post = spec.jump_map(theta, pre) + h
            regs[go] = switch(spec, rng, regs[go], post)
            ys[go] = post
            remaining[go] -= tau[~stop]
            jumps[go] += 1
        active = go
    return ys, regs, jumps


def one_jump_integral(spec, rng, f, x, t, s_nodes=32, theta_nodes=16, h_draws=32):
    """Integral over ``s`` in ``[0, t]`` of ``E f`` after flowing to ``s``, jumping once and flowing for ``t - s``.

    Gauss-Legendre in ``s`` and on the parameter box; the noise is averaged
    over ``h_draws`` samples and the regime sum is exact.
    """
    xs, ws = np.polynomial.legendre.leggauss(s_nodes)
    s = 0.5 * t * (xs + 1.0)
    ws = 0.5 * t * ws
    th, wt = theta_rule(spec.theta_low, spec.theta_high, theta_nodes)
    h = spec.perturbation.sample(rng, h_draws, spec.dim)
    S, Th, H = len(s), len(th), len(h)
    pre = flow(spec, x.i, s, np.repeat(x.y[None], S, axis=0))
    dens = spec.jump_density(np.repeat(pre, Th, axis=0), np.tile(th, (S, 1))).reshape(S, Th)
    post = spec.jump_map(np.tile(th, (S, 1)), np.repeat(pre, Th, axis=0))
    post = np.repeat(post, H, axis=0) + np.tile(h, (S * Th, 1))
    rest = np.repeat(t - s, Th * H)
    pi = spec.switch_probs(post)[:, x.i, :]
    total = np.zeros(len(post))
    for j in range(spec.regime_count):
        yj = flow(spec, j, rest, post)
        total += pi[:, j] * f(yj, np.full(len(post), j))
    inner = total.reshape(S, Th, H).mean(axis=2)
    return float(((inner * dens) @ wt) @ ws)


def short_time_check(spec, rng, f, x, t_grid, draws=10**5, seeds=5):
    """Monte Carlo semigroup at small times versus its zero/one-jump expansion.

    For each ``t``: the measured residual is the Monte Carlo estimate of
    ``E[f(X_t); N_t >= 2]``; the zero/one-jump part of the Monte Carlo
    estimate is compared with the quadrature expansion.  Residual over
    ``t`` must shrink with ``t`` in median over ``seeds`` runs.
    """
    lam = spec.jump_rate
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    if np.any(t_grid <= 0) or np.any(t_grid > 0.2 / lam + 1e-12):
        raise ValueError("t_grid must lie in (0, 0.2/lambda]")
    rows = []
    resid = np.empty((len(t_grid), seeds))
    verdicts = []
    for a, t in enumerate(t_grid):
        e0 = math.exp(-lam * t) * float(f(flow(spec, x.i, t, x.y)[None], np.array([x.i]))[0])
        e1 = lam * math.exp(-lam * t) * one_jump_integral(spec, rng, f, x, t)
        for s in range(seeds):
            ys, regs, nj = simulate_to_time(spec, rng, np.repeat(x.y[None], draws, axis=0),
                                            np.full(draws, x.i), t)
            v = f(ys, regs)
            tail = np.where(nj >= 2, v, 0.0)
            low = np.where(nj <= 1, v, 0.0)
            resid[a, s] = tail.mean()
            if s == 0:
                mc_low, se_low = float(low.mean()), float(low.std(ddof=1) / math.sqrt(draws))
                tail_se = float(tail.std(ddof=1) / math.sqrt(draws))
                freq = float((nj >= 2).mean())
        exact2 = 1 - math.exp(-lam * t) * (1 + lam * t)
        band = 3 * math.sqrt(exact2 * (1 - exact2) / draws)
        rows.append({"t": t, "expansion": e0 + e1, "mc_low": mc_low, "mc_low_se": se_low,
                     "residual": float(resid[a, 0]), "residual_se": tail_se,
                     "two_jump_freq": freq, "two_jump_exact": exact2})
        verdicts.append(Verdict(f"expansion_t{t:g}", abs(mc_low - e0 - e1) <= 3 * se_low + 1e-9,
                                abs(mc_low - e0 - e1), 3 * se_low, draws))
        verdicts.append(Verdict(f"two_jump_mass_t{t:g}", abs(freq - exact2) <= band,
                                freq, exact2, draws, {"band": band}))
    med = np.median(resid, axis=1) / t_grid
    mono = bool(np.all(np.diff(med) > 0))
    verdicts.append(Verdict("residual_over_t_shrinks", mono, float(med[0]), float(med[-1]),
                            draws * seeds))
    return ExperimentResult(
        "short_time", _digest(spec, draws=draws, seeds=seeds, state=list(x.y), regime=x.i),
        {"x_regime": x.i},
        {"t": t_grid, "median_residual_over_t": med,
         "residual": np.array([r["residual"] for r in rows]),
         "expansion": np.array([r["expansion"] for r in rows]),
         "mc_low": np.array([r["mc_low"] for r in rows]),
         "two_jump_freq": np.array([r["two_jump_freq"] for r in rows]),
         "two_jump_exact": np.array([r["two_jump_exact"] for r in rows])},
        verdicts)


def convergence_experiment(spec, seed, x_a, x_b, c, checkpoints=(1, 2, 4, 8, 16, 32),
                           replicas=10**4, subsample=250, shared=True, r2_min=0.9):
    """Distances between ensembles started at ``x_a`` and ``x_b``.

    With ``shared`` both ensembles consume the same random stream (common
    random numbers).  At each checkpoint the exact distance is computed on
    the first ``subsample`` replicas of each ensemble, both on the hybrid
    space and marginalized to the continuous coordinate; the identity-
    matching bound over all replicas is reported alongside.
    """
    cps = sorted(int(k) for k in checkpoints)
    ens = []
    for side, x in enumerate((x_a, x_b)):
        rng = make_rng(seed, 1 if shared else 1 + side)
        ys = np.repeat(x.y[None], replicas, axis=0)
        regs = np.full(replicas, x.i)
        _, snaps = simulate_ensemble(spec, rng, ys, regs, cps[-1], cps)
        ens.append(snaps)
    joint, marg, bound = [], [], []
    for k in cps:
        (ya, ra), (yb, rb) = ens[0][k], ens[1][k]
        a = EmpiricalMeasure.uniform(ya[:subsample], ra[:subsample], c)
        b = EmpiricalMeasure.uniform(yb[:subsample], rb[:subsample], c)
        joint.append(fm_distance_exact(a, b))
        marg.append(fm_distance_exact(marginalize_Y(a), marginalize_Y(b)))
        bound.append(paired_bound(EmpiricalMeasure.uniform(ya, ra, c),
                                  EmpiricalMeasure.uniform(yb, rb, c)))
    joint, marg, bound = map(np.array, (joint, marg, bound))
    if np.count_nonzero(joint > 0) >= 5:
        fit = fit_geometric_rate(cps, joint)
        beta, C, r2 = fit.beta_raw, fit.C, fit.r2
        fitted = [Verdict("beta_below_one", beta < 1, beta, 1.0, len(cps)),
                  Verdict("fit_r2", r2 >= r2_min, r2, r2_min, len(cps))]
    else:
        # the ensembles already agree; there is nothing to fit
        beta = C = r2 = math.nan
        why = {"reason": "too few positive distances"}
        fitted = [Verdict("beta_below_one", None, beta, 1.0, len(cps), why),
                  Verdict("fit_r2", None, r2, r2_min, len(cps), dict(why))]
    verdicts = fitted + [
        Verdict("marginal_below_joint", bool(np.all(marg <= joint + 1e-12)),
                float(np.max(marg - joint)), 0.0, len(cps)),
    ]
    return ExperimentResult(
        "convergence", _digest(spec, seed=seed, replicas=replicas, subsample=subsample,
                               shared=shared, start_a=list(x_a.y), start_b=list(x_b.y)),
        {"beta": beta, "C": C, "r2": r2},
        {"n": np.array(cps), "joint": joint, "marginal": marg, "paired_bound": bound}, verdicts)
