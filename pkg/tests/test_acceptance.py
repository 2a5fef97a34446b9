"""Acceptance criteria, one test each, at their stated tolerances and budgets.

Each test prints a single ``ACCEPTANCE`` line; the lines are repeated in the
terminal summary.
"""

import math
import time

import numpy as np
import pytest

from pdmpkit import (EmpiricalMeasure, HybridState, derive_constants, fm_distance_dictionary,
                     fm_distance_exact, make_rng, rho_c, simulate_pdmp)
from pdmpkit.cli import SUBCOMMANDS, execute, replay
from pdmpkit.core import sample_states
from pdmpkit.coupling import coupled_step_batch, sample_Q_batch, verify_B_conditions
from pdmpkit.ergodic import (cd_conv_gap, check_P_equals_GW, check_relation_G,
                             convergence_experiment, equal_times, estimate_invariant_chain,
                             estimate_invariant_pdmp, invariant_ensemble, martingale_diagnostics,
                             short_time_check, slln_chain, slln_pdmp)
from pdmpkit.gene import (OperonModel, build_operon_spec, flow_contraction_check,
                          stationary_mean_1d, verify_dissipativity)
from pdmpkit.metrics import default_dictionary
from pdmpkit.samplers import chain_step_batch, monte_carlo_PV

LINES = []
SEED = 20261016


def record(number, name, ok, detail, elapsed, budget):
    within = elapsed <= budget
    line = (f"ACCEPTANCE {number:>2} {name}: {'PASS' if ok and within else 'FAIL'} "
            f"({detail}; {elapsed:.1f}s of {budget:g}s)")
    LINES.append(line)
    print(line)
    assert ok, line
    assert within, line


bounded = lambda y, r: np.minimum(1.0, np.linalg.norm(y, axis=1))


@pytest.fixture(scope="module")
def model():
    spec = build_operon_spec(OperonModel())
    from pdmpkit.gene import operon_inputs
    consts = derive_constants(spec, operon_inputs(OperonModel()), make_rng(SEED, 0))
    return spec, consts


def test_01_drift(model):
    t0 = time.time()
    spec, k = model
    r = make_rng(SEED, 1)
    ys = sample_states(spec, r, 50, k.M)
    pv, se = monte_carlo_PV(spec, r, ys, np.zeros(50, dtype=int), 10**4)
    rhs = k.a * k.V(ys) + k.b + 3 * se
    worst = float(np.max(pv - rhs))
    record(1, "drift", bool(np.all(pv <= rhs)),
           f"max PV - (aV + b + 3se) = {worst:.4f}, a = {k.a:.3f}, b = {k.b:.4f}",
           time.time() - t0, 60)


def test_02_coupling_contraction(model):
    t0 = time.time()
    spec, k = model
    rep = verify_B_conditions(spec, k, make_rng(SEED, 2), pairs=50, draws=10**4,
                              states=10, pv_draws=1000)
    v = rep["contraction"]
    y = np.repeat([[0.7, 0.3]], 10**4, axis=0)
    z = np.zeros(10**4, dtype=int)
    acc, w1, j1, w2, j2, _ = sample_Q_batch(spec, make_rng(SEED, 3), y, z, y, z)
    diag = bool(acc.all() and np.array_equal(w1, w2))
    record(2, "coupling_contraction", bool(v.passed) and diag,
           f"worst pair {v.value:.4f} vs q*rho = {v.bound:.4f}; diagonal acceptance {acc.mean()}",
           time.time() - t0, 120)


def test_03_coupling_marginals(toy, toy_consts):
    # the switching model: distinct pairs reach the residual branch
    t0 = time.time()
    spec, c = toy[1], toy_consts.c
    n = 10**4
    starts = [((0.0, 0), (1.0, 1)), ((0.5, 1), (2.5, 0)), ((1.8, 0), (1.9, 0)),
              ((3.0, 1), (-0.5, 1)), ((0.2, 0), (0.2, 1))]
    worst, residual = 0.0, []
    for m, ((a, ia), (b, ib)) in enumerate(starts):
        y1, y2 = np.full((n, 1), a), np.full((n, 1), b)
        r1, r2 = np.full(n, ia), np.full(n, ib)
        w1, j1, w2, j2, via, _ = coupled_step_batch(spec, make_rng(SEED, 30, m), y1, r1, y2, r2)
        residual.append(1 - via.mean())
        for w, j, y0, r0, side in ((w1, j1, y1, r1, 0), (w2, j2, y2, r2, 1)):
            p, pj, *_ = chain_step_batch(spec, make_rng(SEED, 31, m, side), y0, r0)
            d = fm_distance_exact(EmpiricalMeasure.uniform(w, j, c),
                                  EmpiricalMeasure.uniform(p, pj, c), max_support=None)
            worst = max(worst, d)
    record(3, "coupling_marginals", worst <= 0.03,
           f"max FM {worst:.4f} over 5 pairs x 2 sides; residual share "
           f"{min(residual):.2f}..{max(residual):.2f}", time.time() - t0, 120)


def test_04_convergence(model):
    t0 = time.time()
    spec, k = model
    res = convergence_experiment(spec, SEED, HybridState([0, 0]), HybridState([5, 5]), k.c,
                                 replicas=10**4)
    j, m = res.series["joint"], res.series["marginal"]
    record(4, "convergence", res.passed,
           f"beta = {res.scalars['beta']:.3f}, R2 = {res.scalars['r2']:.4f}, "
           f"joint = {np.round(j, 4).tolist()}, marginal <= joint: "
           f"{res.verdict('marginal_below_joint').status}", time.time() - t0, 300)


def test_05_fm_oracle():
    t0 = time.time()
    r = make_rng(SEED, 5)
    c = 1.5
    err = 0.0
    for _ in range(100):
        x = HybridState(r.normal(size=2), r.integers(0, 2))
        y = HybridState(x.y + r.normal(size=2) * r.choice([0.1, 1.0]), r.integers(0, 2))
        d = fm_distance_exact(EmpiricalMeasure.from_states([x], c),
                              EmpiricalMeasure.from_states([y], c))
        err = max(err, abs(d - min(2.0, rho_c(x, y, c))))
    axiom = 0.0
    lower_ok = True

    def cloud():
        n = r.integers(3, 12)
        w = r.random(n) + 0.05
        return EmpiricalMeasure(r.normal(size=(n, 2)), r.integers(0, 2, n), w / w.sum(), c)

    for _ in range(100):
        a, b, e = cloud(), cloud(), cloud()
        ab, ba = fm_distance_exact(a, b), fm_distance_exact(b, a)
        ae, be = fm_distance_exact(a, e), fm_distance_exact(b, e)
        axiom = max(axiom, abs(ab - ba), ae - ab - be, -ab, fm_distance_exact(a, a))
        lower_ok &= fm_distance_dictionary(a, b, default_dictionary(a, b, r), r) <= ab + 1e-12
    ok = err <= 1e-8 and axiom <= 1e-8 and lower_ok
    record(5, "fm_oracle", ok, f"dirac error {err:.2e}, axiom violation {axiom:.2e}, "
           f"dictionary below exact: {lower_ok}", time.time() - t0, 30)


def test_06_correspondence(model):
    t0 = time.time()
    spec, k = model
    x0 = HybridState([0, 0])
    n = 10**5
    mu = estimate_invariant_chain(spec, make_rng(SEED, 61), x0, k.c, 1000, n, 1)
    horizon = 1000.0 + n
    nu = estimate_invariant_pdmp(spec, make_rng(SEED, 62), x0, horizon,
                                 equal_times(1000.0, horizon, n), k.c)
    rel = check_relation_G(spec, make_rng(SEED, 63), mu, nu, 16, 0.08)
    states = [(0, 0), (0, 1), (1, 1), (3, 0.5), (0.2, 2)]
    pg = [check_P_equals_GW(spec, make_rng(SEED, 64, m), HybridState(y), 10**4, 0.03, k.c)
          for m, y in enumerate(states)]
    dmax = max(p.scalars["distance"] for p in pg)
    ok = rel.passed and all(p.verdict("P_equals_GW").passed for p in pg)
    record(6, "correspondence", ok,
           f"d(muG, nu) = {rel.scalars['d_muG_nu']:.4f}, d(nuW, mu) = {rel.scalars['d_nuW_mu']:.4f} "
           f"(tol 0.08); max P vs GW = {dmax:.4f} (tol 0.03)", time.time() - t0, 600)


def test_07_strong_laws(model):
    t0 = time.time()
    spec, k = model
    x0 = HybridState([0, 0])
    ref_chain = invariant_ensemble(spec, make_rng(SEED, 71), k.c, 1000, 200).integrate(bounded)
    ch = slln_chain(spec, make_rng(SEED, 72), bounded, x0, 10**5, replicas=16,
                    reference=ref_chain, tol=0.02)
    long = 10**5
    nu = estimate_invariant_pdmp(spec, make_rng(SEED, 73), x0, long,
                                 equal_times(100, long, 10**5), k.c)
    ct = slln_pdmp(spec, k, make_rng(SEED, 74), bounded, x0, 10**4 / spec.jump_rate,
                   replicas=4, reference=nu.integrate(bounded), tol=0.03)
    ok = ch.passed and ct.verdict("final_gap").passed
    record(7, "strong_laws", ok,
           f"chain gap {ch.scalars['final_gap']:.4f} (tol 0.02), slope {ch.scalars['slope']:.3f}; "
           f"process gap {ct.scalars['final_gap']:.4f} (tol 0.03)", time.time() - t0, 600)


def test_08_martingale(model):
    t0 = time.time()
    spec, k = model
    x0 = HybridState([0, 0])
    t = 10**3 / spec.jump_rate
    g1, g4 = [], []
    for s in range(100):
        path = simulate_pdmp(spec, make_rng(SEED, 81, s), x0, 4 * t)
        g1.append(abs(cd_conv_gap(spec, path, bounded, t)))
        g4.append(abs(cd_conv_gap(spec, path, bounded, 4 * t)))
    within = int(np.sum(np.array(g1) <= 0.05))
    path = simulate_pdmp(spec, make_rng(SEED, 82), x0, 10**5 / spec.jump_rate)
    mf = martingale_diagnostics(spec, path, bounded, f_sup=1.0)
    m1 = martingale_diagnostics(spec, path, lambda y, r: np.ones(len(y)), f_sup=1.0)
    second = m1.scalars["second_moment"]
    one_ok = abs(second - 1 / spec.jump_rate ** 2) <= 0.05 / spec.jump_rate ** 2
    ok = (within >= 90 and np.median(g4) <= np.median(g1) and mf.verdict("increment_mean").passed
          and mf.verdict("second_moment").passed and one_ok)
    record(8, "martingale", ok,
           f"{within}/100 seeds within 0.05, median {np.median(g1):.4f} -> {np.median(g4):.4f}; "
           f"increment mean {mf.scalars['mean']:.2e} (3se {3 * mf.scalars['stderr']:.2e}), "
           f"second moment {mf.scalars['second_moment']:.4f}; f=1 second moment {second:.4f}",
           time.time() - t0, 300)


def test_09_short_time(model):
    t0 = time.time()
    spec, _ = model
    lam = spec.jump_rate
    grid = np.array([0.02, 0.05, 0.1, 0.2]) / lam
    x = HybridState([0.5, 0.5])
    one = short_time_check(spec, make_rng(SEED, 91), lambda y, r: np.ones(len(y)), x, grid,
                           10**5, 5)
    resid = one.series["residual"]
    exact = 1 - np.exp(-lam * grid) * (1 + lam * grid)
    band = 3 * np.sqrt(exact * (1 - exact) / 10**5)
    lip = short_time_check(spec, make_rng(SEED, 92), lambda y, r: np.minimum(1.0, y[:, 0]), x,
                           grid, 10**5, 5)
    ok = bool(np.all(np.abs(resid - exact) <= band)) and lip.verdict("residual_over_t_shrinks").passed
    record(9, "short_time", ok,
           f"max |residual - exact| / band = {np.max(np.abs(resid - exact) / band):.2f}; "
           f"median residual/t {np.round(lip.series['median_residual_over_t'], 4).tolist()}",
           time.time() - t0, 180)


def test_10_gene_analytics():
    t0 = time.time()
    m = OperonModel(d=1, rates=(1.0,), jump_rate=1.0, width=1.0, eps=0.0, perturbation="point")
    spec = build_operon_spec(m)
    nu = estimate_invariant_pdmp(spec, make_rng(SEED, 101), HybridState([0.0]), 2.0e4,
                                 equal_times(100, 2.0e4, 2 * 10**4), 1.0)
    mean = float(nu.ys.mean())
    target = stationary_mean_1d(m)
    fc = flow_contraction_check(build_operon_spec(OperonModel()), 1.0, make_rng(SEED, 102))
    diag = verify_dissipativity(lambda y: y * np.array([1.0, 3.0]), make_rng(SEED, 103), 2)
    ok = abs(mean - target) <= 0.05 and fc.passed and abs(diag - 1) <= 1e-6
    record(10, "gene_analytics", ok,
           f"mean {mean:.4f} vs {target}; contraction ratio {fc.value:.9f}; "
           f"dissipativity {diag:.9f}", time.time() - t0, 120)


SMALL = """
[model]
family = {family}
{model}
[budget]
steps = 1000
horizon = 60
samples = 400
replicas = 200
draws = 2000
pairs = 100
states = 10
grid = 40
mc = 200
seeds = 2
burn_in = 100
max_steps = 50
[experiment]
checkpoints = 1, 2, 4, 8, 16
"""


def test_11_reproducibility(tmp_path):
    t0 = time.time()
    configs = {
        "switching": SMALL.format(family="switching", model="switch_rows = 0.7 0.3; 0.4 0.6"),
        "operon": SMALL.format(family="operon", model="d = 2\nrates = 1, 2"),
    }
    bad = []
    for cmd in SUBCOMMANDS:
        cfg = configs["operon" if cmd == "operon-demo" else "switching"]
        status, m = execute(cmd, cfg, SEED, str(tmp_path / cmd))
        if status == 2:
            bad.append(f"{cmd}: {m.get('error')}")
            continue
        same, diffs = replay(tmp_path / cmd / "manifest.json", str(tmp_path / (cmd + "_replay")))
        if not same or not m["outputs"]:
            bad.append(f"{cmd}: {diffs}")
    record(11, "reproducibility", not bad,
           f"{len(SUBCOMMANDS) - len(bad)}/{len(SUBCOMMANDS)} subcommands replay byte-identical"
           + (f"; {bad}" if bad else ""), time.time() - t0, 600)
