import math

import numpy as np
import pytest

from pdmpkit import EmpiricalMeasure, HybridState, fm_distance_exact, make_rng, simulate_pdmp
from pdmpkit.ergodic import (cd_conv_gap, check_P_equals_GW, convergence_experiment,
                             equal_times, estimate_invariant_chain, estimate_invariant_pdmp,
                             invariant_ensemble, martingale_diagnostics, poisson_times,
                             one_jump_integral, running_time_averages, short_time_check,
                             simulate_to_time, slln_chain, slln_pdmp)
from pdmpkit.metrics import fm_distance_subsampled, lyapunov_moment
from pdmpkit.samplers import chain_step_batch, time_average

from conftest import decay_spec

one = lambda y, r: np.ones(len(y))
zero = lambda y, r: np.zeros(len(y))
bounded = lambda y, r: np.minimum(1.0, np.linalg.norm(y, axis=1))


def test_chain_estimate_single_step(gene, origin2):
    mu = estimate_invariant_chain(gene[1], make_rng(1), origin2, 1.0, burn_in=0, n=1, thin=1)
    y1, r1, *_ = chain_step_batch(gene[1], make_rng(1), origin2.y[None], [0])
    assert len(mu) == 1 and np.allclose(mu.ys[0], y1[0])


def test_chain_estimates_agree_across_seeds(gene, origin2):
    a = estimate_invariant_chain(gene[1], make_rng(1), origin2, 1.0, 1000, 20000, 1)
    b = estimate_invariant_chain(gene[1], make_rng(2), origin2, 1.0, 1000, 20000, 1)
    d, _ = fm_distance_subsampled(a, b, make_rng(3), 2000, 3)
    assert d <= 0.1


def test_lyapunov_moment_bound(gene, gene_consts, origin2):
    mu = estimate_invariant_chain(gene[1], make_rng(4), origin2, 1.0, 1000, 20000, 1)
    v = np.linalg.norm(mu.ys, axis=1)
    bound = gene_consts.b / (1 - gene_consts.a) + 3 * v.std() / math.sqrt(len(v))
    assert lyapunov_moment(mu, [0, 0]) <= bound
    other = estimate_invariant_chain(gene[1], make_rng(5), origin2, 1.0, 1000, 20000, 1)
    assert lyapunov_moment(other, [0, 0]) == pytest.approx(lyapunov_moment(mu, [0, 0]), rel=0.1)


def test_pdmp_estimate_at_jump_times_is_chain(toy):
    spec = toy[1]
    path = simulate_pdmp(spec, make_rng(6), HybridState([0.0]), 100.0)
    tk = path.traj.times[10:-1]
    ys, regs = path.at(tk)
    assert np.allclose(ys, path.traj.ys[10:-1]) and np.array_equal(regs, path.traj.regs[10:-1])


def test_equal_vs_poisson_times(gene, origin2):
    spec = gene[1]
    a = estimate_invariant_pdmp(spec, make_rng(7), origin2, 4000.0, equal_times(100, 4000, 4000), 1.0)
    b = estimate_invariant_pdmp(spec, make_rng(8), origin2, 4000.0,
                                poisson_times(make_rng(9), 100, 4000, 4000), 1.0)
    d, _ = fm_distance_subsampled(a, b, make_rng(10), 2000, 3)
    assert d <= 0.1


def test_single_regime_samples(origin2, gene):
    mu = estimate_invariant_pdmp(gene[1], make_rng(1), origin2, 50.0, equal_times(5, 50, 100), 1.0)
    assert np.all(mu.regs == 0)


def test_P_equals_GW_degenerate():
    spec = decay_spec()
    res = check_P_equals_GW(spec, make_rng(11), HybridState([1.0]), 5000, tol=0.05)
    assert res.passed


def test_P_equals_GW_regimes(toy):
    res = check_P_equals_GW(toy[1], make_rng(12), HybridState([0.5], 1), 5000, tol=0.05)
    assert all(v.passed for v in res.verdicts if v.name.startswith("regime"))


def test_slln_trivial(gene, origin2):
    res = slln_chain(gene[1], make_rng(13), one, origin2, 1000, replicas=2, reference=1.0)
    assert res.scalars["final_gap"] == 0
    res = slln_chain(decay_spec(), make_rng(13), lambda y, r: (r == 0).astype(float),
                     HybridState([0.0]), 1000, replicas=2, reference=1.0)
    assert res.scalars["final_average"] == 1.0


def test_slln_chain_gene(gene, origin2):
    ref = invariant_ensemble(gene[1], make_rng(14), 1.0, 1000, 200).integrate(bounded)
    res = slln_chain(gene[1], make_rng(15), bounded, origin2, 20000, replicas=8, reference=ref,
                     tol=0.03)
    assert res.passed, res.scalars


def test_slln_pdmp_constant(gene, gene_consts, origin2):
    res = slln_pdmp(gene[1], gene_consts, make_rng(16), one, origin2, 100.0, replicas=2,
                    reference=1.0)
    assert res.scalars["final_gap"] < 1e-12


def test_slln_pdmp_needs_constant_lcal(gene, gene_consts, origin2):
    from dataclasses import replace
    with pytest.raises(ValueError):
        slln_pdmp(gene[1], replace(gene_consts, lcal=(0.0, 1.0)), make_rng(1), one, origin2, 10.0)


def test_running_averages_match_direct(toy):
    path = simulate_pdmp(toy[1], make_rng(17), HybridState([0.0]), 50.0)
    f = lambda y, r: np.cos(y[:, 0]) + r
    ts = np.array([0.5, 3.0, 17.2, 50.0])
    direct = [time_average(path, f, t) for t in ts]
    assert np.allclose(running_time_averages(path, f, ts), direct, atol=1e-10)


def test_cd_gap_constant(toy):
    path = simulate_pdmp(toy[1], make_rng(18), HybridState([0.0]), 100.0)
    assert abs(cd_conv_gap(toy[1], path, lambda y, r: np.full(len(y), 0.7), 100.0)) < 1e-12


def test_cd_gap_shrinks(gene, origin2):
    small, big = [], []
    for s in range(20):
        path = simulate_pdmp(gene[1], make_rng(19, s), origin2, 400.0)
        small.append(abs(cd_conv_gap(gene[1], path, bounded, 100.0)))
        big.append(abs(cd_conv_gap(gene[1], path, bounded, 400.0)))
    assert np.median(big) <= np.median(small)


def test_martingale_zero_and_one(gene, origin2):
    path = simulate_pdmp(gene[1], make_rng(20), origin2, 2000.0)
    res = martingale_diagnostics(gene[1], path, zero)
    assert res.scalars["second_moment"] == 0
    res = martingale_diagnostics(gene[1], path, one)
    assert res.passed
    assert res.scalars["second_moment"] == pytest.approx(1.0, rel=0.15)


def test_martingale_gene(gene, origin2):
    path = simulate_pdmp(gene[1], make_rng(21), origin2, 10**4)
    assert martingale_diagnostics(gene[1], path, bounded).passed


def test_simulate_to_time_jump_counts():
    spec = decay_spec(lam=2.0)
    _, _, nj = simulate_to_time(spec, make_rng(22), np.zeros((20000, 1)), np.zeros(20000), 1.5)
    assert abs(nj.mean() - 3.0) < 4 * math.sqrt(3.0 / 20000)


def test_psi1_against_brute_force():
    spec = decay_spec(rate=1.0, lam=1.0)
    f = lambda y, r: np.sin(y[:, 0])
    x, t = HybridState([0.8]), 0.2
    q = one_jump_integral(spec, make_rng(1), f, x, t)
    r = make_rng(23)
    n = 4 * 10**5
    s = r.random(n) * t
    th = r.random(n)
    y = (0.8 * np.exp(-s) + th) * np.exp(-(t - s))
    v = t * np.sin(y)
    assert abs(v.mean() - q) <= 3 * v.std() / math.sqrt(n)


def test_short_time_one(toy):
    res = short_time_check(toy[1], make_rng(24), one, HybridState([0.5], 0),
                           [0.02, 0.05, 0.1, 0.2], 20000, 3)
    assert all(v.passed for v in res.verdicts if v.name.startswith("two_jump"))
    assert np.allclose(res.series["expansion"] + res.series["two_jump_exact"], 1.0, atol=1e-9)


def test_short_time_grid_guard(toy):
    with pytest.raises(ValueError):
        short_time_check(toy[1], make_rng(1), one, HybridState([0.0]), [0.5], 100, 1)


def test_convergence_same_start(gene, origin2):
    res = convergence_experiment(gene[1], 3, origin2, origin2, 1.0, replicas=500)
    assert np.all(res.series["joint"] == 0)


def test_convergence_marginal_below_joint(toy):
    res = convergence_experiment(toy[1], 4, HybridState([0.0], 0), HybridState([3.0], 1),
                                 1.0, replicas=2000, subsample=200)
    assert res.verdict("marginal_below_joint").passed
