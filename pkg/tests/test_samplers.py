import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdmpkit import (EmpiricalMeasure, HybridState, apply_G_quadrature, chain_step,
                     fm_distance_exact, make_rng, sample_G, sample_holding_time, sample_W,
                     simulate_chain, simulate_pdmp, time_average)
from pdmpkit._rng import exponential
from pdmpkit.samplers import (ChainTrajectory, PdmpPath, chain_step_batch, count_jumps,
                              sample_G_batch, sample_W_batch, sample_jump, segment_integrals)

from conftest import decay_spec


class Half:
    def random(self, size=None):
        return np.full(size, 0.5) if size else 0.5


def test_holding_time_inverse_cdf():
    assert exponential(Half(), 1.0) == pytest.approx(math.log(2))


def test_holding_time_moments(rng):
    t = sample_holding_time(rng, 2.0, 10**5)
    assert abs(t.mean() - 0.5) < 0.01
    s = sample_holding_time(rng, 1.0, 10**5)
    assert abs((s > 1).mean() - math.exp(-1)) < 0.01
    with pytest.raises(ValueError):
        sample_holding_time(rng, 0.0)


def test_uniform_burst_mean(rng):
    th, h = sample_jump(decay_spec(), rng, np.zeros((10**5, 1)))
    assert abs(th.mean() - 0.5) < 0.005
    assert np.all(h == 0)


def test_truncexp_burst_mean(rng):
    from pdmpkit import ModelSpec
    from pdmpkit.densities import BurstDensity
    dens = BurstDensity("truncexp", 1.0, 1, 1.0, 1.0)
    spec = ModelSpec(1, 1, lambda th, y: y + th, [0.0], [1.0], dens, 1.0,
                     density_max=dens.p_max, flow_map=lambda i, t, y: y.copy())
    th, _ = sample_jump(spec, rng, np.zeros((10**5, 1)))
    assert abs(th.mean() - (1 - 2 / math.e) / (1 - 1 / math.e)) < 0.005


def test_single_regime_stays(rng):
    spec = decay_spec()
    _, j, *_ = chain_step_batch(spec, rng, np.ones((1000, 1)), np.zeros(1000, dtype=int))
    assert np.all(j == 0)


def test_gene_jumps_only_add(gene, rng):
    _, spec, _ = gene
    ys = rng.random((5000, 2)) * 4
    y1, _, t, _, _ = chain_step_batch(spec, rng, ys, np.zeros(5000, dtype=int))
    assert np.all(y1 >= ys * np.exp(-2.0 * t)[:, None] - 1e-12)


def test_P_matches_GW_one_dim(rng):
    spec = decay_spec(eps=0.05, regimes=2)
    x = HybridState([1.0], 1)
    n = 10**4
    ys = np.repeat(x.y[None], n, 0)
    regs = np.full(n, 1)
    y1, j1, *_ = chain_step_batch(spec, make_rng(1), ys, regs)
    g, gr = sample_G_batch(spec, make_rng(2), ys, regs)
    y2, j2 = sample_W_batch(spec, make_rng(3), g, gr)
    d = fm_distance_exact(EmpiricalMeasure.uniform(y1, j1, 1.0),
                          EmpiricalMeasure.uniform(y2, j2, 1.0), max_support=None)
    assert d <= 0.02


def test_simulate_chain_zero_steps(gene, origin2, rng):
    tr = simulate_chain(gene[1], rng, origin2, 0)
    assert len(tr) == 1 and tr.state(0) == origin2


def test_replay_bit_identical(gene, origin2):
    a = simulate_chain(gene[1], make_rng(5), origin2, 200)
    b = simulate_chain(gene[1], make_rng(5), origin2, 200)
    assert np.array_equal(a.ys, b.ys) and np.array_equal(a.times, b.times)


def test_gene_nonnegative(gene, origin2, rng):
    tr = simulate_chain(gene[1], rng, origin2, 2000)
    assert tr.ys.min() >= 0


def test_chain_step_single(toy, rng):
    x = chain_step(toy[1], rng, HybridState([0.5], 1))
    assert x.i in (0, 1) and x.y.shape == (1,)


def test_path_anchors(toy, rng):
    path = simulate_pdmp(toy[1], rng, HybridState([0.0], 0), 30.0)
    tr = path.traj
    inside = tr.times[1:-1]
    ys, regs = path.at(inside)
    assert np.allclose(ys, tr.ys[1:-1]) and np.array_equal(regs, tr.regs[1:-1])
    assert tr.times[-1] > 30.0 >= tr.times[-2]


def test_path_before_first_jump(toy, rng):
    from pdmpkit import flow
    spec = toy[1]
    path = simulate_pdmp(spec, rng, HybridState([3.0], 1), 50.0)
    t1 = path.traj.times[1]
    ts = np.linspace(0, t1, 7, endpoint=False)
    ys, regs = path.at(ts)
    assert np.allclose(ys[:, 0], flow(spec, 1, ts, np.full((7, 1), 3.0))[:, 0])
    assert np.all(regs == 1)


def test_count_jumps_poisson_mean():
    spec = decay_spec(lam=2.0)
    counts = [count_jumps(simulate_pdmp(spec, make_rng(7, s), HybridState([0.0]), 3.0), 3.0)
              for s in range(1000)]
    assert abs(np.mean(counts) - 6.0) < 0.25


def test_G_keeps_regime(toy, rng):
    ys = rng.random((500, 1))
    regs = rng.integers(0, 2, 500)
    _, r = sample_G_batch(toy[1], rng, ys, regs)
    assert np.array_equal(r, regs)
    assert sample_G(toy[1], rng, HybridState([1.0], 1)).i == 1


def test_W_uniform_mean(rng):
    spec = decay_spec()
    ys = np.full((10**5, 1), 2.0)
    y1, _ = sample_W_batch(spec, rng, ys, np.zeros(10**5, dtype=int))
    assert abs((y1 - ys).mean() - 0.5) < 0.005
    assert sample_W(spec, rng, HybridState([0.0])).y[0] <= 1.0


def test_G_quadrature():
    spec = decay_spec()
    one = apply_G_quadrature(spec, lambda y, r: np.ones(len(y)), [[2.0]], [0])
    assert abs(one[0] - 1) < 1e-12
    v = apply_G_quadrature(spec, lambda y, r: y[:, 0], [[2.0]], [0])
    assert v[0] == pytest.approx(1.0, abs=1e-6)


def test_G_quadrature_regime_indicator(toy):
    f = lambda y, r: (r == 1).astype(float)
    v = apply_G_quadrature(toy[1], f, [[0.3], [0.3]], [0, 1])
    assert np.allclose(v, [0.0, 1.0])


def test_G_quadrature_matches_mc(toy, rng):
    spec = toy[1]
    f = lambda y, r: np.sin(y[:, 0]) + r
    q = apply_G_quadrature(spec, f, [[1.5]], [1])[0]
    g, gr = sample_G_batch(spec, rng, np.full((10**5, 1), 1.5), np.ones(10**5, dtype=int))
    v = f(g, gr)
    assert abs(v.mean() - q) < 4 * v.std() / math.sqrt(len(v))


def _no_jump_path():
    spec = decay_spec()
    tr = ChainTrajectory(np.array([[1.0], [2.0]]), np.array([0, 0]), np.array([0.0, 5.0]),
                         np.zeros((1, 1)), np.zeros((1, 1)))
    return PdmpPath(spec, tr, 1.0)


def test_time_average_analytic():
    path = _no_jump_path()
    assert time_average(path, lambda y, r: np.ones(len(y)), 1.0) == pytest.approx(1.0, abs=1e-14)
    assert time_average(path, lambda y, r: y[:, 0], 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-6)


def test_time_average_additive(toy, rng):
    path = simulate_pdmp(toy[1], rng, HybridState([0.0]), 20.0)
    f = lambda y, r: np.cos(y[:, 0]) + r
    seg = segment_integrals(path, f, 20.0)
    assert abs(seg.sum() / 20.0 - time_average(path, f, 20.0)) < 1e-10


def test_time_average_const(toy, rng):
    path = simulate_pdmp(toy[1], rng, HybridState([0.0]), 20.0)
    for t in (0.3, 7.0, 20.0):
        assert time_average(path, lambda y, r: np.full(len(y), 2.5), t) == pytest.approx(2.5)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_chain_states_stay_in_set(seed):
    from pdmpkit.gene import OperonModel, build_operon_spec
    spec = build_operon_spec(OperonModel(d=1, rates=(1.0,), eps=0.1, perturbation="cube"))
    tr = simulate_chain(spec, make_rng(seed), HybridState([0.0]), 50)
    assert tr.ys.min() >= 0 and np.all(np.diff(tr.times) > 0)
