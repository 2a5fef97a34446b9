import math

import numpy as np
import pytest

from pdmpkit import HybridState, derive_constants, flow, make_rng
from pdmpkit.ergodic import equal_times, estimate_invariant_pdmp
from pdmpkit.gene import (NotDissipative, OperonModel, build_operon_spec, flow_contraction_check,
                          operon_inputs, stationary_mean_1d, verify_dissipativity)


def linear(rates):
    r = np.asarray(rates, dtype=float)
    return lambda y: y * r


def test_contraction_value_lambda_two():
    m = OperonModel(d=1, rates=(1.0,), jump_rate=2.0, eps=0.0)
    k = derive_constants(build_operon_spec(m), operon_inputs(m), make_rng(1), grid=40, mc=400)
    assert dict(k.to_pairs())["contractivity"] == pytest.approx(0.5)
    assert k.a == pytest.approx(2 / 3)


def test_origin_is_fixed(gene):
    spec = gene[1]
    for t in (0.0, 0.3, 5.0):
        assert np.array_equal(flow(spec, 0, t, np.zeros(2)), np.zeros(2))


def test_offset_bounded_by_box(gene, gene_consts):
    assert gene_consts.b - gene_consts.eps_radius <= math.sqrt(2) * 1.0


def test_dissipativity_estimates():
    assert verify_dissipativity(linear([1, 3]), make_rng(1), 2) == pytest.approx(1.0, abs=1e-6)
    assert verify_dissipativity(linear([2]), make_rng(2), 1) == pytest.approx(2.0, abs=1e-9)
    bumpy = lambda y: y + 0.1 * np.sin(y)
    assert verify_dissipativity(bumpy, make_rng(3), 2) >= 0.9


def test_not_dissipative():
    with pytest.raises(NotDissipative):
        verify_dissipativity(lambda y: -y, make_rng(1), 1)
    with pytest.raises(NotDissipative):
        OperonModel(d=1, rates=(0.0,))
    with pytest.raises(NotDissipative):
        OperonModel(d=1, field=lambda y: y)


def test_nonlinear_field_spec():
    field = lambda y: y + 0.1 * np.sin(y)
    m = OperonModel(d=1, field=field, alpha_bar=0.9, eps=0.0)
    spec = build_operon_spec(m)
    y = flow(spec, 0, 1.0, np.array([2.0]))
    assert 0 < y[0] < 2.0
    assert operon_inputs(m).alpha == -0.9
    with pytest.raises(NotDissipative):
        build_operon_spec(OperonModel(d=1, field=field, alpha_bar=1.5))


def test_flow_contraction():
    spec = build_operon_spec(OperonModel(d=2, rates=(1.0, 1.0)))
    v = flow_contraction_check(spec, 1.0, make_rng(4), t_grid=[0.0, math.log(2)])
    assert v.passed and v.value == pytest.approx(1.0, abs=1e-12)
    mixed = build_operon_spec(OperonModel(d=2, rates=(1.0, 2.0)))
    y1 = np.array([[1.0, 1.0]])
    y2 = np.array([[1.0, 3.0]])
    t = 0.7
    ratio = np.linalg.norm(flow(mixed, 0, t, y1) - flow(mixed, 0, t, y2)) * math.exp(t) / 2.0
    assert ratio < 1


def test_constant_density_constants():
    d = OperonModel().burst_density()
    assert d.L_p == 0 and d.delta_p == 1


def test_truncexp_constant_rate_reduces():
    d = OperonModel(d=1, rates=(1.0,), density="truncexp", beta_min=1.5, beta_max=1.5).burst_density()
    assert d.L_p == 0 and d.delta_p == 1


def _mean(m, seed):
    spec = build_operon_spec(m)
    nu = estimate_invariant_pdmp(spec, make_rng(seed), HybridState(np.zeros(m.d)), 3000.0,
                                 equal_times(100, 3000, 5000), 1.0)
    return nu.ys.mean()


def test_more_bursts_raise_mean():
    lo = _mean(OperonModel(d=1, rates=(1.0,), jump_rate=0.5, eps=0.0), 1)
    hi = _mean(OperonModel(d=1, rates=(1.0,), jump_rate=4.0, eps=0.0), 2)
    assert hi > lo


def test_stationary_mean_closed_form():
    m = OperonModel(d=1, rates=(1.0,), eps=0.0, perturbation="point")
    assert stationary_mean_1d(m) == 0.5
    assert abs(_mean(m, 3) - 0.5) <= 0.05
