"""Protein levels of a single operon under degradation and transcriptional
bursts.

Between bursts the concentrations ``y`` in ``R_+^d`` decay along
``y' = -D(y)``; at exponential times a burst ``theta`` in ``[0, width]^d``
plus a small nonnegative fluctuation is added.  There is one regime and
the jump map ``y + theta`` is an isometry.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import minimize

from .core import (AssumptionInputs, HybridState, ModelSpec, Perturbation, theta_rule)
from .densities import BurstDensity, trunc_exp_mean
from .errors import SpecError
from .ergodic import (ExperimentResult, convergence_experiment, equal_times,
                      estimate_invariant_pdmp, slln_pdmp)
from .flows import flow
from .reports import Verdict


class NotDissipative(SpecError):
    pass


@dataclass(frozen=True)
class OperonModel:
    """Operon parameters.

    ``rates`` gives the linear field ``diag(rates)``.  A nonlinear field is
    passed as ``field(y) -> D(y)`` (batched) together with a certified
    ``alpha_bar``.
    """

    d: int = 2
    rates: tuple = (1.0, 2.0)
    jump_rate: float = 1.0
    width: float = 1.0
    density: str = "constant"
    beta_min: float = 1.0
    beta_max: float = 1.0
    eps: float = 0.05
    perturbation: str = "cube"
    field: object = None
    alpha_bar: float = None

    def __post_init__(self):
        if self.field is None:
            if len(self.rates) != self.d:
                raise SpecError(f"need {self.d} degradation rates, got {len(self.rates)}")
            if min(self.rates) <= 0:
                raise NotDissipative("degradation rates must be positive")
        elif self.alpha_bar is None or self.alpha_bar <= 0:
            raise NotDissipative("a nonlinear field needs a positive alpha_bar certificate")

    @property
    def linear(self):
        return self.field is None

    @property
    def dissipativity(self):
        return float(min(self.rates)) if self.linear else float(self.alpha_bar)

    def degradation(self, y):
        if self.linear:
            return np.atleast_2d(y) * np.asarray(self.rates, dtype=float)
        return self.field(np.atleast_2d(y))

    def burst_density(self):
        return default_burst_density(self.density, self.width, self.d, self.beta_min,
                                     self.beta_max)

    def params(self):
        out = {"family": "operon", "d": self.d, "jump_rate": self.jump_rate,
               "width": self.width, "density": self.density, "beta_min": self.beta_min,
               "beta_max": self.beta_max, "eps": self.eps, "perturbation": self.perturbation}
        if self.linear:
            out["rates"] = [float(a) for a in self.rates]
        else:
            out["field"] = getattr(self.field, "__name__", "custom")
            out["alpha_bar"] = self.alpha_bar
        return out


def default_burst_density(kind="constant", width=1.0, dim=1, beta_min=1.0, beta_max=1.0):
    """Burst density family on ``[0, width]^dim`` with its constants.

    Normalization is checked by Gauss-Legendre quadrature at a few states.
    """
    dens = BurstDensity(kind, width, dim, beta_min, beta_max)
    nodes, w = theta_rule(np.zeros(dim), np.full(dim, width), 24 if dim <= 2 else 12)
    for r in (0.0, 1.0, 100.0):
        y = np.full((len(nodes), dim), r / math.sqrt(dim))
        mass = float(dens(y, nodes) @ w)
        if abs(mass - 1.0) > 1e-6:
            raise SpecError(f"burst density integrates to {mass:.9g}")
    return dens


def verify_dissipativity(field, rng, dim, pairs=1000, radius=10.0, refine=True):
    """Estimate ``min <y1-y2, D(y1)-D(y2)> / |y1-y2|^2`` over ``[0, radius]^dim``.

    Random pairs give a first estimate; L-BFGS-B then descends from the
    best few pairs inside the box.
    """
    if pairs < 1000:
        raise ValueError("need at least 1000 pairs")
    y1 = rng.random((pairs, dim)) * radius
    y2 = rng.random((pairs, dim)) * radius

    def ratio(a, b):
        dy = a - b
        return np.einsum("ij,ij->i", dy, field(a) - field(b)) / np.einsum("ij,ij->i", dy, dy)

    r = ratio(y1, y2)
    best = float(r.min())
    if refine:
        bounds = [(0.0, radius)] * (2 * dim)

        def obj(z):
            a, b = z[:dim][None], z[dim:][None]
            if np.allclose(a, b):
                return 1e300
            return float(ratio(a, b)[0])

        for k in np.argsort(r)[:5]:
            res = minimize(obj, np.concatenate([y1[k], y2[k]]), method="L-BFGS-B",
                           bounds=bounds, options={"ftol": 1e-15, "gtol": 1e-12})
            if res.fun < best:
                best = float(res.fun)
    if best <= 0:
        raise NotDissipative(f"dissipativity estimate {best:.6g} is not positive")
    return best


def build_operon_spec(m=None, rng=None, check_pairs=1000):
    """Single-regime spec: flow of ``y' = -D(y)``, jumps ``y + theta + h``.

    Nonlinear fields are spot-checked against their ``alpha_bar``.
    """
    m = m or OperonModel()
    if not m.linear:
        rng = rng if rng is not None else np.random.default_rng(0)
        est = verify_dissipativity(m.degradation, rng, m.d, check_pairs, refine=False)
        if est < m.alpha_bar * (1 - 1e-9):
            raise NotDissipative(f"sampled dissipativity {est:.6g} below certificate {m.alpha_bar}")
    dens = m.burst_density()
    rates = np.asarray(m.rates, dtype=float) if m.linear else None

    def flow_map(i, t, y):
        return y * np.exp(-np.outer(t, rates))

    def vector_field(i, y):
        return -m.degradation(y)

    def jump_map(theta, y):
        return y + theta

    def state_set(y, tol):
        return np.all(y >= -tol, axis=1)

    return ModelSpec(
        regime_count=1, dim=m.d, jump_map=jump_map, theta_low=np.zeros(m.d),
        theta_high=np.full(m.d, m.width), jump_density=dens, jump_rate=m.jump_rate,
        perturbation=Perturbation(m.perturbation, m.eps), reference_point=np.zeros(m.d),
        density_max=dens.p_max, flow_map=flow_map if m.linear else None,
        vector_field=vector_field, state_set=state_set, state_lower=np.zeros(m.d),
        name="operon", params=m.params())


def operon_inputs(m=None):
    """Constants: ``L = 1``, ``alpha = -alpha_bar``, ``lcal = 0``, ``L_w = 1``."""
    m = m or OperonModel()
    dens = m.burst_density()
    return AssumptionInputs(L=1.0, alpha=-m.dissipativity, lcal=0.0, L_w=1.0,
                            L_p=dens.L_p, L_pi=0.0, delta_p=dens.delta_p, delta_pi=1.0)


def flow_contraction_check(spec, alpha_bar, rng, pairs=200, t_grid=None, radius=10.0):
    """Max of ``|S(t,y1) - S(t,y2)| e^{alpha_bar t} / |y1 - y2|`` over samples."""
    t_grid = np.linspace(0, 5, 11) if t_grid is None else np.asarray(t_grid, dtype=float)
    y1 = rng.random((pairs, spec.dim)) * radius
    y2 = rng.random((pairs, spec.dim)) * radius
    worst = 0.0
    for t in t_grid:
        s1 = flow(spec, 0, t, y1)
        s2 = flow(spec, 0, t, y2)
        r = np.linalg.norm(s1 - s2, axis=1) * math.exp(alpha_bar * t) / np.linalg.norm(y1 - y2, axis=1)
        worst = max(worst, float(r.max()))
    return Verdict("flow_contraction", worst <= 1 + 1e-6, worst, 1 + 1e-6, pairs * len(t_grid))


def stationary_mean_1d(m):
    """Stationary mean ``lambda E[theta + h] / a`` of the scalar linear model."""
    if m.d != 1 or not m.linear:
        raise ValueError("closed form needs d = 1 and a linear field")
    if m.density == "constant" or m.beta_min == m.beta_max:
        e_theta = m.width / 2 if m.density == "constant" else trunc_exp_mean(m.beta_min, m.width)
    else:
        raise ValueError("closed form needs a state-independent burst density")
    e_h = {"point": 0.0, "cube": m.eps / 2, "box": 0.0, "ball": 0.0}[m.perturbation]
    return m.jump_rate * (e_theta + e_h) / m.rates[0]


def operon_demo(m, seed, c=1.0, horizon=2000.0, samples=10**4, burn_in=100.0,
                replicas=2000, slln_replicas=4, bins=40):
    """Invariant estimate, strong law, convergence and per-coordinate histograms."""
    from ._rng import make_rng

    if not 0 <= burn_in < horizon:
        raise ValueError(f"burn_in {burn_in:g} must lie in [0, horizon = {horizon:g})")
    spec = build_operon_spec(m)
    x0 = HybridState(np.zeros(m.d), 0)
    f = lambda y, r: np.minimum(1.0, np.linalg.norm(y, axis=1))
    times = equal_times(burn_in, horizon, samples)
    nu = estimate_invariant_pdmp(spec, make_rng(seed, 1), x0, horizon, times, c)
    ref = nu.integrate(f)
    s = slln_pdmp(spec, _const_lcal(), make_rng(seed, 2), f, x0, horizon / 4,
                  replicas=slln_replicas, reference=ref, tol=0.03)
    conv = convergence_experiment(spec, seed, x0, HybridState(np.full(m.d, 5.0), 0), c,
                                  replicas=replicas)
    hist = {}
    for k in range(m.d):
        mass, edges = np.histogram(nu.ys[:, k], bins=bins)
        hist[f"coord{k}_left"] = edges[:-1]
        hist[f"coord{k}_right"] = edges[1:]
        hist[f"coord{k}_mass"] = mass / mass.sum()
    inv = ExperimentResult(
        "operon_invariant", {"spec_hash": spec.spec_hash(), "seed": seed, "horizon": horizon,
                             "samples": samples},
        {"mean_" + str(k): float(nu.ys[:, k].mean()) for k in range(m.d)} | {"f_mean": ref},
        hist, [])
    return {"invariant": inv, "slln_pdmp": s, "convergence": conv}


def _const_lcal():
    class _C:
        lcal = (0.0, 0.0)
    return _C()
