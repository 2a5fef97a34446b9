"""Model description, hybrid metric, constants and assumption checks."""

from dataclasses import dataclass, field, replace
import hashlib
import json
import math

import numpy as np
from scipy.spatial.distance import cdist

from .errors import (AssumptionA1Suspect, ContractivityViolation,
                     EnvelopeError, SpecError)
from .flows import flow
from ._rng import exponential
from .reports import Verdict, verdict_pairs

MAX_ATTEMPTS = 10**6


@dataclass(frozen=True)
class HybridState:
    """A continuous coordinate ``y`` together with a regime index ``i``.

    Regimes are numbered from 0.
    """

    y: np.ndarray
    i: int = 0

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(-1)
        y.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "i", int(self.i))
        if self.i < 0:
            raise ValueError("regime index must be nonnegative")

    def __eq__(self, other):
        return (isinstance(other, HybridState) and self.i == other.i
                and np.array_equal(self.y, other.y))

    def __hash__(self):
        return hash((self.y.tobytes(), self.i))


def rho_c(x1, x2, c):
    """Hybrid distance ``|y1 - y2| + c [i1 != i2]``."""
    if c <= 0:
        raise ValueError("c must be positive")
    if x1.y.shape != x2.y.shape:
        raise ValueError(f"dimension mismatch: {x1.y.shape} vs {x2.y.shape}")
    return float(np.linalg.norm(x1.y - x2.y)) + c * float(x1.i != x2.i)


def rho_c_arrays(y1, i1, y2, i2, c):
    """Vectorized ``rho_c`` over aligned rows."""
    y1 = np.atleast_2d(y1)
    y2 = np.atleast_2d(y2)
    return np.linalg.norm(y1 - y2, axis=-1) + c * (np.asarray(i1) != np.asarray(i2))


@dataclass(frozen=True)
class HybridMetric:
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")

    def __call__(self, x1, x2):
        return rho_c(x1, x2, self.c)

    def pairwise(self, y1, i1, y2, i2, cap=None):
        """Distance matrix between two point clouds, optionally capped."""
        out = cdist(np.atleast_2d(np.asarray(y1, dtype=float)),
                    np.atleast_2d(np.asarray(y2, dtype=float)))
        out += self.c * (np.asarray(i1)[:, None] != np.asarray(i2)[None, :])
        if cap is not None:
            np.minimum(out, cap, out=out)
        return out


@dataclass(frozen=True)
class Perturbation:
    """Law of the additive jump noise.

    kind is one of ``point`` (mass at 0), ``ball`` (uniform on the
    Euclidean ball of radius eps), ``box`` (uniform on [-eps, eps]^d) or
    ``cube`` (uniform on [0, eps]^d).  ``eps_star`` is the admissibility
    radius, defaulting to ``eps``.
    """

    kind: str = "point"
    eps: float = 0.0
    eps_star: float = None

    KINDS = ("point", "ball", "box", "cube")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise SpecError(f"unknown perturbation kind {self.kind!r}")
        if self.eps < 0:
            raise SpecError("perturbation eps must be nonnegative")
        if self.kind != "point" and self.eps == 0:
            object.__setattr__(self, "kind", "point")
        if self.eps_star is None:
            object.__setattr__(self, "eps_star", float(self.eps))
        if self.eps > self.eps_star:
            raise SpecError("perturbation requires eps <= eps_star")

    def radius(self, d):
        """Largest norm attained on the support."""
        if self.kind == "point":
            return 0.0
        if self.kind == "ball":
            return float(self.eps)
        return float(self.eps) * math.sqrt(d)

    def sample(self, rng, n, d, eps=None):
        eps = self.eps if eps is None else eps
        if self.kind == "point" or eps == 0:
            return np.zeros((n, d))
        if self.kind == "ball":
            g = rng.standard_normal((n, d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            r = eps * rng.random(n) ** (1.0 / d)
            return g * r[:, None]
        u = rng.random((n, d))
        if self.kind == "box":
            return eps * (2.0 * u - 1.0)
        return eps * u


@dataclass(frozen=True)
class ModelSpec:
    """One switching PDMP instance.

    All callables are batched over rows:

    * ``jump_map(theta, y)``: (n, k), (n, d) -> (n, d)
    * ``jump_density(y, theta)``: (n, d), (n, k) -> (n,)
    * ``flow_map(i, t, y)``: regime, (n,), (n, d) -> (n, d), or ``None``
      in which case ``vector_field(i, y)`` is integrated with RK4
    * ``switching(y)``: (n, d) -> (n, N, N) row-stochastic; ``None`` keeps
      the current regime
    * ``state_set(y, tol)``: (n, d) -> bool (n,); ``None`` means R^d
    """

    regime_count: int
    dim: int
    jump_map: object
    theta_low: np.ndarray
    theta_high: np.ndarray
    jump_density: object
    jump_rate: float
    perturbation: Perturbation = field(default_factory=Perturbation)
    reference_point: np.ndarray = None
    density_max: float = None
    flow_map: object = None
    vector_field: object = None
    switching: object = None
    state_set: object = None
    state_lower: np.ndarray = None
    name: str = "model"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)
        if int(self.regime_count) < 1:
            raise SpecError("regime_count must be positive")
        if int(self.dim) < 1:
            raise SpecError("dim must be positive")
        set_("theta_low", np.atleast_1d(np.asarray(self.theta_low, dtype=float)))
        set_("theta_high", np.atleast_1d(np.asarray(self.theta_high, dtype=float)))
        if self.theta_low.shape != self.theta_high.shape or np.any(
                self.theta_high <= self.theta_low):
            raise SpecError("theta box must have positive side lengths")
        if not self.jump_rate > 0:
            raise SpecError("jump_rate must be positive")
        if self.flow_map is None and self.vector_field is None:
            raise SpecError("either flow_map or vector_field is required")
        if self.switching is None and self.regime_count > 1:
            raise SpecError("switching is required when regime_count > 1")
        ref = np.zeros(self.dim) if self.reference_point is None else self.reference_point
        set_("reference_point", np.asarray(ref, dtype=float).reshape(self.dim))
        if self.state_lower is not None:
            set_("state_lower", np.broadcast_to(
                np.asarray(self.state_lower, dtype=float), (self.dim,)).copy())

    @property
    def theta_dim(self):
        return self.theta_low.size

    @property
    def theta_volume(self):
        return float(np.prod(self.theta_high - self.theta_low))

    def switch_probs(self, y):
        y = np.atleast_2d(y)
        if self.switching is None:
            return np.broadcast_to(np.eye(self.regime_count), (len(y),) + (self.regime_count,) * 2)
        return np.asarray(self.switching(y), dtype=float)

    def contains(self, y, tol=1e-9):
        y = np.atleast_2d(y)
        if self.state_set is None:
            return np.ones(len(y), dtype=bool)
        return np.asarray(self.state_set(y, tol), dtype=bool)

    def spec_hash(self):
        payload = self.params or {"name": self.name}
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"),
                          default=_jsonable)
        return hashlib.sha256(text.encode()).hexdigest()

    def with_density_max(self, rng, grid_states=200, per_dim=32, headroom=1.2):
        """Copy with ``density_max`` estimated by grid search."""
        ys = sample_states(self, rng, grid_states, 1.0 + np.linalg.norm(self.reference_point))
        nodes, _ = theta_rule(self.theta_low, self.theta_high, per_dim, "midpoint")
        vals = _density_grid(self, ys, nodes)
        return replace(self, density_max=headroom * float(vals.max()))


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(f"not serializable: {type(v).__name__}")


def theta_rule(low, high, n, kind="legendre"):
    """Tensor quadrature on the box ``[low, high]``.

    Returns ``(nodes, weights)`` with weights summing to the box volume.
    """
    low = np.atleast_1d(low)
    high = np.atleast_1d(high)
    if kind == "legendre":
        x, w = np.polynomial.legendre.leggauss(n)
        x = 0.5 * (x + 1.0)
        w = 0.5 * w
    elif kind == "midpoint":
        x = (np.arange(n) + 0.5) / n
        w = np.full(n, 1.0 / n)
    else:
        raise ValueError(kind)
    k = low.size
    grids = np.meshgrid(*([x] * k), indexing="ij")
    wgrids = np.meshgrid(*([w] * k), indexing="ij")
    nodes = low + np.stack([g.ravel() for g in grids], axis=1) * (high - low)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return nodes, weights * float(np.prod(high - low))


def _density_grid(spec, ys, nodes):
    """Matrix ``p(y_a, theta_b)`` of shape (len(ys), len(nodes))."""
    n, m = len(ys), len(nodes)
    yy = np.repeat(ys, m, axis=0)
    tt = np.tile(nodes, (n, 1))
    return np.asarray(spec.jump_density(yy, tt), dtype=float).reshape(n, m)


def sample_states(spec, rng, n, radius, max_rounds=1000):
    """Uniform draws from the ball of ``radius`` around y* inside Y."""
    d = spec.dim
    out = np.empty((0, d))
    for _ in range(max_rounds):
        g = rng.standard_normal((2 * n, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        y = spec.reference_point + g * (radius * rng.random(2 * n) ** (1.0 / d))[:, None]
        if spec.state_lower is not None:
            # reflect into the orthant so the acceptance rate stays high
            y = spec.state_lower + np.abs(y - spec.state_lower)
        y = y[spec.contains(y, 0.0)]
        out = np.vstack([out, y])
        if len(out) >= n:
            return out[:n]
    raise SpecError("could not sample states inside the state set")


def sample_theta(spec, rng, y):
    """Draw one jump parameter per row of ``y`` from ``p(y, .)``.

    Rejection against the uniform envelope ``density_max`` on the box.
    """
    y = np.atleast_2d(y)
    n, k = len(y), spec.theta_dim
    if spec.density_max is None:
        raise EnvelopeError("density_max is not set")
    out = np.empty((n, k))
    pending = np.arange(n)
    span = spec.theta_high - spec.theta_low
    attempts = 0
    while pending.size:
        attempts += 1
        if attempts > MAX_ATTEMPTS:
            raise EnvelopeError(
                f"no acceptance after {MAX_ATTEMPTS} proposals; density_max too small?")
        prop = spec.theta_low + rng.random((pending.size, k)) * span
        dens = np.asarray(spec.jump_density(y[pending], prop), dtype=float)
        if np.any(dens > spec.density_max * (1 + 1e-9)):
            raise EnvelopeError(
                f"density {dens.max():.6g} exceeds density_max {spec.density_max:.6g}")
        ok = rng.random(pending.size) * spec.density_max < dens
        out[pending[ok]] = prop[ok]
        pending = pending[~ok]
    return out


def validate_spec(spec, rng, n_states=200, radius=None, quad=16):
    """Check the structural invariants of ``spec`` on sampled states.

    Raises SpecError naming the failed property.
    """
    if radius is None:
        radius = 1.0 + float(np.linalg.norm(spec.reference_point))
    if not spec.contains(spec.reference_point[None])[0]:
        raise SpecError("reference point is outside the state set")
    ys = sample_states(spec, rng, n_states, radius)
    ys = np.vstack([spec.reference_point, ys])
    pi = spec.switch_probs(ys)
    if pi.shape != (len(ys), spec.regime_count, spec.regime_count):
        raise SpecError(f"switching returned shape {pi.shape}")
    if np.any(pi < 0):
        raise SpecError("switching probabilities must be nonnegative")
    row_err = np.abs(pi.sum(axis=2) - 1.0)
    if row_err.max() > 1e-9:
        a, r = np.unravel_index(np.argmax(row_err), row_err.shape)
        raise SpecError(f"switching row {r} sums to {pi[a, r].sum():.12g} at y={ys[a]}")
    nodes, w = theta_rule(spec.theta_low, spec.theta_high, quad)
    dens = _density_grid(spec, ys, nodes)
    if np.any(dens < 0):
        raise SpecError("jump density must be nonnegative")
    mass = dens @ w
    if np.abs(mass - 1.0).max() > 1e-6:
        raise SpecError(f"jump density integrates to {mass[np.argmax(np.abs(mass - 1))]:.9g}")
    if spec.density_max is not None:
        mids, _ = theta_rule(spec.theta_low, spec.theta_high, quad, "midpoint")
        pm = max(dens.max(), _density_grid(spec, ys, mids).max())
        if pm > spec.density_max * (1 + 1e-9):
            raise SpecError(f"density {pm:.6g} exceeds density_max {spec.density_max:.6g}")
    # admissible perturbations keep post-jump states in Y
    th = spec.theta_low + rng.random((len(ys), spec.theta_dim)) * (spec.theta_high - spec.theta_low)
    h = spec.perturbation.sample(rng, len(ys), spec.dim, spec.perturbation.eps_star)
    post = spec.jump_map(th, ys) + h
    if not np.all(spec.contains(post)):
        raise SpecError("jump_map(theta, y) + h leaves the state set")
    return True


@dataclass(frozen=True)
class AssumptionInputs:
    """User-supplied constants of the standing assumptions.

    ``lcal`` is a scalar or a pair ``(l0, l1)`` meaning ``l0 + l1 r``.
    """

    L: float
    alpha: float
    lcal: object
    L_w: float
    L_p: float
    L_pi: float
    delta_p: float
    delta_pi: float

    def __post_init__(self):
        if not self.L > 0:
            raise SpecError("L must be positive")
        if not self.L_w > 0:
            raise SpecError("L_w must be positive")
        if self.L_p < 0 or self.L_pi < 0:
            raise SpecError("L_p and L_pi must be nonnegative")
        for k in ("delta_p", "delta_pi"):
            v = getattr(self, k)
            if not 0 < v <= 1:
                raise SpecError(f"{k} must lie in (0, 1]")
        l0, l1 = lcal_pair(self.lcal)
        if l0 < 0 or l1 < 0:
            raise SpecError("lcal must be nonnegative and nondecreasing")

    @property
    def lcal_constant(self):
        return lcal_pair(self.lcal)[1] == 0


def lcal_pair(lcal):
    if np.ndim(lcal) == 0:
        return float(lcal), 0.0
    l0, l1 = lcal
    return float(l0), float(l1)


def small_set_interval(lam, alpha):
    """Interval of length at most one on which ``e^{alpha t} <= lam/(lam-alpha)``.

    For ``alpha < 0`` the bound is below one, so the interval has to start
    at ``ln((lam-alpha)/lam)/(-alpha)``.
    """
    if alpha >= lam:
        raise SpecError("flow exponent alpha must be below the jump rate")
    if alpha < 0:
        t0 = math.log((lam - alpha) / lam) / (-alpha)
        return (t0, t0 + 1.0)
    if alpha == 0:
        return (0.0, 1.0)
    return (0.0, min(1.0, -math.log1p(-alpha / lam) / alpha))


@dataclass(frozen=True)
class AssumptionConstants:
    lam: float
    L: float
    alpha: float
    lcal: tuple
    L_w: float
    L_p: float
    L_pi: float
    delta_p: float
    delta_pi: float
    eps_radius: float
    a: float
    b: float
    b_se: float
    R: float
    M: float
    T: tuple
    c: float
    c_reading: float
    c_steps: float
    delta: float
    l: float
    reference_point: np.ndarray
    b_grid: int = 0
    b_draws: int = 0

    def Lcal(self, r):
        return self.lcal[0] + self.lcal[1] * r

    @property
    def q(self):
        return self.a

    @property
    def metric(self):
        return HybridMetric(self.c)

    def V(self, y):
        """Lyapunov function ``|y - y*|`` (regime independent)."""
        return np.linalg.norm(np.atleast_2d(y) - self.reference_point, axis=-1)

    def to_pairs(self):
        return [
            ("lambda", self.lam), ("L", self.L), ("alpha", self.alpha),
            ("lcal0", self.lcal[0]), ("lcal1", self.lcal[1]),
            ("L_w", self.L_w), ("L_p", self.L_p), ("L_pi", self.L_pi),
            ("delta_p", self.delta_p), ("delta_pi", self.delta_pi),
            ("eps_radius", self.eps_radius),
            ("contractivity", self.L * self.L_w + self.alpha / self.lam),
            ("a", self.a), ("b", self.b), ("b_se", self.b_se),
            ("b_grid", self.b_grid), ("b_draws", self.b_draws),
            ("R", self.R), ("M", self.M), ("T_low", self.T[0]), ("T_high", self.T[1]),
            ("c", self.c), ("c_reading", self.c_reading), ("c_steps", self.c_steps),
            ("delta", self.delta), ("l", self.l),
            ("reference_point", self.reference_point),
        ]


def drift_factor(lam, L, L_w, alpha):
    if alpha >= lam:
        raise SpecError("flow exponent alpha must be below the jump rate")
    return lam * L * L_w / (lam - alpha)


def metric_weight(lam, L, alpha, lcal_M, T):
    """Return ``(c, c_reading, c_steps)``.

    ``c_reading`` is the closed-form lower bound with the max over
    ``e^{sup T}/lam`` and ``lam/(lam-alpha)``; ``c_steps`` is the largest
    of the requirements used by the contraction, small-set and mass
    estimates.  ``c`` is the larger of the two.
    """
    k = lam - alpha
    reading = lcal_M * k / (lam * L) * max(math.exp(T[1]) / lam, lam / k) + 2 * k / L
    steps = max(k * lcal_M / (lam ** 2 * L),
                math.exp(T[1]) * lcal_M * k / (lam * L),
                k / L * (lcal_M / lam ** 2 + 2.0))
    return max(reading, steps), reading, steps


def _offset_integrand(spec, rng, ys, regimes, mc):
    """MC estimates of ``E |w_theta(S_i(t, y*)) - y*|``, t ~ Exp(lam), theta ~ p(S_i(t, y)).

    Returns means and standard errors, one per (state, regime) pair.
    """
    n = len(ys)
    yy = np.repeat(ys, mc, axis=0)
    rr = np.repeat(regimes, mc)
    t = exponential(rng, spec.jump_rate, n * mc)
    y_pre = flow(spec, rr, t, yy)
    th = sample_theta(spec, rng, y_pre)
    ref_pre = flow(spec, rr, t, np.broadcast_to(spec.reference_point, yy.shape))
    g = np.linalg.norm(spec.jump_map(th, ref_pre) - spec.reference_point, axis=1)
    g = g.reshape(n, mc)
    return g.mean(axis=1), g.std(axis=1, ddof=1) / math.sqrt(mc)


def estimate_offset(spec, rng, radius, grid=200, mc=2000, suspect_ratio=4.0):
    """Grid estimate of the sup defining the drift offset (without eps).

    Returns ``(value, stderr, detail)``.
    """
    N = spec.regime_count
    ys = np.vstack([spec.reference_point, sample_states(spec, rng, grid - 1, radius)])
    Y = np.repeat(ys, N, axis=0)
    regs = np.tile(np.arange(N), len(ys))
    mean, se = _offset_integrand(spec, rng, Y, regs, mc)
    if not np.all(np.isfinite(mean)):
        raise AssumptionA1Suspect("non-finite offset integrand")
    k = int(np.argmax(mean))
    dist = np.linalg.norm(Y - spec.reference_point, axis=1)
    inner = mean[dist <= radius / 2].max()
    outer = mean[dist > radius / 2].max() if np.any(dist > radius / 2) else inner
    if outer > suspect_ratio * inner + 1e-12:
        raise AssumptionA1Suspect(
            f"offset integrand grows with |y|: inner max {inner:.4g}, outer max {outer:.4g}")
    return float(mean[k]), float(se[k]), {"argmax_y": Y[k], "argmax_i": int(regs[k]),
                                          "inner_max": float(inner), "outer_max": float(outer)}


def derive_constants(spec, inputs, rng, grid=200, mc=2000, radius=None):
    """Compute the constant bundle for ``spec``.

    The sup in the drift offset is estimated on ``grid`` states (including
    y*) within ``radius`` of y*.  By default a first pass at radius 1 gives
    a provisional M, and the final pass samples within that M.
    """
    lam = float(spec.jump_rate)
    if inputs.alpha >= lam:
        raise SpecError("flow exponent alpha must be below the jump rate")
    a = drift_factor(lam, inputs.L, inputs.L_w, inputs.alpha)
    if a >= 1:
        raise ContractivityViolation(
            f"L*L_w + alpha/lambda = {inputs.L * inputs.L_w + inputs.alpha / lam:.6g} >= 1 (a = {a:.6g})")
    eps_r = spec.perturbation.radius(spec.dim)
    ynorm = float(np.linalg.norm(spec.reference_point))
    if radius is None:
        s0, _, _ = estimate_offset(spec, rng, 1.0, max(grid // 4, 2), max(mc // 4, 2))
        radius = 4 * (s0 + eps_r) / (1 - a) + ynorm
    sup, se, _ = estimate_offset(spec, rng, radius, grid, mc)
    b = sup + eps_r
    R = 4 * b / (1 - a)
    M = R + ynorm
    T = small_set_interval(lam, inputs.alpha)
    lcal = lcal_pair(inputs.lcal)
    c, reading, steps = metric_weight(lam, inputs.L, inputs.alpha, lcal[0] + lcal[1] * M, T)
    delta = inputs.delta_pi * inputs.delta_p * (math.exp(-lam * T[0]) - math.exp(-lam * T[1]))
    l = lam * inputs.L * (inputs.L_p + inputs.L_w * inputs.L_pi + 1) / (lam - inputs.alpha)
    return AssumptionConstants(
        lam=lam, L=inputs.L, alpha=inputs.alpha, lcal=lcal, L_w=inputs.L_w,
        L_p=inputs.L_p, L_pi=inputs.L_pi, delta_p=inputs.delta_p,
        delta_pi=inputs.delta_pi, eps_radius=eps_r, a=a, b=b, b_se=se, R=R, M=M,
        T=T, c=c, c_reading=reading, c_steps=steps, delta=delta, l=l,
        reference_point=spec.reference_point.copy(), b_grid=grid, b_draws=mc)


@dataclass
class AssumptionReport:
    verdicts: list

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


def _ratio_verdict(name, num, den, bound, n, tol=1e-9):
    ok = den > 1e-12
    ratios = num[ok] / den[ok]
    worst = float(ratios.max()) if ratios.size else 0.0
    k = int(np.argmax(ratios)) if ratios.size else -1
    return Verdict(name, worst <= bound * (1 + tol) + tol, worst, bound, int(ok.sum()),
                   {"worst_index": k})


def verify_assumptions(spec, consts, rng, pairs=200, t_max=None, quad=64):
    """Numerical verdicts for the five standing assumptions.

    States are sampled within radius M of y*; flow times uniformly on
    ``[0, t_max]`` (default ``3 / lambda``).
    """
    if pairs < 100:
        raise ValueError("budget must cover at least 100 state pairs")
    N, lam = spec.regime_count, spec.jump_rate
    t_max = 3.0 / lam if t_max is None else t_max
    verdicts = []

    # finiteness of the grid estimate and its stability
    try:
        sup, se, det = estimate_offset(spec, rng, consts.M, consts.b_grid or 200,
                                       consts.b_draws or 2000)
        verdicts.append(Verdict("offset_finite", bool(np.isfinite(sup)), sup, consts.b - consts.eps_radius,
                                consts.b_grid or 200, {"stderr": se, **{k: v for k, v in det.items()}}))
    except AssumptionA1Suspect as exc:
        verdicts.append(Verdict("offset_finite", None, math.nan, math.nan, 0, {"reason": str(exc)}))

    y1 = sample_states(spec, rng, pairs, consts.M)
    y2 = sample_states(spec, rng, pairs, consts.M)
    # a few close pairs probe local Lipschitz ratios
    close = pairs // 4
    y2[:close] = y1[:close] + 1e-3 * rng.standard_normal((close, spec.dim))
    if spec.state_lower is not None:
        y2[:close] = np.maximum(y2[:close], spec.state_lower)
    dy = np.linalg.norm(y1 - y2, axis=1)

    # flows
    t = rng.random(pairs) * t_max
    i = rng.integers(0, N, pairs)
    j = np.where(rng.random(pairs) < 0.5, i, rng.integers(0, N, pairs))
    s1 = flow(spec, i, t, y1)
    s2 = flow(spec, j, t, y2)
    lc = consts.Lcal(np.linalg.norm(y2, axis=1))
    num = np.linalg.norm(s1 - s2, axis=1) - t * lc * (i != j)
    verdicts.append(_ratio_verdict("flow_lipschitz", num, np.exp(consts.alpha * t) * dy, consts.L, pairs))

    nodes, w = theta_rule(spec.theta_low, spec.theta_high, quad if spec.theta_dim <= 2 else 16,
                          "midpoint")
    m = len(nodes)
    p1 = _density_grid(spec, y1, nodes)
    p2 = _density_grid(spec, y2, nodes)
    T1 = np.tile(nodes, (pairs, 1))
    w1 = spec.jump_map(T1, np.repeat(y1, m, axis=0))
    w2 = spec.jump_map(T1, np.repeat(y2, m, axis=0))
    dw = np.linalg.norm(w1 - w2, axis=1).reshape(pairs, m)

    # jump map
    verdicts.append(_ratio_verdict("jump_lipschitz", (dw * p1) @ w, dy, consts.L_w, pairs))

    # Lipschitz dependence on the state
    pi1, pi2 = spec.switch_probs(y1), spec.switch_probs(y2)
    num_pi = np.abs(pi1 - pi2).sum(axis=2).max(axis=1)
    v_pi = _ratio_verdict("switching_lipschitz", num_pi, dy, consts.L_pi, pairs)
    v_p = _ratio_verdict("density_lipschitz", np.abs(p1 - p2) @ w, dy, consts.L_p, pairs)
    verdicts += [v_pi, v_p]

    # overlaps
    over_pi = np.minimum(pi1[:, :, None, :], pi2[:, None, :, :]).sum(axis=3)
    min_pi = float(over_pi.min())
    verdicts.append(Verdict("switching_overlap", min_pi >= consts.delta_pi * (1 - 1e-9),
                            min_pi, consts.delta_pi, pairs))
    inside = dw <= consts.L_w * dy[:, None] * (1 + 1e-9) + 1e-12
    over_p = (np.minimum(p1, p2) * inside) @ w
    min_p = float(over_p.min())
    verdicts.append(Verdict("density_overlap", min_p >= consts.delta_p * (1 - 1e-6),
                            min_p, consts.delta_p, pairs,
                            {"theta_set_fraction": float(inside.mean())}))

    contr = consts.L * consts.L_w + consts.alpha / lam
    verdicts.append(Verdict("contractivity", contr < 1, contr, 1.0, 1))
    return AssumptionReport(verdicts)
