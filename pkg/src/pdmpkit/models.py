"""A one-dimensional two-regime test model.

Each regime relaxes exponentially towards its own centre,
``S_i(t, y) = c_i + (y - c_i) e^{-gamma t}``; a jump halves the state and
adds a burst, ``w_theta(y) = y/2 + theta`` with theta in ``[0, 1]``.  The
burst density is a truncated exponential whose rate depends on |y|, and the
switching rows may tilt with ``tanh(y)``.  Every standing constant is known
in closed form, which makes the model a convenient oracle.
"""

from dataclasses import dataclass

import numpy as np

from .core import AssumptionInputs, ModelSpec, Perturbation
from .densities import BurstDensity
from .errors import SpecError


@dataclass(frozen=True)
class SwitchingModel:
    gamma: float = 1.0
    centers: tuple = (0.0, 2.0)
    jump_rate: float = 1.0
    beta_min: float = 1.0
    beta_max: float = 2.0
    switch_rows: tuple = ((0.7, 0.3), (0.4, 0.6))
    switch_slope: float = 0.0
    perturbation: str = "ball"
    eps: float = 0.05

    def __post_init__(self):
        rows = np.asarray(self.switch_rows, dtype=float)
        if rows.shape != (2, 2) or np.any(np.abs(rows.sum(1) - 1) > 1e-9):
            raise SpecError("switch_rows must be two probability rows")
        if self.switch_slope < 0 or self.switch_slope > rows[:, 0].min() or \
                self.switch_slope > rows[:, 1].min():
            raise SpecError("switch_slope must keep probabilities in [0, 1]")
        if not self.gamma > 0:
            raise SpecError("gamma must be positive")


def build_switching_spec(m=None):
    m = m or SwitchingModel()
    cen = np.asarray(m.centers, dtype=float)
    rows = np.asarray(m.switch_rows, dtype=float)
    dens = BurstDensity("truncexp", 1.0, 1, m.beta_min, m.beta_max)

    def flow_map(i, t, y):
        return cen[i] + (y - cen[i]) * np.exp(-m.gamma * t)[:, None]

    def vector_field(i, y):
        return -m.gamma * (y - cen[i])

    def jump_map(theta, y):
        return 0.5 * y + theta

    def switching(y):
        s = m.switch_slope * np.tanh(np.atleast_2d(y)[:, 0])
        out = np.broadcast_to(rows, (len(s), 2, 2)).copy()
        out[:, :, 0] -= s[:, None]
        out[:, :, 1] += s[:, None]
        return out

    params = {"family": "switching", "gamma": m.gamma, "centers": list(m.centers),
              "jump_rate": m.jump_rate, "beta_min": m.beta_min, "beta_max": m.beta_max,
              "switch_rows": rows.tolist(), "switch_slope": m.switch_slope,
              "perturbation": m.perturbation, "eps": m.eps}
    return ModelSpec(
        regime_count=2, dim=1, jump_map=jump_map, theta_low=[0.0], theta_high=[1.0],
        jump_density=dens, jump_rate=m.jump_rate,
        perturbation=Perturbation(m.perturbation, m.eps),
        reference_point=np.zeros(1), density_max=dens.p_max, flow_map=flow_map,
        vector_field=vector_field, switching=switching, name="switching", params=params)


def switching_inputs(m=None):
    """Exact constants of the test model.

    ``|S_i(t,y1) - S_j(t,y2)| <= e^{-gamma t}|y1-y2| + |c_i - c_j|(1 - e^{-gamma t})``
    and ``1 - e^{-gamma t} <= gamma t`` give ``L = 1``, ``alpha = -gamma`` and
    a constant ``lcal = gamma |c_1 - c_0|``.
    """
    m = m or SwitchingModel()
    rows = np.asarray(m.switch_rows, dtype=float)
    dens = BurstDensity("truncexp", 1.0, 1, m.beta_min, m.beta_max)
    gap = abs(rows[0, 0] - rows[1, 0]) + 2 * m.switch_slope
    return AssumptionInputs(
        L=1.0, alpha=-m.gamma, lcal=m.gamma * abs(m.centers[1] - m.centers[0]),
        L_w=0.5, L_p=dens.L_p, L_pi=2 * m.switch_slope,
        delta_p=dens.delta_p, delta_pi=1.0 - gap)
