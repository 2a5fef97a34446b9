"""Simulation and numerical verification of piecewise-deterministic Markov
processes with switching flows and randomly perturbed jumps."""

__version__ = "0.1.0"

from ._rng import make_rng
from .core import (AssumptionConstants, AssumptionInputs, AssumptionReport, HybridMetric,
                   HybridState, ModelSpec, Perturbation, derive_constants, rho_c,
                   validate_spec, verify_assumptions)
from .errors import (AssumptionA1Suspect, ConfigError, ContractivityViolation, EnvelopeError,
                     FlowDomainError, LPError, PdmpError, ResidualMassError, SpecError)
from .flows import flow
from .metrics import (EmpiricalMeasure, fit_geometric_rate, fm_distance_dictionary,
                      fm_distance_exact, fm_distance_subsampled, lyapunov_moment,
                      marginalize_Y)
from .samplers import (ChainTrajectory, PdmpPath, apply_G_quadrature, chain_step,
                       sample_G, sample_W, sample_holding_time, sample_jump, simulate_chain,
                       simulate_pdmp, time_average)
