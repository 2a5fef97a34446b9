class PdmpError(Exception):
    pass


class SpecError(PdmpError, ValueError):
    pass


class ContractivityViolation(PdmpError, ValueError):
    """``L * L_w + alpha / lambda >= 1``: the drift factor is not below one."""


class AssumptionA1Suspect(PdmpError):
    """The supremum defining the drift offset grows across the sampling grid."""


class FlowDomainError(PdmpError):
    pass


class EnvelopeError(PdmpError):
    """Rejection sampling of jump parameters kept failing; ``p_max`` too small."""


class ResidualMassError(PdmpError):
    """No rejection in the residual sampler; the pair is coupled almost surely."""


class LPError(PdmpError):
    pass


class ConfigError(PdmpError, ValueError):
    pass
