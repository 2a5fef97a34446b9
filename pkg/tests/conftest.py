import numpy as np
import pytest

from pdmpkit import HybridState, ModelSpec, Perturbation, make_rng
from pdmpkit.gene import OperonModel, build_operon_spec, operon_inputs
from pdmpkit.models import SwitchingModel, build_switching_spec, switching_inputs


def decay_spec(rate=1.0, lam=1.0, eps=0.0, regimes=1):
    """Scalar decay with uniform [0,1] bursts; one regime unless asked."""
    sw = None
    if regimes > 1:
        sw = lambda y: np.full((len(y), regimes, regimes), 1.0 / regimes)
    return ModelSpec(
        regime_count=regimes, dim=1,
        jump_map=lambda th, y: y + th,
        theta_low=[0.0], theta_high=[1.0],
        jump_density=lambda y, th: np.ones(len(th)),
        jump_rate=lam, density_max=1.0,
        perturbation=Perturbation("cube" if eps else "point", eps),
        flow_map=lambda i, t, y: y * np.exp(-rate * np.asarray(t))[:, None],
        switching=sw, state_lower=0.0, name="decay",
        params={"rate": rate, "lam": lam, "eps": eps, "regimes": regimes})


@pytest.fixture
def rng():
    return make_rng(20261016)


@pytest.fixture(scope="session")
def gene():
    m = OperonModel()
    return m, build_operon_spec(m), operon_inputs(m)


@pytest.fixture(scope="session")
def toy():
    m = SwitchingModel()
    return m, build_switching_spec(m), switching_inputs(m)


@pytest.fixture(scope="session")
def gene_consts(gene):
    from pdmpkit import derive_constants
    _, spec, inputs = gene
    return derive_constants(spec, inputs, make_rng(1, 1))


@pytest.fixture(scope="session")
def toy_consts(toy):
    from pdmpkit import derive_constants
    _, spec, inputs = toy
    return derive_constants(spec, inputs, make_rng(1, 2))


@pytest.fixture
def origin2():
    return HybridState([0.0, 0.0], 0)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
