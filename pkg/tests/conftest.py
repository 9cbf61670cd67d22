import numpy as np
import pytest

from reservecoopt.model import (FfrSpec, GeneratorSpec, Line, Network, Scenario, SystemParams)
from reservecoopt.requirements import EquivalencyTable
from reservecoopt.scenario_io import generate_synthetic_case


def flat_generator(k, g_max=500.0, kappa=20.0, r_bar=None, bus=0, price=20.0, g_min=0.0):
    return GeneratorSpec(id=f"g{k}", bus=bus, g_min=g_min, g_max=g_max, kappa=kappa,
                         r_bar=0.2 * g_max if r_bar is None else r_bar,
                         cost_curve=((g_max, price),))


def reserve_scenario(n=10, kappa=200.0, b_bar=(300.0,), L=2750.0, M=200_000.0):
    """Copper-plate fleet of identical units, enough to study reserves alone."""
    p = SystemParams(contingency_L=L, inertia_M=M)
    gens = tuple(flat_generator(k, g_max=2000.0, kappa=kappa, r_bar=1000.0) for k in range(n))
    ffr = tuple(FfrSpec(f"f{j}", 0, b) for j, b in enumerate(b_bar))
    return Scenario(p, gens, ffr, None)


# ratio table sized for the three-bus case
SMALL_TABLE = EquivalencyTable(((120_000.0, 600.0, 2.0), (200_000.0, 450.0, 1.5),
                                (297_000.0, 300.0, 1.0)))


def three_bus_scenario(flow_limit=1e4, L=300.0, b_bar=100.0):
    """Cheap unit at bus 0, dear unit at bus 1, all load at bus 2."""
    p = SystemParams(contingency_L=L, inertia_M=200_000.0)
    gens = (
        GeneratorSpec("cheap", 0, 0.0, 400.0, kappa=100.0, r_bar=150.0,
                      cost_curve=((200.0, 10.0), (400.0, 12.0))),
        GeneratorSpec("dear", 1, 0.0, 400.0, kappa=100.0, r_bar=150.0,
                      cost_curve=((400.0, 30.0),)),
        GeneratorSpec("peak", 2, 0.0, 300.0, kappa=100.0, r_bar=100.0,
                      cost_curve=((300.0, 50.0),)),
    )
    lines = (Line(0, 1, 10.0, flow_limit), Line(1, 2, 10.0, flow_limit), Line(0, 2, 10.0, flow_limit))
    net = Network(3, lines, (0.0, 0.0, 350.0))
    return Scenario(p, gens, (FfrSpec("bat", 2, b_bar, 0.0),), net)


@pytest.fixture(scope="session")
def synthetic_case():
    return generate_synthetic_case(seed=42)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
