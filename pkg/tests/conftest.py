from pathlib import Path

import numpy as np
import pytest

from qvimarket.jsonio import load_scenario
from qvimarket.model import (AgentSpec, Dimensions, LPSetValued, Regularized, Scenario,
                             TechnologySpec)

ROOT = Path(__file__).resolve().parent.parent
SCENARIO_DIR = ROOT / "scenarios"
PCGM_SCENARIOS = ["pcgm_seed0.json", "pcgm_seed9.json", "pcgm_seed11.json",
                  "pcgm_stationary_seed11.json", "identical_reference.json"]

# V = {v in simplex : 2 v0 >= v1}, the segment (1, 0) -- (1/3, 2/3)
SEGMENT_TECH = TechnologySpec(supply=(1,), demand=(0,), coeff=((0, 1, 2.0),))


def shipped(name):
    return load_scenario(SCENARIO_DIR / name)


def box_scenario(m, n, lo=-1.0, hi=1.0, radius=np.inf, pricing=None, techs=None):
    agents = []
    for i in range(m):
        agents.append(AgentSpec(lower=np.full(n, lo), upper=np.full(n, hi),
                                radius=np.full(n, radius),
                                technology=(techs[i] if techs else TechnologySpec()),
                                pricing=(pricing[i] if pricing else LPSetValued())))
    return Scenario(dims=Dimensions(m, n), agents=tuple(agents))


def identical_reference_scenario(m=3, n=2, ref=(0.4, 0.6), radius=0.5):
    return box_scenario(m, n, radius=radius,
                        pricing=[Regularized(reference=np.array(ref), weight=1.0 + i)
                                 for i in range(m)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
