import sys
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ctxalloc import build_scenario

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def shared_pair():
    """Two SCBSs on one shared user, unit gains, noise 0.5."""
    return build_scenario([[1.0], [1.0]], [0.5], p_max=1.0)


def random_game(rng, M=None, N=None, p_max=1.0, frequent_prob=0.5):
    M = M or int(rng.integers(1, 4))
    N = N or int(rng.integers(1, 4))
    beta = rng.uniform(0.2, 2.0, size=(M, N))
    noise = rng.uniform(0.2, 0.9, size=N)
    targets = [{j: float(rng.uniform(0, p_max / N)) for j in range(N) if rng.random() < frequent_prob}
               for _ in range(M)]
    return build_scenario(beta, noise, p_max, qos_target=targets)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
