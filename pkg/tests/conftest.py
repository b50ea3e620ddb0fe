import numpy as np
import pytest

from mabmech.domain import AdInstance, check_bids
from mabmech.rules import AllocationRule, AllParams, KernelPolicy, exploration_counts

ACCEPTANCE_LINES: list[str] = []


class AllSkipRule(AllocationRule):
    name = "all-skip"

    def branches(self, bids, instance):
        dist = np.zeros(instance.num_ads + 1)
        dist[-1] = 1.0
        return [(1.0, lambda history: dist)]


class AntiMonotoneRule(AllocationRule):
    """Exploit weights 1 - b_j n_j / T0, renormalized; the opposite of ALL."""

    name = "anti"

    def __init__(self, params=AllParams()):
        self.params = params

    def branches(self, bids, instance):
        b = check_bids(bids, instance)
        m, t0 = instance.num_ads, self.params.explore_rounds
        explore = np.append(np.full(m, 1.0 / m), 0.0)

        def kernel(history):
            if len(history) < t0:
                return explore
            w = 1.0 - b * exploration_counts(history, m, t0) / t0
            w = w / w.sum() if w.sum() > 0 else np.full(m, 1.0 / m)
            return np.append(w, 0.0)

        return [(1.0, kernel)]


class _PeekingPolicy(KernelPolicy):
    def step(self, env):
        env.choose(0)
        # ad 1 was not shown this round
        env.observe(1)


class CheatingRule(AllocationRule):
    """Shows ad 0, then tries to read a click it has not earned."""

    name = "cheat"

    def branches(self, bids, instance):
        dist = np.zeros(instance.num_ads + 1)
        dist[0] = 1.0
        return [(1.0, lambda history: dist)]

    def start(self, bids, instance, uniforms):
        return _PeekingPolicy(None, uniforms)


@pytest.fixture
def two_agent():
    return AdInstance.build([0, 1], [1.0, 0.5], [0.5, 0.5], 2)


@pytest.fixture
def single_agent_example():
    return AdInstance.build([0, 0], [1.0, 1.0], [1.0, 1.0], 2)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
