import numpy as np
import pytest

from dyadweight.lattice import DyadicInterval
from dyadweight.weights import FAMILIES, Weight, make_family


def weight_corpus(count=50, depth=8, seed=7):
    """Family members at several epsilons plus log-normal random weights."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        kind = i % 5
        if kind < 4:
            fam = FAMILIES[kind]
            eps = float(rng.choice([0.01, 0.05, 0.2, 0.5]))
            interval = DyadicInterval(int(rng.integers(0, depth)), 0) if fam == "haar-bump" else None
            if interval is not None:
                interval = DyadicInterval(interval.level, int(rng.integers(0, 1 << interval.level)))
            out.append(make_family(fam, eps, int(rng.integers(1 << 16)), depth, interval))
        else:
            out.append(Weight(np.exp(rng.normal(0.0, 0.4, 1 << depth))))
    return out


@pytest.fixture(scope="session")
def corpus():
    return weight_corpus()


@pytest.fixture
def step_weight():
    return Weight([2.0, 0.5])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
