import math

import numpy as np
import pytest

from absinfer import generators
from absinfer.model import Cpt, Network, Variable

SUITE_SIZE = 200
SUITE_SEED = 7100


def suite_case(i: int):
    rng = np.random.default_rng(SUITE_SEED + i)
    net = generators.random_network(rng)
    return net, generators.random_evidence(rng, net)


@pytest.fixture(scope="session")
def random_suite():
    return [suite_case(i) for i in range(SUITE_SIZE)]


def binary(i, name=None):
    return Variable(i, name or f"X{i + 1}", ("0", "1"))


@pytest.fixture
def chain3():
    """X1 -> X2 -> X3 with asymmetric transitions."""
    return Network(
        (binary(0), binary(1), binary(2)),
        (
            Cpt(0, (), (0.3, 0.7)),
            Cpt(1, (0,), [[0.9, 0.1], [0.2, 0.8]]),
            Cpt(2, (1,), [[0.6, 0.4], [0.25, 0.75]]),
        ),
    )


@pytest.fixture
def dice():
    return generators.dice_network()


def loglik_close(got: float, want: float, rel: float = 1e-9) -> bool:
    """Relative agreement of P(e), compared in log space; -inf must match exactly."""
    if math.isinf(got) or math.isinf(want):
        return got == want
    return abs(got - want) <= rel * max(1.0, abs(want))


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
