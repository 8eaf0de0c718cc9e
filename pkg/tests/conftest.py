import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from homarea import fixture  # noqa: E402
from homarea.splitting import ComplementaryCouple, named_subgroups  # noqa: E402

FIXTURE_NAMES = ["heisenberg1", "heisenberg2", "engel"]

_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""

    def record(number, title, passed, detail=""):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        _ACCEPTANCE.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)


@pytest.fixture(params=FIXTURE_NAMES)
def alg(request):
    return fixture(request.param)


@pytest.fixture
def h1():
    return fixture("heisenberg1")


@pytest.fixture
def standard_couple():
    def make(alg):
        subs = named_subgroups(alg)
        return ComplementaryCouple(subs["vertical"], subs["horizontal"])

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
