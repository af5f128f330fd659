import functools

import pytest

from mohan.simulator import prepare_experiment, standard_scenario

ACCEPTANCE_SEEDS = tuple(range(10))

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


@functools.lru_cache(maxsize=None)
def standard_experiment(seed: int):
    return prepare_experiment(standard_scenario(), seed)


@pytest.fixture(scope="session")
def experiment0():
    return standard_experiment(0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
