import pytest

from starmeta.config import desk_config
from starmeta.harness import run_experiment

_RUNS = {}
VERDICTS = {}


def cached_run(cfg):
    """run_experiment memoized for the whole session, keyed by the full config."""
    key = repr(cfg)
    if key not in _RUNS:
        _RUNS[key] = run_experiment(cfg)
    return _RUNS[key]


@pytest.fixture(scope="session")
def desk():
    return desk_config()


@pytest.fixture(scope="session")
def runs():
    return cached_run


@pytest.fixture(scope="session")
def verdict():
    def record(number, ok, detail):
        VERDICTS[number] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        ok, detail = VERDICTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
