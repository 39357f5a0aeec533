import time
from contextlib import contextmanager

import pytest

from levlim import MarketParams, Preference

_RESULTS = {}


@pytest.fixture
def base_params():
    return MarketParams(mu=0.08, sigma=0.16, r=0.0, epsilon=0.01)


@pytest.fixture
def long_only_params():
    return MarketParams(mu=0.02, sigma=0.2, r=0.0, epsilon=0.01)


@pytest.fixture
def unit_pref():
    return Preference(1.0)


class _Outcome:
    def __init__(self):
        self.detail = ""


@pytest.fixture
def criterion():
    """Context manager recording one acceptance line: number, title, pass/fail, runtime."""

    @contextmanager
    def run(number, title, budget):
        out = _Outcome()
        t0 = time.perf_counter()
        try:
            yield out
        except BaseException as exc:
            elapsed = time.perf_counter() - t0
            msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            _RESULTS[number] = (title, False, f"{out.detail} | {msg}".strip(" |"), elapsed, budget)
            raise
        elapsed = time.perf_counter() - t0
        ok = elapsed < budget
        _RESULTS[number] = (title, ok, out.detail, elapsed, budget)
        assert ok, f"runtime {elapsed:.1f}s exceeds budget {budget}s"

    return run


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, ok, detail, elapsed, budget = _RESULTS[number]
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(
            f"criterion {number:2d} {verdict}  {title}  [{elapsed:.2f}s / {budget:g}s]  {detail}"
        )
