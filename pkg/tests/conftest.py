import os

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.register_profile("thorough", max_examples=400, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def quiet_audit():
    """Keep deliberate guard violations out of the suite-wide factor tally."""
    from shrinkcv.tuning import FACTOR_AUDIT
    saved = (FACTOR_AUDIT.checked, FACTOR_AUDIT.violations)
    yield FACTOR_AUDIT
    with FACTOR_AUDIT._lock:
        FACTOR_AUDIT.checked, FACTOR_AUDIT.violations = saved


def pytest_configure(config):
    config.addinivalue_line("markers", "run_last: run after every other test in the session")
    config.addinivalue_line("markers", "slow: Monte-Carlo test taking more than a few seconds")


def pytest_collection_modifyitems(session, config, items):
    # the factor audit summarizes everything evaluated before it
    items.sort(key=lambda item: item.get_closest_marker("run_last") is not None)


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record (and print) one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
