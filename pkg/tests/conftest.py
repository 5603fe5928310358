import functools

import pytest
from hypothesis import HealthCheck, settings

from flowcomp.compensation import IlqrConfig, ilqr_solve
from flowcomp.model import REFERENCE_PARAMS, build_state_space
from flowcomp.profiles import VALIDATION_PULSES, gen_pulses

# property suites: 1000 cases each, fixed seed so reruns are identical
settings.register_profile("suite", max_examples=1000, derandomize=True, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")

ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail):
    ACCEPTANCE_LINES.append(f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def validation_run():
    """The four-pulse reference solved with the default increment-penalty solver."""
    model = build_state_space(REFERENCE_PARAMS, 0.0005)
    ref = gen_pulses(VALIDATION_PULSES, 0.0005, label="q-ref")
    return model, ilqr_solve(model, ref, cfg=IlqrConfig())


@pytest.fixture(scope="session")
def validation():
    return validation_run()
