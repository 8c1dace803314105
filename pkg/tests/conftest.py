import warnings

import pytest
from hypothesis import HealthCheck, settings

from tubekit.constructions import RegimeWarning

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_regime():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        yield


_VERDICTS: list = []


@pytest.fixture
def verdict():
    """Print and record one acceptance line, then assert it."""
    def record(num: int, name: str, ok: bool, detail: str) -> None:
        line = f"acceptance {num:>2} {'PASS' if ok else 'FAIL'} {name}: {detail}"
        print(line)
        _VERDICTS.append(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
