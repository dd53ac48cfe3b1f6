import json
from pathlib import Path

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

ORACLES = Path(__file__).parent / "oracles" / "reference.json"


@pytest.fixture(scope="session")
def oracles():
    """Frozen reference values produced by oracles/make_oracles.py."""
    return json.loads(ORACLES.read_text())


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): numbered acceptance criterion")
    config._acceptance = {}


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion: ``criterion(n, ok, detail)``."""
    log = request.config._acceptance
    seen = []

    def record(n, ok, detail=""):
        seen.append(n)
        log[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    yield record
    marker = request.node.get_closest_marker("acceptance")
    if marker and marker.args[0] not in seen:
        log[marker.args[0]] = (False, "raised before completing")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = getattr(config, "_acceptance", {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(log):
        ok, detail = log[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
