import pytest
from hypothesis import HealthCheck, settings

from bbmd import fixtures
from bbmd.core import TypeProfile

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def n16():
    return fixtures.get("n16")


@pytest.fixture(scope="session")
def pair16(n16):
    return n16.require_pair()


def prof(indices, n=16):
    return TypeProfile.from_support(indices, n)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
