import pytest

from teamtrace.defaultmap import default_zone_map


@pytest.fixture(scope="session")
def zmap():
    return default_zone_map()


def pytest_runtest_logreport(report):
    """One PASS/FAIL line per acceptance criterion."""
    if report.when == "call" and "test_acceptance" in report.nodeid:
        status = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1]
        print(f"\n[ACCEPTANCE {status}] {name} ({report.duration:.2f}s)")
