import pytest
from hypothesis import HealthCheck, settings

from gridplan.grid import bundled

settings.register_profile(
    "default", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

FIXTURES = ("tiny2", "ring4", "twin7")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running scale checks")
    config.addinivalue_line("markers", "criterion(n): acceptance criterion the test belongs to")


@pytest.fixture(scope="session")
def tiny2():
    return bundled("tiny2")


@pytest.fixture(scope="session")
def ring4():
    return bundled("ring4")


@pytest.fixture(scope="session")
def twin7():
    return bundled("twin7")


CRITERIA = {
    1: "oracle equivalence (planning)",
    2: "oracle equivalence (inner problem)",
    3: "worst-case distribution recovery",
    4: "strong duality and McCormick exactness",
    5: "bound discipline",
    6: "degenerate limits",
    7: "cross-model dominance",
    8: "topology validity",
    9: "scale smoke test and sweep monotonicity",
    10: "CLI determinism",
}
_outcomes: dict[int, list[bool]] = {}


def pytest_collection_modifyitems(config, items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", mark.args[0]))


def pytest_runtest_logreport(report):
    n = dict(report.user_properties).get("criterion")
    if n is None or (report.when != "call" and report.passed):
        return
    _outcomes.setdefault(n, []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, name in CRITERIA.items():
        if n in _outcomes:
            verdict = "PASS" if all(_outcomes[n]) else "FAIL"
            terminalreporter.write_line(f"criterion {n:>2} {verdict}  {name}")
