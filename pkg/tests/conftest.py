import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_details: dict[int, str] = {}
_outcomes: dict[int, str] = {}
_CRITERIA = {
    1: "infoset counts",
    2: "estimator unbiasedness",
    3: "tabular convergence",
    4: "neural loose reproduction",
    5: "support guarantee",
    6: "target stability",
    7: "replay correction",
    8: "diagnostic closed forms",
    9: "gradient correctness",
    10: "variance-risk demonstration",
}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance check")


@pytest.fixture
def acceptance():
    def record(number: int, detail: str) -> None:
        _details[number] = detail

    return record


def _criterion(nodeid: str):
    name = nodeid.rsplit("::", 1)[-1]
    if "test_acceptance.py" in nodeid and name.startswith("test_criterion_"):
        return int(name.split("_")[2])
    return None


def pytest_runtest_logreport(report):
    n = _criterion(report.nodeid)
    if n is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _outcomes[n] = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status = _outcomes.get(n, "NOT RUN")
        detail = _details.get(n, "")
        terminalreporter.write_line(f"criterion {n:>2} {status:<7} {_CRITERIA[n]}: {detail}")
