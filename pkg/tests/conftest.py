import pytest

CRITERIA = {
    1: "normalization and representation identity",
    2: "Poisson-uniform Monte Carlo representation",
    3: "displacement second-moment identity",
    4: "Erlang kernel shape decay",
    5: "Lp contraction",
    6: "truncation certificates",
    7: "scale rate n^(-alpha/2)",
    8: "component-count guarantee",
    9: "constant reproduction",
    10: "CDF gap and byte-identical reruns",
}

_criterion_of = {}
_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k): acceptance criterion number k")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _criterion_of[item.nodeid] = mark.args[0]


def pytest_runtest_logreport(report):
    k = _criterion_of.get(report.nodeid)
    if k is None:
        return
    if report.when == "call" or report.outcome != "passed":
        ok = report.outcome == "passed"
        _outcomes[k] = _outcomes.get(k, True) and ok


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_outcomes):
        status = "PASS" if _outcomes[k] else "FAIL"
        terminalreporter.write_line(f"criterion {k:>2}  {status}  {CRITERIA[k]}")
