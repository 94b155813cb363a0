import pytest

from hetnet_policy.config import ModelConfig
from hetnet_policy.solver import SolverConfig, solve_unconstrained

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    label = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        detail = ""
        if rep.failed and call.excinfo is not None:
            detail = str(call.excinfo.value).strip().splitlines()[0][:160] if str(call.excinfo.value).strip() else ""
        _ACCEPTANCE[label] = (rep.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for label in sorted(_ACCEPTANCE, key=_sort_key):
        outcome, detail = _ACCEPTANCE[label]
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(outcome, outcome.upper())
        line = f"{status}  {label}"
        if detail:
            line += f"  -- {detail}"
        tr.write_line(line)


def _sort_key(label):
    head = label.split()[0]
    digits = "".join(ch for ch in head if ch.isdigit())
    return (int(digits) if digits else 99, label)


@pytest.fixture(scope="session")
def ref_params():
    """Reference instance: package defaults (lambda_v = 1/6, C = 10, Bianchi WiFi curve)."""
    return ModelConfig().build()


@pytest.fixture(scope="session")
def ref_solution(ref_params):
    return solve_unconstrained(ref_params, SolverConfig(via_tolerance=1e-11))
