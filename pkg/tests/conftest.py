import pytest

from tabkanet import data

_CRITERIA: list[str] = []


@pytest.fixture
def private_audit(monkeypatch):
    """Fresh audit for tests that trip it on purpose, keeping the global one clean."""
    audit = data.FitAudit()
    monkeypatch.setattr(data, "AUDIT", audit)
    return audit


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records one acceptance line, echoed in the terminal summary."""
    def record(n: int, ok: bool, detail: str) -> None:
        line = f"CRITERION {n} {'PASS' if ok else 'FAIL'}: {detail}"
        _CRITERIA.append(line)
        print(line, flush=True)
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)


def pytest_sessionfinish(session, exitstatus):
    # The global audit must never trip anywhere in the suite.
    audit = data.AUDIT
    line = (f"leakage audit: {'TRIPPED ' + '; '.join(audit.violations) if audit.tripped else 'clean'}"
            f" ({audit.fit_calls} fit calls)")
    print("\n" + line)
    if audit.tripped:
        session.exitstatus = 1
