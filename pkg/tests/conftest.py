import pytest

# (criterion, passed, detail) lines recorded by the acceptance suite
ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for the acceptance summary.

    Usage: ``criterion("name", ok, "detail")`` then assert ``ok``.
    """
    seen = []

    def record(name: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE.append((name, bool(ok), detail))
        seen.append(name)
        return ok

    yield record
    if not seen:
        # the test raised before reaching its verdict
        ACCEPTANCE.append((request.node.name, False, "did not complete"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
