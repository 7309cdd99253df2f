import pytest

from shipems.sim import synthetic_corpus
from shipems.system import ShipSystem

# (criterion label, passed, detail) lines collected by the acceptance suite
ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


def record(label: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append((label, bool(passed), detail))
    print(f"{'PASS' if passed else 'FAIL'} {label}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda x: _order(x[0])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {label}: {detail}")


def _order(label: str):
    head = label.split()[1] if label.startswith("criterion") else label
    try:
        return (0, int(head.rstrip(":")), label)
    except ValueError:
        return (1, 0, label)


@pytest.fixture(scope="session")
def system():
    return ShipSystem()


@pytest.fixture(scope="session")
def corpus():
    """The 20-mission, 40-hour synthetic evaluation corpus (seeds 0..19)."""
    return synthetic_corpus(20, seed0=0, hours=2.0)
