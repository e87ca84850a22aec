import pytest

from stirlab.parallel import ENV_THREADS
from stirlab.walk import neighbor_occupation_series

_LINES = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def series3():
    return neighbor_occupation_series(3)


@pytest.fixture(autouse=True)
def _no_thread_override(monkeypatch):
    monkeypatch.delenv(ENV_THREADS, raising=False)


@pytest.fixture(scope="session")
def criterion_log(pytestconfig):
    """Append-only list of one-line criterion verdicts, echoed in the terminal summary."""
    lines = pytestconfig.stash.setdefault(_LINES, [])

    def log(line: str) -> None:
        lines.append(line)
        print(line)

    return log


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
