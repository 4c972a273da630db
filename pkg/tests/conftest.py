from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config: pytest.Config) -> None:
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item: pytest.Item, call: pytest.CallInfo):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[number] = (title, "PASS" if report.passed else "FAIL", call.duration)


def pytest_terminal_summary(terminalreporter, exitstatus, config) -> None:
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, verdict, duration = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {verdict}  {title} ({duration:.2f}s)")


@pytest.fixture(scope="session")
def corpus_root(tmp_path_factory: pytest.TempPathFactory) -> Path:
    from sb3repair.corpus import write_corpus

    root = tmp_path_factory.mktemp("corpus")
    write_corpus(root)
    return root


@pytest.fixture(scope="session")
def case_specs():
    from sb3repair.corpus import case_specs

    return case_specs()
