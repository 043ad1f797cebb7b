import sys
from collections import OrderedDict
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
SCENES = ROOT / "scenes"

# criterion number -> {"title", "outcomes", "details"}
_CRITERIA: "OrderedDict[int, dict]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when != "call" and not rep.failed:
        return
    number, title = mark.args
    slot = _CRITERIA.setdefault(number, {"title": title, "outcomes": [], "details": []})
    slot["outcomes"].append(rep.passed)
    slot["details"] += [v for k, v in rep.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        slot = _CRITERIA[number]
        status = "PASS" if all(slot["outcomes"]) else "FAIL"
        detail = "; ".join(slot["details"])
        tr.write_line(f"criterion {number} [{status}] {slot['title']}: {detail}")


@pytest.fixture
def detail(record_property):
    """Append a human-readable measurement to the criterion summary line."""
    def add(text: str):
        record_property("detail", text)
        print(text, file=sys.stderr)
    return add


@pytest.fixture(scope="session")
def scenes_dir() -> Path:
    return SCENES
