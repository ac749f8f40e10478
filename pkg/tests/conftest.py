import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> (title, outcomes of its test items)
_criteria: dict[int, tuple[str, list[str]]] = {}


def pytest_collection_finish(session):
    for item in session.items:
        mark = item.get_closest_marker("criterion")
        if mark:
            num, title = mark.args
            _criteria.setdefault(num, (title, []))
            item.user_properties.append(("criterion", num))


def pytest_runtest_logreport(report):
    # count the call phase, plus setup/teardown only when they go wrong
    if report.when != "call" and report.passed:
        return
    for key, num in report.user_properties:
        if key == "criterion":
            _criteria[num][1].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        title, outcomes = _criteria[num]
        if not outcomes:
            status = "NOT RUN"
        elif all(o == "passed" for o in outcomes):
            status = "PASS"
        else:
            status = "FAIL"
        terminalreporter.write_line(f"{status} criterion {num}: {title}")
