"""One PASS/FAIL line per acceptance criterion at the end of the run."""

import pytest

_RESULTS = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    key = props["criterion"]
    detail = props.get("detail", "")
    if report.outcome != "passed" and not detail:
        detail = report.longrepr.reprcrash.message if hasattr(report.longrepr, "reprcrash") else str(report.longrepr)
    _RESULTS[key] = (props["title"], report.outcome == "passed", detail)


@pytest.fixture(autouse=True)
def _tag_criterion(request):
    marker = request.node.get_closest_marker("acceptance")
    if marker is not None:
        number, title = marker.args
        request.node.user_properties.append(("criterion", number))
        request.node.user_properties.append(("title", title))


def _sort_key(number):
    head = number.rstrip("abcdefgh")
    return (int(head), number[len(head):])


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS, key=_sort_key):
        title, ok, detail = _RESULTS[number]
        line = f"[{'PASS' if ok else 'FAIL'}] {number}. {title}"
        if detail:
            line += f": {detail.splitlines()[0]}"
        terminalreporter.write_line(line)
