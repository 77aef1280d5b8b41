import pytest

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        num, title = marker.args
        _CRITERIA[num] = (title, rep.outcome, getattr(item, "criterion_detail", ""))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, outcome, detail = _CRITERIA[num]
        status = "PASS" if outcome == "passed" else "FAIL" if outcome == "failed" else outcome.upper()
        line = f"[{status}] criterion {num:2d}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
