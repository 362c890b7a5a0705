import pytest

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): exit criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and (report.when == "call" or (report.when == "setup" and not report.passed)):
        detail = dict(report.user_properties).get("detail", "")
        _ACCEPTANCE.append((marker.args[0], report.outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, detail in _ACCEPTANCE:
        line = f"[{'PASS' if outcome == 'passed' else 'FAIL'}] {name}"
        terminalreporter.write_line(f"{line}: {detail}" if detail else line)
