import pytest

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion a test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    n, title = marker.args
    entry = _results.setdefault(n, {"title": title, "passed": 0, "failed": []})
    if report.passed:
        entry["passed"] += 1
    else:
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        entry = _results[n]
        verdict = "FAIL" if entry["failed"] else "PASS"
        total = entry["passed"] + len(entry["failed"])
        line = f"criterion {n:>2} {verdict}: {entry['title']} ({entry['passed']}/{total} checks)"
        terminalreporter.write_line(line)
        for name in entry["failed"]:
            terminalreporter.write_line(f"    failed: {name}")
