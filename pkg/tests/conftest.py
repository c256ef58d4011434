import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        number, title = marker.args
        detail = dict(item.user_properties).get("detail", "")
        _RESULTS[number] = (title, rep.outcome, rep.duration, detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, outcome, duration, detail = _RESULTS[number]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        line = f"criterion {number:2d} {verdict}  {title} ({duration:.1f} s)"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
