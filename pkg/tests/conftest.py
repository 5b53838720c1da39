import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.skipped):
        status = "SKIP" if rep.skipped else ("PASS" if rep.passed else "FAIL")
        _RESULTS[n] = (status, title, rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        status, title, dur = _RESULTS[n]
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {title}  ({dur:.2f} s)")
