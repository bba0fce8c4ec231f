import time

import pytest

from qnnkit import available_backends

BACKENDS = available_backends()

_results: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title, limit_s): acceptance criterion")


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def report(request):
    """Attach a measured detail to the acceptance summary line."""
    def add(text):
        request.node.user_properties.append(("detail", str(text)))
    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_call(item):
    t0 = time.perf_counter()
    yield
    item.user_properties.append(("elapsed", time.perf_counter() - t0))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    num, title = mark.args[0], mark.args[1]
    entry = _results.setdefault(num, {"title": title, "status": [], "details": [],
                                      "elapsed": 0.0})
    entry["status"].append(rep.outcome)
    for key, val in item.user_properties:
        if key == "detail":
            entry["details"].append(val)
        elif key == "elapsed":
            entry["elapsed"] += val


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_results):
        e = _results[num]
        if "failed" in e["status"]:
            verdict = "FAIL"
        elif all(s == "skipped" for s in e["status"]):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        line = f"criterion {num}: {verdict}  {e['title']}  ({e['elapsed']:.2f} s)"
        tr.write_line(line)
        for d in e["details"]:
            tr.write_line(f"    {d}")
