import pytest

# criterion number -> (title, outcome, seconds)
_ACCEPTANCE: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): an acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    outcome = "PASS" if call.excinfo is None else "FAIL"
    _ACCEPTANCE[number] = [title, outcome, call.duration]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, outcome, secs = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{outcome}] criterion {number}: {title} ({secs:.2f}s)")


@pytest.fixture
def demo_dir(tmp_path_factory):
    from mobsynth.demo import write_demo

    return write_demo(tmp_path_factory.mktemp("demo"), n_agents=100, seed=0)
