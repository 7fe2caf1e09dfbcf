import pytest


def pytest_addoption(parser):
    parser.addoption("--fullscale", action="store_true", default=False,
                     help="also run the full-duration pipeline scenarios (hours of CPU)")


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_collection_modifyitems(config, items):
    if config.getoption("--fullscale"):
        return
    skip = pytest.mark.skip(reason="full-duration scenario; pass --fullscale to run")
    for item in items:
        if "fullscale" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def report(request):
    """Record a one-line PASS/FAIL verdict that is echoed in the terminal summary."""

    def _record(criterion: str, passed: bool, detail: str):
        line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
        request.config._acceptance_lines.append(line)
        print(line)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
