import pytest


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="also run tests marked slow (hour-scale experiments)")


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow tier; pass --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def acceptance_log(request):
    """Collects one line per acceptance criterion for the terminal summary."""
    lines = request.config._acceptance_lines

    def log(name: str, passed, detail: str = ""):
        status = "NOT RUN" if passed is None else "PASS" if passed else "FAIL"
        lines.append(f"{status}  {name}  {detail}".rstrip())
        print(lines[-1])
    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
