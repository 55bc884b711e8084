import pytest

_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.fixture
def criterion(request):
    """report(number, passed, detail): print a PASS/FAIL line, keep it for the summary, assert."""
    results = request.config.stash[_RESULTS]

    def report(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number:2d}: {detail}"
        results.append((number, line))
        print(line)
        assert passed, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[_RESULTS]
    if results:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(results):
            terminalreporter.write_line(line)
