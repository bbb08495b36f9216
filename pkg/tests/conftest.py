import pytest

from _instances import diamond, diamond_flows, bypass_network, bypass_flows, bypass_span, parallel3


@pytest.fixture
def diamond_net():
    return diamond()


@pytest.fixture
def diamond_flowset():
    return diamond_flows()


@pytest.fixture
def bypass():
    return bypass_span()


@pytest.fixture
def bypass_net():
    return bypass_network(), bypass_flows()


@pytest.fixture
def par3():
    return parallel3()


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_line(request):
    """Record one PASS/FAIL line per criterion and fail the test on FAIL."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
