import pytest

from idashaper import cases

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def pendubot_bundle():
    return cases.demo_bundle("pendubot")


@pytest.fixture(scope="session")
def vtol_bundle():
    return cases.demo_bundle("vtol")


@pytest.fixture(scope="session")
def spider_bundle():
    return cases.demo_bundle("spider")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
