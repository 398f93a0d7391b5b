import pytest

from impurity_billiard import RectangleBilliard

X1 = (0.622482, 0.275835)

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def billiard():
    return RectangleBilliard.reference()


@pytest.fixture
def x1():
    return X1


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
