import pytest

from probselect.fleet import get_workload

ACCEPTANCE_LOG: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LOG:
            terminalreporter.write_line(line)


@pytest.fixture
def resnet():
    return get_workload("ResNet-50")


@pytest.fixture
def mobilenet():
    return get_workload("MobileNetV2")


@pytest.fixture
def alexnet():
    return get_workload("AlexNet")
