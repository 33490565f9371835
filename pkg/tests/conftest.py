import numpy as np
import pytest

from uit import gradcheck
from uit.labels import LabelSpace
from uit.model import UiTConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cfg():
    return gradcheck.tiny_config()


@pytest.fixture
def small_cfg():
    """Full 96x64 input geometry with a small network and label space."""
    return UiTConfig(layers=2, dim=16, bottleneck=4, heads=2, mlp_dim=48, labels=LabelSpace.small(3, 4))


VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record and print one PASS/FAIL line, then assert on it."""
    lines = request.config.stash.setdefault(VERDICTS, [])

    def record(name, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
