import numpy as np
import pytest

from pour.geometry import EtfFrame, make_etf
from pour.toy_model import Layer, ToyModel


def identity_model(frame: EtfFrame, scale: float = 1.0) -> ToyModel:
    """Identity extractor on R^d with head columns ``scale * v_c`` (an exact NC model)."""
    d = frame.ambient_dim
    layer = Layer(np.eye(d), np.zeros(d), "linear")
    return ToyModel([layer], scale * frame.directions.T.copy())


@pytest.fixture
def tetra() -> EtfFrame:
    return make_etf(4, 3, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One line per acceptance criterion, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
