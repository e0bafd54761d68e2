import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from deduce.smae import SmaeConfig  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_cfg():
    """Encoder small enough for exhaustive finite-difference checks."""
    return SmaeConfig(block_dims=[3, 2, 4], d_model=8, n_heads=2, dropout_rate=0.0, embed_dim=3, n_clusters=3, mlp_hidden=6)


ACCEPTANCE_LINES: list[str] = []


def record(name: str, ok: bool, detail: str = "") -> bool:
    """Log one acceptance verdict for the terminal summary; returns ``ok``."""
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
