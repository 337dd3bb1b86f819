import os
from pathlib import Path

import numpy as np
import pytest

from resgcnn import synthetic

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def synth_manifest(tmp_path_factory) -> Path:
    """Five small synthetic scenes in the ETH/UCY text format."""
    out = tmp_path_factory.mktemp("synth")
    return synthetic.write_dataset(out, n_frames=200, seed=7)


@pytest.fixture(scope="session")
def real_manifest() -> Path | None:
    """Manifest of the real ETH/UCY scenes, if RESGCNN_ETHUCY_MANIFEST points at one."""
    path = os.environ.get("RESGCNN_ETHUCY_MANIFEST")
    if path and Path(path).is_file():
        return Path(path)
    return None


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
