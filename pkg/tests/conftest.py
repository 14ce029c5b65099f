import sys
from pathlib import Path

import numpy as np
import pytest

TESTS_DIR = Path(__file__).resolve().parent
if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))

FIXTURES = TESTS_DIR / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def train_pairs():
    """Committed toy (hdr, ldr) pairs."""
    from tonescope import hdrio
    pairs = []
    for hdr_path in sorted((FIXTURES / "train").glob("*.hdr")):
        png = hdr_path.with_suffix(".png")
        pairs.append((hdrio.read_hdr(hdr_path).data.astype(np.float64),
                      hdrio.read_png(png)))
    assert len(pairs) == 4
    return pairs


@pytest.fixture(scope="session")
def tiny_model(train_pairs, tmp_path_factory):
    """A briefly trained model for tests that need plausible weights."""
    from tonescope.training import TrainConfig, train
    out = tmp_path_factory.mktemp("tiny_model")
    cfg = TrainConfig(patch=64, steps=8, seed=3, out_dir=str(out))
    res = train(cfg, pairs=train_pairs)
    return res.state.model


@pytest.fixture(scope="session")
def tiny_model_path(tiny_model, tmp_path_factory):
    path = tmp_path_factory.mktemp("tiny_model_file") / "model.tsw"
    tiny_model.save(path)
    return str(path)


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines after the test summary."""
    lines = []
    for name in ("test_acceptance", "test_ui_contract"):
        mod = sys.modules.get(name)
        lines += getattr(mod, "VERDICTS", None) or []
    if not lines:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for line in lines:
        terminalreporter.write_line(line)
