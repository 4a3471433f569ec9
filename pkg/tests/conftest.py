import pytest

from tsi import pipeline
from tsi.config import parse_config

TINY = """
synthetic_length = 600
window = 16
horizons = 8,16
d_hidden = 4
d_trend = 4
d_seasonal = 4
depth = 2
steps = 10
batch_size = 4
queue_size = 16
ae_hidden = 8
ae_steps = 20
"""


@pytest.fixture(scope="session")
def tiny_text():
    return TINY


@pytest.fixture(scope="session")
def tiny_cfg():
    return parse_config(TINY)


@pytest.fixture(scope="session")
def tiny_run(tiny_cfg):
    bundle = pipeline.load_dataset(tiny_cfg)
    splits = pipeline.prepare_splits(tiny_cfg, bundle)
    model, log = pipeline.train_model(tiny_cfg, splits)
    return bundle, splits, model, log


ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
