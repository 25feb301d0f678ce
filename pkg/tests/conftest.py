import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from codeimage import cnn, harness  # noqa: E402
from codeimage.corpus import generate_synthetic_corpus  # noqa: E402
from codeimage.ingest import normalize  # noqa: E402

CORPUS_PAIRS = 200
CORPUS_SEED = 0
_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one of the ten acceptance criteria")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    number, title = marker.args
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    _ACCEPTANCE[number] = (status, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, title, detail = _ACCEPTANCE[number]
        line = f"criterion {number:2d} {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))


@pytest.fixture(scope="session")
def corpus_samples():
    """Normalized samples of the 200-pair synthetic corpus."""
    return [normalize(s) for s in generate_synthetic_corpus(CORPUS_PAIRS, seed=CORPUS_SEED)]


@pytest.fixture(scope="session")
def corpus_structures(corpus_samples):
    return harness.analyze(corpus_samples)


@pytest.fixture(scope="session")
def k5_folds(corpus_structures):
    """5-fold evaluation at k=5 with 30 epochs, shared by the slow tests."""
    config = harness.PipelineConfig(k=5, seed=0, train=cnn.TrainConfig(epochs=30))
    return harness.evaluate_structures(corpus_structures, config)


@pytest.fixture(scope="session")
def small_structures():
    samples = [normalize(s) for s in generate_synthetic_corpus(12, seed=5)]
    return harness.analyze(samples)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
