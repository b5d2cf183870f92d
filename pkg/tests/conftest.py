import numpy as np
import pytest

from gnss_sentry.lstm import TrainConfig, train
from gnss_sentry.streams import DEFAULT_FEATURES, split, synchronize
from gnss_sentry.synthetic import make_synthetic_drive

ACCEPTANCE_RESULTS: dict[int, str] = {}


@pytest.fixture(scope="session")
def small_drive():
    return make_synthetic_drive(240, seed=3)


@pytest.fixture(scope="session")
def small_frames(small_drive):
    return synchronize(small_drive.gnss, small_drive.can, small_drive.imu)


@pytest.fixture(scope="session")
def small_model(small_frames):
    tr, va = split(small_frames, n_train=180)
    cfg = TrainConfig(hidden_size=8, epochs=15, batch_size=16, window_len=4, seed=5)
    model, _ = train(tr, va, cfg, feature_names=DEFAULT_FEATURES)
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[k])
