import os
import tempfile

os.environ.setdefault('MATSF_LOGDIR', tempfile.mkdtemp(prefix='matsf_log_'))

import numpy as np
import pytest


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
        help="run the desk-scale training runs")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale run, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _no_env_seed(monkeypatch):
    monkeypatch.delenv('MATSF_SEED', raising=False)


@pytest.fixture
def windowed():
    """factory for small scaled datasets; targets are the next feature row"""
    from matsf.data import WindowedDataset

    def make(n=24, lookback=3, d=2, seed=0, targets=None):
        local = np.random.default_rng(seed)
        t = np.arange(n + lookback)
        series = np.stack([0.5 + 0.4 * np.sin(0.3 * t + k) for k in range(d)], axis=1)
        series += local.normal(scale=0.01, size=series.shape)
        windows = np.stack([series[j:j + lookback] for j in range(n)])
        y = series[lookback:lookback + n] if targets is None else targets
        columns = [f'v{k}' for k in range(d)]
        return WindowedDataset(windows, np.asarray(y, dtype=np.float64),
            columns, columns, lookback)
    return make
