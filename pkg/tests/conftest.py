import os
import sys

import numpy as np
import pytest

# 项目根目录加入 sys.path, 以便导入 app 与 config
ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from app.dmarkov import model_from_emission  # noqa: E402


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Logs go to a temp dir and the run ledger is off unless a test enables it."""
    monkeypatch.setenv('SYMDYN_LOG_DIR', str(tmp_path / 'logs'))
    monkeypatch.setenv('SYMDYN_RECORD_RUNS', 'false')
    monkeypatch.setenv('SYMDYN_THREADS', '1')
    monkeypatch.delenv('SYMDYN_LEDGER_URL', raising=False)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _random_emission(rng, n_states, alphabet_size, concentration=1.0):
    return rng.dirichlet(np.full(alphabet_size, concentration), size=n_states)


@pytest.fixture
def random_emission():
    return _random_emission


@pytest.fixture
def make_model():
    """Builds a complete model from an emission matrix."""
    def _make(emission, depth, counts=None, prior_weight=0.0):
        return model_from_emission(np.asarray(emission, dtype=np.float64), depth, counts=counts, prior_weight=prior_weight)
    return _make


@pytest.fixture
def random_model(make_model):
    """Random strictly positive sliding-block model."""
    def _random(rng, alphabet_size=3, depth=2):
        emission = _random_emission(rng, alphabet_size ** depth, alphabet_size)
        return make_model(emission, depth)
    return _random


@pytest.fixture
def lumpable_model(make_model):
    """|A| = 3, D = 2; each word emits by its last symbol, so rows take exactly 3 values."""
    base = np.array([
        [0.8, 0.1, 0.1],
        [0.1, 0.8, 0.1],
        [0.1, 0.1, 0.8],
    ])
    emission = np.array([base[q % 3] for q in range(9)])
    return make_model(emission, 2), base


def write_series(path, values):
    np.savetxt(path, np.asarray(values, dtype=np.float64), fmt='%.17g')
    return str(path)


@pytest.fixture
def series_file(tmp_path):
    def _write(name, values):
        return write_series(tmp_path / name, values)
    return _write


@pytest.fixture
def sine_noise(rng):
    """Sine with a 25-sample period plus Gaussian noise."""
    t = np.arange(5000)
    return np.sin(2 * np.pi * t / 25.0) + 0.3 * rng.standard_normal(t.size)


@pytest.fixture
def depth_two_source(make_model):
    """|A| = 3, D = 2 sliding-block source whose one-step matrix has eigenvalues 1, 0.3 and 0.2."""
    one_step = np.array([
        [16 / 30, 7 / 30, 7 / 30],
        [7 / 30, 29 / 60, 17 / 60],
        [7 / 30, 17 / 60, 29 / 60],
    ])
    return make_model(np.array([one_step[q % 3] for q in range(9)]), 2)


@pytest.fixture
def jittered(rng):
    """Real-valued series whose sorted order keeps symbols in their own bands."""
    def _jitter(symbols, width=0.25):
        return np.asarray(symbols, dtype=np.float64) + width * rng.random(len(symbols))
    return _jitter
