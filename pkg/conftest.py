import numpy as np
import pytest

from app.models.geometry import FrequencyGrid
from app.services.array_geometry import build_dictionary, subsample_positions
from app.services.datagen import draw_sample


def make_dictionary(M: int, N: int, aperture: int = None, seed: int = 0):
    layout = subsample_positions(2 * M if aperture is None else aperture, M, seed)
    return build_dictionary(layout, FrequencyGrid(N, layout.gamma))


def make_batch(D, count: int, seed: int = 0, snr_db: float = 20.0, k_range=(1, 3)):
    """Stacked (y, x) rows drawn like the training data."""
    rng = np.random.default_rng(seed)
    samples = [draw_sample(rng, D.layout, D.grid, snr_db, 1.0 / D.M, k_range) for _ in range(count)]
    return np.stack([s.y for s in samples]), np.stack([s.x for s in samples])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_dictionary():
    """M=8 elements drawn from an aperture of 15 over a 32-bin grid."""
    return make_dictionary(8, 32, aperture=15)


@pytest.fixture
def tiny_dictionary():
    return make_dictionary(6, 16)


@pytest.fixture(autouse=True)
def _no_debug_checks(monkeypatch):
    monkeypatch.delenv("THADMM_DEBUG_CHECKS", raising=False)
