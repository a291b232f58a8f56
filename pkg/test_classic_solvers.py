import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.errors import ShapeMismatchError
from app.models.geometry import ArrayLayout, FrequencyGrid
from app.schemas.solvers import AdmmConfig, IstaConfig, ThresholdConvention
from app.services.array_geometry import build_dictionary
from app.services.classic_solvers import (
    admm_run,
    ista_run,
    lasso_objective,
    max_singular_value,
    soft_threshold,
)
from conftest import make_batch


def test_soft_threshold_examples():
    """Test soft thresholding on scalars and vectors"""
    assert soft_threshold(3 + 4j, 1.0) == pytest.approx(2.4 + 3.2j)
    assert soft_threshold(0.5, 1.0) == 0
    out = soft_threshold(np.array([2.0, -0.1j, 0.0]), 1.0)
    assert_allclose(out, [1.0, 0.0, 0.0])


def test_soft_threshold_preserves_phase(rng):
    """Test soft thresholding shrinks magnitude only"""
    z = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    out = soft_threshold(z, 0.3)
    active = np.abs(z) > 0.3
    assert_allclose(np.angle(out[active]), np.angle(z[active]))
    assert_allclose(np.abs(out[active]), np.abs(z[active]) - 0.3)
    assert np.all(out[~active] == 0)


def test_admm_kappa_conventions():
    """Test the two ADMM threshold conventions"""
    assert AdmmConfig(rho=2.0, tau=0.1).kappa == pytest.approx(0.2)
    standard = AdmmConfig(rho=2.0, tau=0.1, threshold_convention=ThresholdConvention.STANDARD)
    assert standard.kappa == pytest.approx(0.05)


def test_ista_decreases_lasso_objective(small_dictionary):
    """Step 1/sigma_max^2 makes ISTA a descent method"""
    D = small_dictionary
    y, _ = make_batch(D, 1, seed=5)
    cfg = IstaConfig(mu=1.0 / max_singular_value(D) ** 2, tau=0.5, iterations=60)
    trace = ista_run(D, y[0], cfg)
    objectives = [lasso_objective(D, y[0], x, cfg.tau) for x in trace]
    assert len(trace) == 61
    assert np.all(np.diff(objectives) <= 1e-9)


def test_admm_and_ista_reach_the_same_minimiser(small_dictionary):
    """With rho = 1 both threshold conventions give kappa = tau, so ADMM solves the same LASSO as ISTA"""
    D = small_dictionary
    Y, _ = make_batch(D, 3, seed=6)
    tau = 0.5
    mu = 1.0 / max_singular_value(D) ** 2
    ista = ista_run(D, Y, IstaConfig(mu=mu, tau=tau, iterations=30000), trace=False)
    _, z, _ = admm_run(D, Y, AdmmConfig(rho=1.0, tau=tau, iterations=3000), trace=False)
    for got, reference in zip(z, ista):
        assert np.linalg.norm(got - reference) <= 1e-4 * np.linalg.norm(reference)


def test_admm_primal_residual_vanishes(small_dictionary):
    """||x - z|| drops below 1e-6 within 200 iterations on noiseless single-target scenes"""
    D = small_dictionary
    rng = np.random.default_rng(41)
    for q in rng.choice(D.N, size=5, replace=False):
        y = D.A[:, q] * np.exp(2j * np.pi * rng.uniform())
        trace = admm_run(D, y, AdmmConfig(rho=1.0, tau=0.5, iterations=200))
        residuals = [np.linalg.norm(x - z) for x, z, _ in trace[1:]]
        assert min(residuals) < 1e-6


def test_admm_batch_matches_single_runs(small_dictionary):
    """Test batched ADMM against one run per row"""
    D = small_dictionary
    Y, _ = make_batch(D, 4, seed=7)
    cfg = AdmmConfig(rho=1.0, tau=0.1, iterations=20)
    batch = admm_run(D, Y, cfg, trace=False)
    for i in range(4):
        single = admm_run(D, Y[i], cfg, trace=False)
        for got, expected in zip(batch, single):
            assert_allclose(got[i], expected, rtol=1e-12, atol=1e-14)


def test_admm_trace_starts_at_initial_point(small_dictionary):
    """Test ADMM trace starts at the zero iterate"""
    D = small_dictionary
    Y, _ = make_batch(D, 1, seed=8)
    trace = admm_run(D, Y[0], AdmmConfig(tau=0.1, iterations=3))
    assert len(trace) == 4
    assert all(np.all(v == 0) for v in trace[0])


def test_solvers_reject_wrong_measurement_length(small_dictionary):
    """Test solvers with a measurement of the wrong length"""
    with pytest.raises(ShapeMismatchError):
        ista_run(small_dictionary, np.zeros(3), IstaConfig(mu=0.1, tau=0.1))


def test_max_singular_value_of_dft_dictionary():
    """A full ULA with M = N gives A^H A = M I, so sigma_max = sqrt(M)"""
    D = build_dictionary(ArrayLayout(np.arange(16)), FrequencyGrid(16))
    assert max_singular_value(D) == pytest.approx(4.0)
    assert max_singular_value(D) <= np.sqrt(D.M * D.N)
