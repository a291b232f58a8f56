import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.errors import ZeroSignalError
from app.models.network import Arch
from app.services.grad_engine import (
    backward,
    finite_diff_check,
    loss_and_gradients,
    nmse_per_sample,
    nmse_value_and_grad,
    perturb_network,
    soft_threshold_adjoint,
)
from app.services.classic_solvers import soft_threshold
from app.services.unfolded_nets import forward, init_network
from conftest import make_batch, make_dictionary


def test_nmse_examples():
    """Test NMSE on exact, zero and undefined cases"""
    x = np.array([1.0, 0.0, 1j])
    assert nmse_per_sample(x, x)[0] == 0.0
    assert nmse_per_sample(np.zeros(3), x)[0] == pytest.approx(1.0)
    with pytest.raises(ZeroSignalError):
        nmse_per_sample(x, np.zeros(3))


def test_nmse_gradient_matches_finite_differences(rng):
    """Test the NMSE gradient"""
    X = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    X_hat = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    _, grad = nmse_value_and_grad(X_hat, X)
    h = 1e-6
    for index in [(0, 0), (1, 2), (2, 3)]:
        for direction, part in ((1.0, "real"), (1j, "imag")):
            plus, minus = X_hat.copy(), X_hat.copy()
            plus[index] += direction * h
            minus[index] -= direction * h
            numeric = (np.mean(nmse_per_sample(plus, X)) - np.mean(nmse_per_sample(minus, X))) / (2 * h)
            assert numeric == pytest.approx(getattr(grad[index], part), rel=1e-6, abs=1e-9)


def test_soft_threshold_adjoint_matches_finite_differences(rng):
    """Test the soft-threshold pullback"""
    u = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    G = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    beta = 0.7
    u = u[np.abs(np.abs(u) - beta) > 1e-3]
    G = G[:u.size]
    loss = lambda v, b: float(np.real(np.vdot(G, soft_threshold(v, b))))
    G_u, g_beta = soft_threshold_adjoint(u, beta, G)
    h = 1e-7
    for i in range(u.size):
        e = np.zeros(u.size, dtype=complex)
        e[i] = h
        assert (loss(u + e, beta) - loss(u - e, beta)) / (2 * h) == pytest.approx(G_u[i].real, abs=1e-6)
        e[i] = 1j * h
        assert (loss(u + e, beta) - loss(u - e, beta)) / (2 * h) == pytest.approx(G_u[i].imag, abs=1e-6)
    assert (loss(u, beta + h) - loss(u, beta - h)) / (2 * h) == pytest.approx(g_beta, abs=1e-6)


@pytest.mark.parametrize("arch", list(Arch))
def test_finite_difference_check_all_architectures(arch):
    """Every raw real coordinate at M=6, N=16, T=3 over 10 samples"""
    D = make_dictionary(6, 16, seed=0)
    rng = np.random.default_rng([0, list(Arch).index(arch)])
    net = perturb_network(init_network(arch, 3, D), rng)
    Y, X = make_batch(D, 10, seed=21)
    checked = 0
    for y, x in zip(Y, X):
        report = finite_diff_check(net, D, y, x, step=1e-5, tolerance=1e-4)
        if report.excluded:
            continue
        checked += 1
        assert report.passed, f"{arch.value}: {report.failures[:3]}"
        assert report.checked > 0
    assert checked >= 5


def test_finite_difference_check_excludes_the_lift_kink(tiny_dictionary):
    """At initialization the Gram matrix sits exactly at lambda_min = 0"""
    net = init_network(Arch.THADMMNET, 2, tiny_dictionary)
    Y, X = make_batch(tiny_dictionary, 1, seed=3)
    report = finite_diff_check(net, tiny_dictionary, Y[0], X[0])
    assert report.excluded
    assert "lambda_min" in report.reason


def test_stop_gradient_eta_only_changes_generator_gradients(tiny_dictionary):
    """Test stopping the lift gradient"""
    D = tiny_dictionary
    net = perturb_network(init_network(Arch.THADMMNET, 2, D), np.random.default_rng(5))
    Y, X = make_batch(D, 4, seed=6)
    loss, full = loss_and_gradients(net, D, Y, X)
    stopped_loss, stopped = loss_and_gradients(net, D, Y, X, stop_gradient_eta=True)
    assert loss == stopped_loss
    for t in range(net.T):
        assert_allclose(full.layers[t]["rho_raw"], stopped.layers[t]["rho_raw"])
        assert_allclose(full.layers[t]["beta_raw"], stopped.layers[t]["beta_raw"])
    assert any(not np.allclose(full.layers[t]["W"], stopped.layers[t]["W"]) for t in range(net.T))


def test_stop_gradient_eta_is_a_no_op_without_lift(tiny_dictionary):
    """Test stopping the lift gradient when no lift is active"""
    D = tiny_dictionary
    net = init_network(Arch.THADMMNET, 2, D)
    Y, X = make_batch(D, 4, seed=7)
    _, full = loss_and_gradients(net, D, Y, X)
    _, stopped = loss_and_gradients(net, D, Y, X, stop_gradient_eta=True)
    for t in range(net.T):
        assert_allclose(full.layers[t]["W"], stopped.layers[t]["W"])


def test_gradient_set_is_finite_and_shaped(tiny_dictionary):
    """Test gradients mirror the parameter arrays"""
    D = tiny_dictionary
    Y, X = make_batch(D, 5, seed=8)
    for arch in Arch:
        net = init_network(arch, 2, D)
        _, grads = loss_and_gradients(net, D, Y, X)
        assert grads.all_finite()
        for t, arrays in enumerate(net.parameter_arrays()):
            assert set(grads.layers[t]) == set(arrays)
            for name, value in arrays.items():
                assert grads.layers[t][name].shape == value.shape


@pytest.mark.parametrize("arch", list(Arch))
def test_backward_is_linear_in_the_loss_gradient(tiny_dictionary, arch):
    """backward(a g1 + b g2) = a backward(g1) + b backward(g2); a zero gradient gives zeros"""
    D = tiny_dictionary
    rng = np.random.default_rng([9, list(Arch).index(arch)])
    net = perturb_network(init_network(arch, 3, D), rng)
    Y, _ = make_batch(D, 4, seed=10)
    result = forward(net, Y, D)
    g1 = rng.standard_normal(result.output.shape) + 1j * rng.standard_normal(result.output.shape)
    g2 = rng.standard_normal(result.output.shape) + 1j * rng.standard_normal(result.output.shape)
    a, b = 0.7, -1.3
    combined = backward(net, result, a * g1 + b * g2)
    expected = backward(net, result, g1).scale(a) + backward(net, result, g2).scale(b)
    for (_, name, got), (_, _, want) in zip(combined.items(), expected.items()):
        assert_allclose(got, want, rtol=1e-10, atol=1e-12, err_msg=name)
    zero = backward(net, result, np.zeros_like(g1))
    assert all(np.all(value == 0) for _, _, value in zero.items())
