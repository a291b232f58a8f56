import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from app.errors import CheckpointFormatError, CheckpointMismatchError, InvalidArgumentError, NonFiniteError
from app.models.network import Arch, GradientSet
from app.models.scene import Dataset, DatasetHeader
from app.schemas.train import TrainConfig
from app.services.trainer import (
    TrainState,
    adam_step,
    load_checkpoint,
    mean_nmse,
    save_checkpoint,
    to_db,
    train,
    write_loss_csv,
)
from app.services.unfolded_nets import assert_operators_positive_definite, init_network
from conftest import make_batch, make_dictionary


def make_dataset(D, count, seed):
    Y, X = make_batch(D, count, seed=seed, snr_db=15.0)
    K = np.count_nonzero(X, axis=1)
    return Dataset(header=DatasetHeader(M=D.M, N=D.N, count=count), snr_db=np.full(count, 15.0), K=K, y=Y, x=X)


@pytest.fixture(scope="module")
def problem():
    D = make_dictionary(8, 32, aperture=15, seed=3)
    return D, make_dataset(D, 64, seed=1), make_dataset(D, 32, seed=2)


def assert_same_parameters(a, b):
    for left, right in zip(a.parameter_arrays(), b.parameter_arrays()):
        assert left.keys() == right.keys()
        for name in left:
            assert_array_equal(left[name], right[name])


def test_to_db():
    """Test dB conversion and its floor"""
    assert to_db(0.1) == pytest.approx(-10.0)
    assert to_db(0.0) == -100.0


def test_zero_learning_rate_leaves_parameters(problem):
    """lr = 0 keeps every parameter and gives a flat loss curve"""
    D, train_set, val_set = problem
    net = init_network(Arch.THADMMNET, 3, D)
    before = net.copy()
    cfg = TrainConfig(epochs=3, batch_size=16, learning_rate=0.0)
    _, history = train(net, D, train_set, val_set, cfg)
    assert_same_parameters(net, before)
    assert len(history) == 3
    assert len({round(r.val_nmse_db, 12) for r in history}) == 1


def test_training_reduces_validation_nmse(problem):
    """Test a short TLISTA run improves validation NMSE"""
    D, train_set, val_set = problem
    net = init_network(Arch.TLISTA, 3, D)
    start = to_db(mean_nmse(net, D, val_set))
    cfg = TrainConfig(epochs=10, batch_size=16, learning_rate=1e-3)
    _, history = train(net, D, train_set, val_set, cfg)
    assert history[-1].val_nmse_db < start


def test_operator_stays_positive_definite_every_step(problem, monkeypatch):
    """200 optimizer steps with the lambda_min check after each one"""
    monkeypatch.setenv("THADMM_DEBUG_CHECKS", "1")
    D, train_set, val_set = problem
    net = init_network(Arch.THADMMNET, 3, D)
    steps = []
    cfg = TrainConfig(epochs=25, batch_size=8, learning_rate=5e-3)
    train(net, D, train_set, val_set, cfg,
          on_step=lambda state: (assert_operators_positive_definite(state.network), steps.append(state.step)))
    assert len(steps) == 200


def test_max_steps_stops_early(problem):
    """Test the optimizer step cap"""
    D, train_set, val_set = problem
    net = init_network(Arch.LISTA, 2, D)
    state = TrainState.fresh(net)
    train(net, D, train_set, val_set, TrainConfig(epochs=5, batch_size=16, max_steps=6), state=state)
    assert state.step == 6
    assert state.epoch == 2


def test_batch_larger_than_training_set(problem):
    """Test a batch larger than the training set"""
    D, train_set, val_set = problem
    with pytest.raises(InvalidArgumentError):
        train(init_network(Arch.LISTA, 1, D), D, train_set, val_set, TrainConfig(epochs=1, batch_size=1000))


def test_adam_rejects_non_finite_gradients(problem):
    """Test Adam with a NaN gradient"""
    D, _, _ = problem
    net = init_network(Arch.ADMMNET, 1, D)
    grads = GradientSet.zeros_like(net)
    grads.layers[0]["W"][0, 0] = np.nan
    with pytest.raises(NonFiniteError):
        adam_step(TrainState.fresh(net), grads, TrainConfig())


def test_adam_gradient_clip(problem):
    """Test global gradient-norm clipping"""
    D, _, _ = problem
    net = init_network(Arch.THADMMNET, 1, D)
    grads = GradientSet.zeros_like(net)
    grads.layers[0]["W"][3] = 1000.0 + 0j
    state = adam_step(TrainState.fresh(net), grads, TrainConfig(grad_clip=1.0))
    assert state.step == 1
    assert np.count_nonzero(state.m[0]["W"]) == 1
    assert state.m[0]["W"].max() == pytest.approx(0.1 * 1.0)


@pytest.mark.parametrize("arch", list(Arch))
def test_checkpoint_round_trip_is_exact(tmp_path, problem, arch):
    """Test checkpoint save and load"""
    D, train_set, val_set = problem
    net = init_network(arch, 2, D)
    state = TrainState.fresh(net, seed=5)
    train(net, D, train_set, val_set, TrainConfig(epochs=1, batch_size=32, learning_rate=1e-3), state=state)
    path = save_checkpoint(state, tmp_path / "net.json")
    loaded = load_checkpoint(path, expected_arch=arch)
    assert loaded.network.arch == arch and loaded.network.T == 2
    assert_same_parameters(loaded.network, net)
    assert_array_equal(loaded.network.layout.positions, D.layout.positions)
    assert loaded.step == state.step and loaded.epoch == 1
    for layer_loaded, layer_saved in zip(loaded.v, state.v):
        for name in layer_saved:
            assert_array_equal(layer_loaded[name], layer_saved[name])


def test_resumed_training_matches_uninterrupted(tmp_path, problem):
    """Optimizer moments and the shuffling RNG are restored bitwise"""
    D, train_set, val_set = problem
    cfg = TrainConfig(epochs=2, batch_size=16, learning_rate=1e-3, seed=9)

    straight = init_network(Arch.THLISTA, 2, D)
    train(straight, D, train_set, val_set, cfg)

    first = init_network(Arch.THLISTA, 2, D)
    state = TrainState.fresh(first, cfg.seed)
    train(first, D, train_set, val_set, cfg.model_copy(update={"epochs": 1}), state=state)
    save_checkpoint(state, tmp_path / "half.json")
    resumed = load_checkpoint(tmp_path / "half.json")
    train(resumed.network, D, train_set, val_set, cfg, state=resumed)

    assert resumed.epoch == 2
    assert_same_parameters(resumed.network, straight)


def test_checkpoint_errors(tmp_path, problem):
    """Test checkpoint mismatch and corruption"""
    D, _, _ = problem
    path = save_checkpoint(TrainState.fresh(init_network(Arch.LISTA, 1, D)), tmp_path / "lista.json")
    with pytest.raises(CheckpointMismatchError):
        load_checkpoint(path, expected_arch=Arch.THADMMNET)

    (tmp_path / "garbage.json").write_text("{not json")
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(tmp_path / "garbage.json")

    document = json.loads(path.read_text())
    document["layers"][0]["W1"]["shape"] = [3, 3]
    (tmp_path / "shape.json").write_text(json.dumps(document))
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(tmp_path / "shape.json")


def test_periodic_checkpoints_and_loss_csv(tmp_path, problem):
    """Test periodic checkpoints and the loss table"""
    D, train_set, val_set = problem
    net = init_network(Arch.THADMMNET, 1, D)
    state = TrainState.fresh(net)
    train(net, D, train_set, val_set, TrainConfig(epochs=2, batch_size=32, checkpoint_every=1),
          out_dir=tmp_path, state=state)
    assert (tmp_path / "THADMMNet-T1-epoch1.json").exists()
    assert (tmp_path / "THADMMNet-T1-epoch2.json").exists()
    lines = write_loss_csv(state.history, tmp_path / "loss.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_nmse_db,val_nmse_db,wall_seconds"
    assert len(lines) == 3


def test_adam_first_step_on_a_scalar_is_minus_lr(problem):
    """A unit gradient on one scalar moves it by lr / (1 + eps) on every one of the first steps"""
    D, _, _ = problem
    net = init_network(Arch.THADMMNET, 1, D)
    before = net.copy()
    state = TrainState.fresh(net)
    cfg = TrainConfig(learning_rate=1e-3)
    for step in (1, 2, 3):
        grads = GradientSet.zeros_like(net)
        grads.layers[0]["rho_raw"][...] = 1.0
        adam_step(state, grads, cfg)
        moved = float(before.layers[0].rho_raw - net.layers[0].rho_raw)
        assert moved == pytest.approx(step * 1e-3, rel=1e-6)
    assert_array_equal(net.layers[0].W, before.layers[0].W)
    assert_array_equal(net.layers[0].beta_raw, before.layers[0].beta_raw)


def test_adam_zero_gradient_keeps_parameters_and_counts_the_step(problem):
    """Test Adam with a zero gradient"""
    D, _, _ = problem
    net = init_network(Arch.TLISTA, 2, D)
    before = net.copy()
    state = TrainState.fresh(net)
    adam_step(state, GradientSet.zeros_like(net), TrainConfig(learning_rate=1e-2))
    assert state.step == 1
    assert_same_parameters(net, before)
