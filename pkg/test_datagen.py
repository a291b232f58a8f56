import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.errors import BinCollisionError, DatasetFormatError, FeasibilityError, ZeroSignalError
from app.models.geometry import FrequencyGrid
from app.models.scene import FLAG_FIXED_SNR, FLAG_NOISE_PER_COMPONENT, HEADER_DTYPE, Scene
from app.schemas.data import DatasetSpec
from app.services.array_geometry import circular_distance, subsample_positions
from app.services.datagen import (
    add_noise_at_snr,
    draw_sample,
    generate_dataset,
    grid_ground_truth,
    read_dataset,
    sample_scene,
    synthesize_measurement,
    validate_dataset,
    write_dataset,
)


@pytest.fixture
def layout():
    return subsample_positions(15, 8, rng_seed=2)


def test_header_is_28_bytes():
    """Test dataset header size"""
    assert HEADER_DTYPE.itemsize == 28


def test_scene_respects_separation(rng):
    """Test every pair of targets keeps the minimum separation"""
    for _ in range(200):
        scene = sample_scene(rng, 20, 1.0 / 20, (1, 8))
        assert 1 <= scene.K <= 8
        assert np.all((scene.freqs >= -0.5) & (scene.freqs < 0.5))
        assert np.all(np.abs(scene.amps) < 1.0)
        if scene.K > 1:
            gaps = circular_distance(scene.freqs[:, None], scene.freqs[None, :])
            np.fill_diagonal(gaps, 1.0)
            assert gaps.min() >= 1.0 / 20


def test_infeasible_separation_is_rejected(rng):
    """Test a separation that cannot fit the targets"""
    with pytest.raises(FeasibilityError):
        sample_scene(rng, 4, 0.2, (1, 8))


def test_measurement_is_off_grid_superposition(layout):
    """Test the clean measurement sums off-grid steering vectors"""
    scene = Scene(freqs=np.array([0.1234, -0.3]), amps=np.array([0.5, 0.25j]))
    y = synthesize_measurement(scene, layout)
    expected = 0.5 * np.exp(2j * np.pi * layout.positions * 0.1234) \
        + 0.25j * np.exp(2j * np.pi * layout.positions * -0.3)
    assert_allclose(y, expected)


def test_noise_hits_requested_snr(rng):
    """Average noise energy over many draws matches ||y||^2 / 10^(snr/10)"""
    y_c = np.exp(2j * np.pi * np.arange(16) * 0.1)
    energies = []
    for _ in range(4000):
        y, sigma2 = add_noise_at_snr(y_c, 10.0, rng)
        energies.append(np.sum(np.abs(y - y_c) ** 2))
    assert sigma2 == pytest.approx(1.6)
    assert np.mean(energies) == pytest.approx(1.6, rel=0.05)


def test_noise_per_component_scales_each_entry(rng):
    """Test per-entry noise variance"""
    y_c = np.ones(16, dtype=complex)
    energies = [np.sum(np.abs(add_noise_at_snr(y_c, 10.0, rng, noise_per_component=True)[0] - y_c) ** 2)
                for _ in range(4000)]
    assert np.mean(energies) == pytest.approx(16 * 1.6, rel=0.05)


def test_zero_measurement_has_no_snr(rng):
    """Test SNR scaling of an all-zero measurement"""
    with pytest.raises(ZeroSignalError):
        add_noise_at_snr(np.zeros(4, dtype=complex), 10.0, rng)


def test_ground_truth_snaps_to_nearest_bin():
    """Test gridding to the nearest bin"""
    grid = FrequencyGrid(8)
    scene = Scene(freqs=np.array([0.13, -0.49]), amps=np.array([1.0, 2j]))
    x = grid_ground_truth(scene, grid)
    assert np.flatnonzero(x).tolist() == [0, 5]
    assert x[5] == 1.0 and x[0] == 2j


def test_ground_truth_tie_goes_to_lower_bin():
    """Test a frequency midway between bins"""
    grid = FrequencyGrid(8)
    x = grid_ground_truth(Scene(freqs=np.array([0.0625]), amps=np.array([1.0])), grid)
    assert np.flatnonzero(x).tolist() == [4]


def test_ground_truth_collision():
    """Test two targets on one bin"""
    grid = FrequencyGrid(8)
    with pytest.raises(BinCollisionError):
        grid_ground_truth(Scene(freqs=np.array([0.01, 0.02]), amps=np.array([1.0, 1.0])), grid)


def test_generated_file_round_trips(tmp_path, layout):
    """Every record reads back bitwise equal to a fresh draw from its RNG stream"""
    grid = FrequencyGrid(32)
    spec = DatasetSpec(count=5, snr_db=[0.0, 20.0], k_max=3, seed=9, stream=2)
    header = generate_dataset(spec, layout, grid, tmp_path / "test.thdn")
    assert header.count == 10 and not header.fixed_snr
    dataset = read_dataset(tmp_path / "test.thdn")
    assert len(dataset) == 10
    assert dataset.snr_levels().tolist() == [0.0, 20.0]
    for index in (0, 7):
        rng = np.random.default_rng([9, 2, index])
        sample = draw_sample(rng, layout, grid, spec.snr_db[index // 5], spec.min_sep(8), (1, 3))
        assert np.array_equal(dataset.y[index], sample.y)
        assert np.array_equal(dataset.x[index], sample.x)
        assert dataset.K[index] == sample.scene.K
    assert validate_dataset(dataset, spec.min_sep(8)) == []


def test_same_seed_gives_identical_files(tmp_path, layout):
    """Test dataset files are byte-identical under one seed"""
    grid = FrequencyGrid(32)
    spec = DatasetSpec(count=6, snr_db=[15.0], k_max=3, seed=4)
    generate_dataset(spec, layout, grid, tmp_path / "a.thdn")
    generate_dataset(spec, layout, grid, tmp_path / "b.thdn", noise_per_component=False)
    assert (tmp_path / "a.thdn").read_bytes() == (tmp_path / "b.thdn").read_bytes()


def test_header_flags(tmp_path, layout):
    """Test the fixed-SNR and noise flags in the header"""
    grid = FrequencyGrid(32)
    spec = DatasetSpec(count=2, snr_db=[15.0], k_max=3)
    header = generate_dataset(spec, layout, grid, tmp_path / "f.thdn", noise_per_component=True)
    assert header.flags == FLAG_FIXED_SNR | FLAG_NOISE_PER_COMPONENT
    assert read_dataset(tmp_path / "f.thdn").header.noise_per_component


def test_write_dataset_round_trip(tmp_path, layout, rng):
    """Test writing and reading back a dataset"""
    grid = FrequencyGrid(32)
    samples = [draw_sample(rng, layout, grid, 10.0, 1.0 / 8, (1, 4)) for _ in range(3)]
    write_dataset(samples, tmp_path / "w.thdn", M=8, N=32)
    dataset = read_dataset(tmp_path / "w.thdn")
    assert np.array_equal(dataset.x, np.stack([s.x for s in samples]))
    assert dataset.K.tolist() == [s.scene.K for s in samples]


def test_corrupt_files_are_rejected(tmp_path, layout):
    """Test truncated and mislabelled files"""
    grid = FrequencyGrid(32)
    generate_dataset(DatasetSpec(count=2, snr_db=[15.0], k_max=3), layout, grid, tmp_path / "ok.thdn")
    raw = (tmp_path / "ok.thdn").read_bytes()

    (tmp_path / "magic.thdn").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(DatasetFormatError):
        read_dataset(tmp_path / "magic.thdn")
    (tmp_path / "short.thdn").write_bytes(raw[:-3])
    with pytest.raises(DatasetFormatError):
        read_dataset(tmp_path / "short.thdn")
    (tmp_path / "tiny.thdn").write_bytes(raw[:10])
    with pytest.raises(DatasetFormatError):
        read_dataset(tmp_path / "tiny.thdn")


def test_validate_dataset_flags_bad_records(tmp_path, layout, rng):
    """Test validation reports bad records"""
    grid = FrequencyGrid(32)
    samples = [draw_sample(rng, layout, grid, 10.0, 1.0 / 8, (2, 2)) for _ in range(2)]
    write_dataset(samples, tmp_path / "v.thdn", M=8, N=32)
    dataset = read_dataset(tmp_path / "v.thdn")
    dataset.x[1] = 0
    dataset.x[1, [3, 4]] = 1.0
    assert validate_dataset(dataset, 1.0 / 8) == [1]
