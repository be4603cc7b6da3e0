import json
import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from matsf.data import load_csv
from matsf.synth import (CoupledProcessSpec, coupled_spec, generate, optimal_mse_floor,
    parse_synth_arg, simulate, synth_schema, true_cross_correlation, write_csv)
from matsf.utils.exceptions import ConfigError


def silent(A, noise_std=1.0, length=10_000, seed=0):
    """no drive, so only the coupling and the noise shape the series"""
    return CoupledProcessSpec(A, noise_std, 'sinusoid', dict(amplitude=0.0), length, seed)


def lag1(x):
    x = x - x.mean()
    return float(np.dot(x[1:], x[:-1]) / np.dot(x, x))


def test_decoupled_noiseless_series_is_its_sinusoid():
    spec = CoupledProcessSpec(np.zeros((2, 2)), 1e-12, 'sinusoid',
        dict(amplitude=[1.0, 2.0], period=[10.0, 5.0], phase=0.0), length=50)
    x = simulate(spec)
    t = np.arange(50)
    assert_allclose(x[:, 0], np.sin(2 * np.pi * t / 10), atol=1e-9)
    assert_allclose(x[:, 1], 2 * np.sin(2 * np.pi * t / 5), atol=1e-9)


def test_independent_ar1_autocorrelation():
    x = simulate(silent(0.5 * np.eye(2)))
    for k in range(2):
        assert abs(lag1(x[:, k]) - 0.5) < 0.05


def test_same_seed_same_frame():
    a = generate(coupled_spec(length=300, seed=9))
    b = generate(coupled_spec(length=300, seed=9))
    assert a.data.to_numpy().tobytes() == b.data.to_numpy().tobytes()
    c = generate(coupled_spec(length=300, seed=10))
    assert not np.array_equal(a.data.to_numpy(), c.data.to_numpy())


def test_frame_carries_the_true_law():
    spec = coupled_spec(d=3, coupling=0.3)
    frame = generate(spec.with_length(100))
    assert frame.columns == ['x0', 'x1', 'x2']
    assert_array_equal(np.asarray(frame.meta['coupling']), spec.coupling)
    assert frame.step == pd.Timedelta('1h')
    assert np.all(np.isfinite(frame.data.to_numpy()))


@pytest.mark.parametrize("A, noise", [
    ([[1.0, 0.0], [0.0, 0.2]], 0.1),
    ([[0.5, 0.6], [0.6, 0.5]], 0.1),
    ([[0.5]], 0.0),
    ])
def test_unstable_or_noiseless_spec(A, noise):
    with pytest.raises(ConfigError):
        simulate(CoupledProcessSpec(A, noise, length=10))


def test_non_square_coupling():
    with pytest.raises(ConfigError):
        CoupledProcessSpec([[0.1, 0.2]])


def test_cyclic_coupling_radius():
    spec = coupled_spec(d=4, coupling=0.4, self_weight=0.5)
    assert_allclose(spec.spectral_radius, 0.9)
    assert spec.coupling[0, 1] == 0.4 and spec.coupling[3, 0] == 0.4


def test_independent_noise_is_uncorrelated():
    C = true_cross_correlation(silent(np.zeros((3, 3)), length=1000))
    assert_array_equal(np.diag(C), np.ones(3))
    off = C[~np.eye(3, dtype=bool)]
    assert np.all(np.abs(off) < 0.02)


def test_coupling_raises_correlation():
    weak = true_cross_correlation(silent(np.array([[0.5, 0.0], [0.0, 0.5]])), 50_000)
    strong = true_cross_correlation(silent(np.array([[0.5, 0.45], [0.0, 0.5]])), 50_000)
    assert abs(strong[0, 1]) > abs(weak[0, 1]) + 0.1


def test_correlation_estimate_converges():
    spec = silent(np.array([[0.5, 0.3], [0.1, 0.4]]))
    a = true_cross_correlation(spec, 100_000)
    b = true_cross_correlation(spec, 200_000)
    assert np.max(np.abs(a - b)) < 0.02


def test_mse_floor_is_noise_variance():
    assert_allclose(optimal_mse_floor(coupled_spec(d=2, noise_std=0.2)), [0.04, 0.04])


def test_random_walk_drive_is_seeded():
    spec = coupled_spec(d=2, length=200, drive='random_walk')
    assert_array_equal(simulate(spec), simulate(spec))


def test_parse_synth_option_string():
    spec = parse_synth_arg('d=4,length=500,coupling=0.2,noise_std=0.05', seed=3)
    assert (spec.d, spec.length, spec.seed) == (4, 500, 3)
    assert_allclose(spec.noise_std, np.full(4, 0.05))
    assert parse_synth_arg('d=2,seed=8', seed=3).seed == 8


def test_parse_synth_json(tmp_path):
    path = tmp_path / 'spec.json'
    path.write_text(json.dumps(coupled_spec(d=2, length=77).to_dict()))
    spec = parse_synth_arg(str(path), seed=5)
    assert (spec.d, spec.length, spec.seed) == (2, 77, 5)


@pytest.mark.parametrize("arg", ['d=three', 'width=3', 'd3', 'drive=chaos'])
def test_bad_synth_option(arg):
    with pytest.raises(ConfigError):
        parse_synth_arg(arg)


def test_csv_goes_through_the_loader(tmp_path):
    frame = generate(coupled_spec(d=2, length=48))
    path = write_csv(frame, tmp_path / 'synth.csv')
    loaded = load_csv(path, synth_schema(2))
    assert len(loaded) == 48
    assert_array_equal(loaded.data.to_numpy(), frame.data.to_numpy())
