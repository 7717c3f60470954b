import numpy as np
import pytest
from hypothesis import given, strategies as st

from sdrmhe.dynamics import (
    NoiseModel,
    Trajectory,
    propagate,
    sample_initial_state,
    sample_measurement_noise,
    sample_process_noise,
    simulate,
    write_trajectory_csv,
)
from sdrmhe.grid import measure

BENCH_F = np.diag([1, 1.05, 1.05, 1.05, 0.95, 0.95]).astype(complex)


def naive_matvec(F, v):
    out = [0j] * len(v)
    for i in range(len(v)):
        for j in range(len(v)):
            out[i] += F[i][j] * v[j]
    return np.array(out)


def test_propagate_identity():
    v = np.array([1 + 1j, 2, -1j])
    np.testing.assert_array_equal(propagate(np.eye(3), v, np.zeros(3)), v)


def test_propagate_benchmark_transition():
    np.testing.assert_allclose(propagate(BENCH_F, np.ones(6), np.zeros(6)),
                               [1, 1.05, 1.05, 1.05, 0.95, 0.95])


def test_propagate_matches_naive_oracle():
    rng = np.random.default_rng(1)
    F = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    v = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    xi = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    np.testing.assert_allclose(propagate(F, v, xi), naive_matvec(F, v) + xi, atol=1e-12)


def test_propagate_dimension_mismatch():
    with pytest.raises(ValueError):
        propagate(np.eye(3), np.ones(4))


def test_initial_state_degenerate():
    noise = NoiseModel(init_mag_std=0.0, init_angle_bound=0.0)
    v = sample_initial_state(noise, 6, np.random.default_rng(0))
    np.testing.assert_array_equal(v, np.ones(6))


def test_initial_state_pinned():
    v = sample_initial_state(NoiseModel(), 6, np.random.default_rng(12345))
    expected = [0.8576174963545369 + 0j, 0.6235242040416447 - 0.9380476292592552j,
                0.7817473814967772 + 0.4715073727425417j, 0.17710264037956017 + 0.9578474384998752j,
                0.6979008859196447 - 0.7056362080913816j, 0.14805805215978002 + 0.9139972557127785j]
    np.testing.assert_array_equal(v, expected)


def test_initial_state_statistics():
    rng = np.random.default_rng(7)
    v = np.concatenate([sample_initial_state(NoiseModel(), 6, rng) for _ in range(2000)])
    v = v.reshape(2000, 6)
    assert np.all(np.angle(v[:, 0]) == 0)
    mags = np.abs(v).ravel()  # the N(1, 0.1) draws are positive with overwhelming probability
    assert abs(mags.mean() - 1) <= 0.01
    assert abs(mags.std() - 0.1) <= 0.01
    ang = np.angle(v[:, 1:])
    assert ang.min() >= -np.pi / 2 and ang.max() <= np.pi / 2


def test_zero_bound_noise_is_zero():
    noise = NoiseModel.noiseless()
    rng = np.random.default_rng(0)
    assert not np.any(sample_process_noise(noise, 6, rng))
    assert not np.any(sample_measurement_noise(noise, 20, rng))


def test_measurement_noise_statistics():
    eta = sample_measurement_noise(NoiseModel(), 100_000, np.random.default_rng(2))
    assert abs(eta.mean()) <= 0.001
    assert np.max(np.abs(eta)) <= 0.05


def test_process_noise_bound():
    rng = np.random.default_rng(3)
    xi = np.concatenate([sample_process_noise(NoiseModel(), 100, rng) for _ in range(1000)])
    assert xi.size == 100_000
    assert np.max(np.abs(xi)) <= 0.05
    assert np.min(xi.real) < 0  # signed magnitude draws flip the phasor


def test_negative_bounds_rejected():
    with pytest.raises(ValueError):
        NoiseModel(meas_bound=-1.0)


def test_noiseless_identity_is_constant(grid6, bench_plan):
    v0 = np.exp(1j * np.linspace(0, 0.3, 6))
    tr = simulate(grid6, bench_plan, np.eye(6), NoiseModel.noiseless(), 5,
                  np.random.default_rng(0), v0=v0)
    assert np.all(tr.states == v0)
    assert np.all(tr.measurements == tr.measurements[0])


def test_noiseless_measurements_match_oracle(grid6, bench_plan):
    tr = simulate(grid6, bench_plan, BENCH_F, NoiseModel.noiseless(), 6, np.random.default_rng(4))
    for v, z in zip(tr.states, tr.measurements):
        np.testing.assert_allclose(z, measure(grid6, bench_plan, v), atol=1e-10)


@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_noiseless_simulation_independent_of_seed(grid6, bench_plan, s1, s2):
    v0 = np.array([1, 0.9, 1.1, 1, 0.95, 1.02]) * np.exp(0.1j * np.arange(6))
    a = simulate(grid6, bench_plan, BENCH_F, NoiseModel.noiseless(), 4, np.random.default_rng(s1), v0=v0)
    b = simulate(grid6, bench_plan, BENCH_F, NoiseModel.noiseless(), 4, np.random.default_rng(s2), v0=v0)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.measurements, b.measurements)


def test_benchmark_configuration_shape(grid6, bench_plan):
    tr = simulate(grid6, bench_plan, BENCH_F, NoiseModel(), 40, np.random.default_rng(0))
    assert isinstance(tr, Trajectory)
    assert tr.states.shape == (40, 6)
    assert tr.measurements.shape == (40, 20)
    assert tr.transitions.shape == (39, 6, 6)
    # states follow the system equation with bounded innovations
    for k in range(39):
        assert np.max(np.abs(tr.states[k + 1] - BENCH_F @ tr.states[k])) <= 0.05


def test_seeded_simulation_reproducible(grid6, bench_plan):
    a = simulate(grid6, bench_plan, BENCH_F, NoiseModel(), 10, np.random.default_rng(11))
    b = simulate(grid6, bench_plan, BENCH_F, NoiseModel(), 10, np.random.default_rng(11))
    assert np.array_equal(a.states, b.states) and np.array_equal(a.measurements, b.measurements)


def test_trajectory_csv(tmp_path, grid6, bench_plan):
    tr = simulate(grid6, bench_plan, BENCH_F, NoiseModel(), 3, np.random.default_rng(0))
    write_trajectory_csv(tr, tmp_path / "v.csv", tmp_path / "z.csv")
    rows = (tmp_path / "v.csv").read_text().splitlines()
    assert rows[0] == "k,bus,re,im" and len(rows) == 1 + 3 * 6
    k, bus, re, im = rows[8].split(",")
    assert complex(float(re), float(im)) == tr.states[int(k), int(bus) - 1]
    zrows = (tmp_path / "z.csv").read_text().splitlines()
    assert zrows[0] == "k,descriptor,value" and len(zrows) == 1 + 3 * 20
