import numpy as np
import pytest

from klident.errors import ConfigError, DivergenceError
from klident.models import SystemModel
from klident.simulation import (
    DamageEvent,
    Harmonic,
    InputSchedule,
    Pulse,
    WhiteNoise,
    _rk4_loop,
    add_noise,
    make_measurements,
    n_steps,
    rk4_simulate,
)

THREE = SystemModel([1.0, 1.0, 1.0], [9.0, 11.0, 13.0], [0.25, 0.5, 0.75])


def test_zero_input_zero_state_stays_zero():
    traj = rk4_simulate(THREE, THREE.theta, InputSchedule(), T=5.0)
    assert not np.any(traj.z) and not np.any(traj.accel)


def test_undamped_sdof_tracks_cosine():
    model = SystemModel([1.0], [9.0], [0.0])
    traj = rk4_simulate(model, model.theta, InputSchedule(), T=30.0, dt=0.01, z0=[1.0, 0.0])
    assert np.max(np.abs(traj.z[:, 0] - np.cos(3 * traj.t))) <= 1e-6
    assert np.max(np.abs(traj.z[:, 1] + 3 * np.sin(3 * traj.t))) <= 3e-6


def test_pulse_response_is_causal():
    traj = rk4_simulate(THREE, THREE.theta, InputSchedule((Pulse(3, 100.0, 5.0, 0.01),)), T=10.0)
    before = traj.t < 5.0
    assert not np.any(traj.z[before]) and not np.any(traj.accel[before])
    assert np.any(traj.z[~before])


def test_linear_fast_path_matches_generic_loop():
    sched = InputSchedule((WhiteNoise(3, 0.0, 4.0), Harmonic(2, 1.0, 1.0)))
    damage = [DamageEvent(2.0, 0.5)]
    traj = rk4_simulate(THREE, THREE.theta, sched, damage, T=4.0, seed=5)
    z = np.zeros_like(traj.z)
    _rk4_loop(THREE, traj.theta, traj.u, z, traj.dt)
    np.testing.assert_allclose(traj.z, z, rtol=1e-11, atol=1e-13)


def test_schedule_realization():
    sched = InputSchedule((Pulse(1, 2.0, 0.05, 0.02), Harmonic(2, 3.0, 2.0, 0.5), WhiteNoise(3, 1.0, 4.0)))
    u = sched.realize(3, 1000, 0.01, np.random.default_rng(0))
    assert u.shape == (1001, 3)
    np.testing.assert_array_equal(np.nonzero(u[:, 0])[0], [5, 6])
    t = np.arange(1001) * 0.01
    np.testing.assert_allclose(u[:, 1], 3.0 * np.sin(2.0 * t + 0.5))
    assert np.mean(u[:, 2]) == pytest.approx(1.0, abs=0.2)
    assert np.var(u[:, 2]) == pytest.approx(4.0, rel=0.15)
    with pytest.raises(ConfigError):
        InputSchedule((Pulse(4, 1.0, 0.0, 0.01),)).realize(3, 10, 0.01, np.random.default_rng(0))


def test_same_seed_same_trajectory():
    sched = InputSchedule((WhiteNoise(3, 0.0, 4.0),))
    a = rk4_simulate(THREE, THREE.theta, sched, T=2.0, seed=9)
    b = rk4_simulate(THREE, THREE.theta, sched, T=2.0, seed=9)
    np.testing.assert_array_equal(a.z, b.z)


def test_damage_history():
    traj = rk4_simulate(THREE, THREE.theta, InputSchedule(), [DamageEvent(1.0, 0.5, (0, 3))], T=2.0)
    np.testing.assert_array_equal(traj.theta[99], THREE.theta)
    expected = THREE.theta.copy()
    expected[[0, 3]] *= 0.5
    np.testing.assert_array_equal(traj.theta[100], expected)
    with pytest.raises(ConfigError):
        rk4_simulate(THREE, THREE.theta, InputSchedule(), [DamageEvent(5.0, 0.5)], T=2.0)
    with pytest.raises(ConfigError):
        DamageEvent(1.0, 0.0)


def test_step_count_validation():
    assert n_steps(30.0, 0.01) == 3000
    with pytest.raises(ConfigError):
        n_steps(1.005, 0.01)
    with pytest.raises(ConfigError):
        n_steps(-1.0, 0.01)


def test_divergence_is_reported():
    unstable = SystemModel([1.0], [-1e6], [0.0])
    with pytest.raises(DivergenceError):
        rk4_simulate(unstable, unstable.theta, InputSchedule(), T=30.0, dt=0.01, z0=[1.0, 0.0])


def test_noise_ratio_zero_is_identity():
    x = np.random.default_rng(0).normal(size=(100, 2))
    np.testing.assert_array_equal(add_noise(x, 0.0, seed=1), x)


@pytest.mark.parametrize("ratio,lo,hi", [(0.05, 0.049, 0.051), (0.20, 0.196, 0.204)])
def test_noise_rms_ratio(ratio, lo, hi):
    rng = np.random.default_rng(42)
    x = rng.normal(size=300_000)
    x /= np.sqrt(np.mean(x**2))
    noisy = add_noise(x, ratio, seed=7)
    measured = np.sqrt(np.mean((noisy - x) ** 2)) / np.sqrt(np.mean(x**2))
    assert lo <= measured <= hi


def test_noise_is_per_channel():
    x = np.column_stack([np.ones(50_000), 10 * np.ones(50_000)])
    noisy = add_noise(x, 0.1, seed=0)
    np.testing.assert_allclose(np.std(noisy - x, axis=0), [0.1, 1.0], rtol=0.02)
    with pytest.raises(ConfigError):
        add_noise(x, -0.1)


def test_measurements_layout_and_seeds():
    traj = rk4_simulate(THREE, THREE.theta, InputSchedule((WhiteNoise(3, 0.0, 4.0),)), T=3.0, seed=1)
    clean = make_measurements(traj, [1, 2, 3], 0.0)
    np.testing.assert_array_equal(clean.accel, traj.accel)
    part = make_measurements(traj, [3, 2], 0.05, seed=4)
    assert part.dofs == (2, 3) and part.accel.shape == (traj.steps + 1, 2)
    other = make_measurements(traj, [2, 3], 0.05, seed=5)
    assert not np.array_equal(part.accel, other.accel)
    assert part.truth is other.truth
    disp = make_measurements(traj, [2], 0.0, displacement_sensing=True)
    np.testing.assert_array_equal(disp.displacement[:, 0], traj.z[:, 1])
    for bad in ([], [0, 1], [1, 1], [4]):
        with pytest.raises(ConfigError):
            make_measurements(traj, bad, 0.05)


def test_trajectory_csv(tmp_path):
    traj = rk4_simulate(THREE, THREE.theta, InputSchedule((Pulse(1, 1.0, 0.0, 0.01),)), T=0.05)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0].split(",")[:4] == ["t", "x1", "x2", "x3"]
    assert len(rows) == traj.steps + 2
