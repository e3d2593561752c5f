import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from klident.errors import ConfigError, DivergenceError
from klident.experiment import simulate
from klident.kld import error_metric
from klident.models import SystemModel, discretize, input_from_motion, state_space
from klident.pseudo import DetrendPolicy
from klident.rkf import (
    RkfConfig,
    build_observation_matrix,
    kf_predict,
    kf_step,
    parameter_update,
    rkf_input_estimate,
    rkf_run,
)
from klident.scenarios import builtin
from klident.simulation import Harmonic, InputSchedule, make_measurements, rk4_simulate

THREE = SystemModel([1.0, 1.0, 1.0], [9.0, 11.0, 13.0], [0.25, 0.5, 0.75])


def test_observation_matrix_two_of_three():
    H = build_observation_matrix(3, [3, 2])
    expected = np.zeros((4, 6))
    expected[0, 1] = expected[1, 2] = expected[2, 4] = expected[3, 5] = 1.0
    np.testing.assert_array_equal(H, expected)


def test_observation_matrix_full_and_six_dof():
    H = build_observation_matrix(4, [1, 2, 3, 4])
    np.testing.assert_array_equal(H, np.eye(8))
    H = build_observation_matrix(6, [4, 5, 6])
    assert H.shape == (6, 12)
    np.testing.assert_array_equal(np.nonzero(H)[1], [3, 4, 5, 9, 10, 11])
    np.testing.assert_array_equal(H.sum(axis=1), np.ones(6))


@pytest.mark.parametrize("dofs", [[], [0], [4], [2, 2]])
def test_observation_matrix_rejects_bad_dofs(dofs):
    with pytest.raises(ConfigError):
        build_observation_matrix(3, dofs)


def _kf_setup(seed=0):
    rng = np.random.default_rng(seed)
    ss = state_space(THREE, THREE.theta)
    A_d, B_d = discretize(ss.A, ss.B, 0.01)
    z = rng.normal(size=6)
    G = rng.normal(size=(6, 6))
    P = G @ G.T / 6 + 0.1 * np.eye(6)
    return rng, A_d, B_d, z, P, rng.normal(size=3)


def test_kf_step_zero_gain_limit():
    rng, A_d, B_d, z, P, u = _kf_setup()
    H = build_observation_matrix(3, [2, 3])
    y = rng.normal(size=4)
    zp, _ = kf_predict(z, P, u, A_d, B_d, np.eye(6))
    z_new, _ = kf_step(z, P, u, A_d, B_d, H, y, np.eye(6), 1e12 * np.eye(4))
    np.testing.assert_allclose(z_new, zp, rtol=1e-6, atol=1e-9)


def test_kf_step_full_trust_limit():
    rng, A_d, B_d, z, P, u = _kf_setup(1)
    H = build_observation_matrix(3, [1, 2, 3])
    y = rng.normal(size=6)
    z_new, _ = kf_step(z, P, u, A_d, B_d, H, y, np.eye(6), 1e-12 * np.eye(6))
    np.testing.assert_allclose(z_new, y, atol=1e-6)


@given(st.integers(0, 2**31 - 1), st.sampled_from([[1], [2, 3], [1, 2, 3]]))
@settings(max_examples=30, deadline=None)
def test_kf_update_contracts_uncertainty(seed, dofs):
    rng, A_d, B_d, z, P, u = _kf_setup(seed)
    H = build_observation_matrix(3, dofs)
    Qd = np.eye(6)
    _, Pp = kf_predict(z, P, u, A_d, B_d, Qd)
    _, P_new = kf_step(z, P, u, A_d, B_d, H, rng.normal(size=H.shape[0]), Qd, 1e-3 * np.eye(H.shape[0]))
    assert np.trace(P_new) <= np.trace(Pp)
    np.testing.assert_array_equal(P_new, P_new.T)


def test_kf_step_singular_innovation_is_divergence():
    _, A_d, B_d, z, P, u = _kf_setup()
    H = build_observation_matrix(3, [1])
    with pytest.raises(DivergenceError):
        kf_step(z, np.zeros((6, 6)), u, A_d, B_d, H, np.zeros(2), np.zeros((6, 6)), np.zeros((2, 2)))


def test_parameter_update_zero_residual():
    U = np.random.default_rng(0).normal(size=(3, 6))
    theta = THREE.theta
    new, delta, factor = parameter_update(theta, U, np.zeros(3), 5e-2, 5e-3)
    np.testing.assert_array_equal(new, theta)
    assert not np.any(delta) and factor == 1.0


def test_parameter_update_regularization_dominated():
    rng = np.random.default_rng(1)
    U, rho = rng.normal(size=(3, 6)), rng.normal(size=3)
    _, delta, _ = parameter_update(THREE.theta, U, rho, 1e6, 0.0)
    assert np.linalg.norm(delta) <= 1e-6 * np.linalg.norm(U.T @ rho)


@given(st.integers(0, 2**31 - 1), st.integers(1, 10), st.integers(1, 8))
@settings(max_examples=50, deadline=None)
def test_parameter_update_matches_least_squares_oracle(seed, rows, cols):
    # Tikhonov step = least squares on U stacked over lambda * I
    rng = np.random.default_rng(seed)
    U, rho = rng.normal(size=(rows, cols)), rng.normal(size=rows)
    lam2 = 5e-2
    aug = np.vstack([U, np.sqrt(lam2) * np.eye(cols)])
    oracle = np.linalg.lstsq(aug, np.r_[rho, np.zeros(cols)], rcond=None)[0]
    _, delta, _ = parameter_update(np.zeros(cols), U, rho, lam2, 0.0)
    np.testing.assert_allclose(delta, oracle, rtol=1e-8, atol=1e-8 * np.linalg.norm(oracle))
    normal = U.T @ U + lam2 * np.eye(cols)
    assert np.linalg.eigvalsh(normal).min() >= lam2 * (1 - 1e-10)


@given(st.one_of(st.just(0.0), st.floats(1e-6, 1.0)), st.one_of(st.just(0.0), st.floats(1e-6, 1e2)))
def test_step_factor_range(mu, norm):
    _, _, factor = parameter_update(np.zeros(2), np.eye(2), np.ones(2), 1.0, mu, norm)
    assert 0.0 < factor <= 1.0
    assert (factor == 1.0) == (mu * norm == 0.0)


def test_input_estimate_overwrites_known_rows():
    rng = np.random.default_rng(2)
    accel, z = rng.normal(size=3), rng.normal(size=6)
    u, raw = rkf_input_estimate(THREE, accel, z, THREE.theta, {0: 0.0, 1: 1.5})
    np.testing.assert_allclose(raw, input_from_motion(THREE, THREE.theta, accel, z), rtol=1e-13)
    assert u[0] == 0.0 and u[1] == 1.5 and u[2] == raw[2]


def test_config_validation():
    for bad in ({"lam2": 0.0}, {"mu": -1.0}, {"residual_norm": "max"}, {"floor": 1.0}, {"kl_window": 1}):
        with pytest.raises(ConfigError):
            RkfConfig(**bad)


def _harmonic_measurements():
    sched = InputSchedule((Harmonic(3, 1.0, 1.3), Harmonic(3, 0.5, 4.1)))
    traj = rk4_simulate(THREE, THREE.theta, sched, T=30.0)
    return traj, make_measurements(traj, [1, 2, 3], 0.0)


def test_exact_pseudo_measurements_keep_the_truth():
    traj, meas = _harmonic_measurements()
    exact = (traj.accel, traj.z[:, 3:], traj.z[:, :3])
    run = rkf_run(THREE, RkfConfig(), meas, THREE.theta, {1: 0.0, 2: 0.0}, pseudo=exact)
    scale = np.sqrt(np.mean(traj.z**2, axis=0))
    assert np.max(np.sqrt(np.mean((run.z - traj.z) ** 2, axis=0)) / scale) <= 0.01
    assert np.max(np.abs(run.theta / THREE.theta - 1)) <= 0.01
    assert np.all(run.u[:, :2] == 0.0)


def test_integrated_pseudo_measurements_track_the_state():
    traj, meas = _harmonic_measurements()
    run = rkf_run(THREE, RkfConfig(detrend=DetrendPolicy("none")), meas, THREE.theta, {1: 0.0, 2: 0.0})
    scale = np.sqrt(np.mean(traj.z**2, axis=0))
    assert np.max(np.sqrt(np.mean((run.z - traj.z) ** 2, axis=0)) / scale) <= 0.01


def test_pseudo_override_shape_is_checked():
    traj, meas = _harmonic_measurements()
    with pytest.raises(ConfigError):
        rkf_run(THREE, RkfConfig(), meas, THREE.theta, pseudo=(traj.accel[:, :2],) * 3)


def _fig6_set_two():
    config = builtin("fig6")
    meas = simulate(config)
    theta0 = config.parameter_sets()[1]
    run = rkf_run(config.model(), config.estimator_config(), meas, theta0, config.known(), set_index=2)
    return config, meas, run


def test_set_two_stiffness_improves_with_two_sensors():
    config, meas, run = _fig6_set_two()
    assert not run.failed
    err = error_metric(run.theta, meas.truth.theta)
    assert err[0] == pytest.approx(1.5)
    stiff = error_metric(run.theta[:, :3], meas.truth.theta[:, :3])
    assert stiff[-1] < 0.5 * stiff[0]
    assert np.all(np.isfinite(run.kl)) and np.all(run.rho_norm >= 0)
    known = [d - 1 for d in config.known()]
    np.testing.assert_array_equal(run.u[:, known], 0.0)


@pytest.mark.xfail(reason="damping estimates wander under two-sensor excitation", strict=False)
def test_set_two_total_error_improves_with_two_sensors():
    _, meas, run = _fig6_set_two()
    err = error_metric(run.theta, meas.truth.theta)
    assert err[-1] < err[0]


def test_nonlinear_model_rejected():
    duffing = SystemModel([1.0, 1.0], [3.0, 4.5], [0.5, 0.5], cubic=[15.0, 27.0])
    traj = rk4_simulate(duffing, duffing.theta, InputSchedule(), T=1.0)
    with pytest.raises(ConfigError):
        rkf_run(duffing, RkfConfig(), make_measurements(traj, [1, 2], 0.0), duffing.theta)
