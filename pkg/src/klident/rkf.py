"""Residual-based Kalman filter.

A linear Kalman filter tracks ``z = [x, v]`` from displacement/velocity
pseudo-measurements.  The input follows from the equation of motion and
the parameters from a regularized Gauss-Newton step on the residual at
the known-input rows, damped by ``exp(-mu * |rho|)``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import ConfigError, DivergenceError
from .kld import GaussianSummary, PriorDivergence, RunningCovariance, track_summary
from .models import SystemModel, discretize, sensitivity_matrix, state_space
from .pseudo import DetrendPolicy, kinematic_series, sensed_displacement, substitute_unmeasured_accelerations
from .runs import EstimatorRun
from .simulation import MeasurementSet
from .ukf import _as_cov

RESIDUAL_NORMS = ("sum", "history", "step")


def default_rkf_detrend() -> DetrendPolicy:
    return DetrendPolicy("common", cutoff=0.2, order=4)


@dataclass
class RkfConfig:
    """Tuning of one residual-based filter run.

    residual_norm:
        What ``|rho|`` in the step factor ``exp(-mu |rho|)`` measures.
        ``"step"`` (default) uses the Euclidean norm of the current
        residual.  ``"sum"`` adds up the norms of every residual seen so
        far, so the factor decays as evidence accumulates and larger ``mu``
        freezes the parameters sooner.  ``"history"`` is the norm of all
        residuals stacked into one vector, which decays much more slowly.
    unmeasured_accel:
        Stand-in for accelerations at uninstrumented DOFs.  ``"predicted"``
        evaluates the model at the predicted state of the current step with
        the previous input and parameters; ``"lagged"`` reuses the final
        acceleration estimate of the previous step.
    floor:
        Lower bound on every parameter as a fraction of its initial value,
        or ``None`` to leave updates unbounded.
    """

    lam2: float = 5e-2
    mu: float = 5e-3
    Qd: object = 1.0
    Rd: object = 1e-10
    P0: object = 1.0
    detrend: DetrendPolicy = field(default_factory=default_rkf_detrend)
    discretization: str = "taylor"
    kl_window: int | None = None
    residual_norm: str = "step"
    unmeasured_accel: str = "predicted"
    floor: float | None = 1e-2

    def __post_init__(self):
        if self.lam2 <= 0:
            raise ConfigError("lambda^2 must be positive")
        if self.mu < 0:
            raise ConfigError("mu must be non-negative")
        if self.residual_norm not in RESIDUAL_NORMS:
            raise ConfigError(f"unknown residual norm {self.residual_norm!r}")
        if self.unmeasured_accel not in ("predicted", "lagged"):
            raise ConfigError(f"unknown substitution rule {self.unmeasured_accel!r}")
        if self.floor is not None and not 0 <= self.floor < 1:
            raise ConfigError("floor must lie in [0, 1)")
        if self.kl_window is not None and self.kl_window < 2:
            raise ConfigError("kl_window needs at least two samples")


def build_observation_matrix(n: int, dofs) -> np.ndarray:
    """Displacement selectors then velocity selectors, in DOF order."""
    dofs = sorted(int(d) for d in dofs)
    if not dofs:
        raise ConfigError("at least one instrumented DOF is required")
    if dofs[0] < 1 or dofs[-1] > n or len(set(dofs)) != len(dofs):
        raise ConfigError(f"instrumented DOFs {dofs} invalid for a {n}-DOF chain")
    m = len(dofs)
    H = np.zeros((2 * m, 2 * n))
    for r, dof in enumerate(dofs):
        H[r, dof - 1] = 1.0
        H[m + r, n + dof - 1] = 1.0
    return H


def kf_predict(z, P, u_prev, A_d, B_d, Qd):
    return A_d @ z + B_d @ u_prev, A_d @ P @ A_d.T + Qd


def kf_update(z, P, H, y, Rd):
    N = H @ P @ H.T + Rd
    try:
        fac = cho_factor(N, lower=True, check_finite=False)
    except LinAlgError:
        raise DivergenceError("pre-fit residual covariance singular") from None
    J = cho_solve(fac, H @ P, check_finite=False).T
    z = z + J @ (y - H @ z)
    P = (np.eye(P.shape[0]) - J @ H) @ P
    return z, 0.5 * (P + P.T)


def kf_step(z, P, u_prev, A_d, B_d, H, y, Qd, Rd):
    """Predict with ``(A_d, B_d)`` and update with pseudo-measurement ``y``."""
    z, P = kf_predict(z, P, u_prev, A_d, B_d, Qd)
    return kf_update(z, P, H, y, Rd)


def parameter_update(theta_prev, U, rho, lam2: float, mu: float, rho_norm: float | None = None):
    """Regularized Gauss-Newton step; returns ``(theta_new, delta, factor)``.

    The step is scaled by ``exp(-mu * rho_norm)``, where ``rho_norm``
    defaults to the Euclidean norm of ``rho`` itself.
    """
    U = np.asarray(U, dtype=float)
    rho = np.asarray(rho, dtype=float)
    normal = U.T @ U + lam2 * np.eye(U.shape[1])
    delta = np.linalg.solve(normal, U.T @ rho)
    if rho_norm is None:
        rho_norm = np.linalg.norm(rho)
    factor = np.exp(-mu * rho_norm)
    return np.asarray(theta_prev, dtype=float) + delta * factor, delta, factor


def rkf_input_estimate(model, accel_full, z, theta, known) -> tuple[np.ndarray, np.ndarray]:
    """Input with known rows replaced, and the raw equation-of-motion value."""
    U = sensitivity_matrix(model, z)
    raw = model.masses * (np.asarray(accel_full, dtype=float) + U @ theta)
    u = raw.copy()
    for j, val in known.items():
        u[j] = val
    return u, raw


class _SystemMatrix:
    """``A(theta)`` of a linear chain, which is affine in ``theta``."""

    def __init__(self, model: SystemModel):
        if model.nonlinear:
            raise ConfigError("the residual-based filter needs a linear chain")
        d = model.n_params
        base = state_space(model, np.zeros(d))
        self.A0 = base.A
        self.B = base.B
        self.basis = np.stack([state_space(model, np.eye(d)[i]).A - base.A for i in range(d)])

    def __call__(self, theta) -> np.ndarray:
        return self.A0 + np.tensordot(theta, self.basis, axes=1)


def rkf_run(
    model: SystemModel,
    config: RkfConfig,
    meas: MeasurementSet,
    theta0,
    known_inputs: dict[int, float] | None = None,
    set_index: int = 1,
    z0=None,
    u0=None,
    pseudo=None,
) -> EstimatorRun:
    """Run the residual-based filter over every sample of ``meas``.

    ``known_inputs`` maps 1-based DOFs to known (constant) input values.
    ``pseudo`` optionally supplies ready-made ``(accel, vel, disp)`` series
    for the instrumented DOFs in place of integrating ``meas.accel``.
    """
    n, d = model.n, model.n_params
    theta = np.asarray(theta0, dtype=float).copy()
    if theta.size != d:
        raise ConfigError(f"initial parameter set has {theta.size} entries, expected {d}")
    known = {dof - 1: val for dof, val in (known_inputs or {}).items()}
    system = _SystemMatrix(model)
    H = build_observation_matrix(n, meas.dofs)
    if pseudo is not None:
        accel, vel, disp = (np.asarray(p, dtype=float) for p in pseudo)
        if not accel.shape == vel.shape == disp.shape == meas.accel.shape:
            raise ConfigError("pseudo-measurement series must match the acceleration channels")
    else:
        accel, vel, disp = kinematic_series(meas.accel, meas.dt, config.detrend)
    if meas.displacement is not None and pseudo is None:
        disp = sensed_displacement(meas.displacement, meas.dt, config.detrend)
    y_all = np.hstack([disp, vel])
    Qd = _as_cov(config.Qd, 2 * n)
    Rd = _as_cov(config.Rd, H.shape[0])
    P = _as_cov(config.P0, 2 * n)
    z = np.zeros(2 * n) if z0 is None else np.asarray(z0, dtype=float).copy()
    u_e = np.zeros(n) if u0 is None else np.asarray(u0, dtype=float).copy()
    for j, val in known.items():
        u_e[j] = val
    lower = None if config.floor is None else config.floor * np.abs(theta)
    inv_m = 1.0 / model.masses

    divergence = PriorDivergence(GaussianSummary(theta.copy(), np.eye(d)))
    track = RunningCovariance(d)
    recent = deque(maxlen=config.kl_window)
    run = EstimatorRun.allocate("rkf", set_index, theta, meas.steps, meas.dt, 2 * n, n, with_rho=True)
    run.param_cov = np.full((meas.steps + 1, d, d), np.nan)

    def record(k, rho_norm):
        if config.kl_window is None:
            track.push(theta)
            summary = GaussianSummary(theta, track.covariance())
        else:
            recent.append(theta.copy())
            summary = track_summary(np.array(recent))
        run.z[k] = z
        run.theta[k] = theta
        run.u[k] = u_e
        run.rho_norm[k] = rho_norm
        run.param_cov[k] = summary.cov
        run.kl[k] = divergence(summary.mean, summary.cov)

    record(0, 0.0)
    a_est = np.zeros(n)
    rho_sq = rho_sum = 0.0
    for k in range(1, meas.steps + 1):
        try:
            A_d, B_d = discretize(system(theta), system.B, meas.dt, config.discretization)
            z, P = kf_predict(z, P, u_e, A_d, B_d, Qd)
            if config.unmeasured_accel == "predicted":
                a_est = u_e * inv_m - sensitivity_matrix(model, z) @ theta
            z, P = kf_update(z, P, H, y_all[k], Rd)
            a_full = substitute_unmeasured_accelerations(accel[k], meas.dofs, a_est)
            U = sensitivity_matrix(model, z)
            g = model.masses * (a_full + U @ theta)
            u_e = g.copy()
            for j, val in known.items():
                u_e[j] = val
            rho = u_e - g
            rho_now = float(np.sqrt(rho @ rho))
            rho_sq += rho_now**2
            rho_sum += rho_now
            scale = {"history": np.sqrt(rho_sq), "sum": rho_sum, "step": rho_now}[config.residual_norm]
            theta, _, _ = parameter_update(theta, U, rho, config.lam2, config.mu, scale)
            if lower is not None:
                theta = np.maximum(theta, lower)
            if config.unmeasured_accel == "lagged":
                a_est = u_e * inv_m - U @ theta
            if not (np.all(np.isfinite(z)) and np.all(np.isfinite(theta))):
                raise DivergenceError("non-finite estimate")
            record(k, rho_now)
        except (DivergenceError, LinAlgError, np.linalg.LinAlgError, FloatingPointError) as exc:
            run.mark_failed(k, str(exc) if "step" in str(exc) else f"{exc} (step {k})")
            break
    return run
