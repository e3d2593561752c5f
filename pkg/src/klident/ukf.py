"""Unknown-input unscented Kalman filter on the augmented state
``z = [x, v, theta]``.

The input is never part of the state.  At every step it is recovered from
the equation of motion twice: once from the predicted state (to feed the
observation model) and once from the updated state (to drive the next
prediction).  Known input rows are overwritten each time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, cholesky

from .errors import ConfigError, DivergenceError
from .kld import GaussianSummary, PriorDivergence
from .models import SystemModel, input_from_motion, restoring_force
from .pseudo import DetrendPolicy, kinematic_series, sensed_displacement, substitute_unmeasured_accelerations
from .runs import EstimatorRun
from .simulation import MeasurementSet


def _as_cov(value, dim: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(dim)
    if arr.ndim == 1:
        return np.diag(arr)
    if arr.shape != (dim, dim):
        raise ConfigError(f"covariance must be {dim}x{dim}, got {arr.shape}")
    return arr


@dataclass
class UkfConfig:
    """Tuning of one UKF run.

    ``Q`` and ``R`` accept a scalar (times identity), a diagonal or a full
    matrix.  ``P0`` defaults to ``p0_state`` on the dynamic block and
    ``p0_param`` on the parameter block.
    """

    alpha: float = 1e-2
    beta: float = 2.0
    kappa: float = 0.0
    Q: object = 1e-9
    R: object = 1e-3
    P0: object = None
    p0_state: float = 1e-2
    p0_param: float = 1.0
    detrend: DetrendPolicy = DetrendPolicy()
    observe_accel: bool = True
    observe_disp: bool = True
    observe_vel: bool = True
    propagation: str = "euler"

    def __post_init__(self):
        if self.propagation not in ("euler", "rk4"):
            raise ConfigError(f"unknown propagation scheme {self.propagation!r}")
        if not 1e-4 <= self.alpha <= 1:
            raise ConfigError("alpha must lie in [1e-4, 1]")
        if not (self.observe_accel or self.observe_disp or self.observe_vel):
            raise ConfigError("observation vector is empty")


@dataclass(frozen=True)
class SigmaWeights:
    lam: float
    mean: np.ndarray
    cov: np.ndarray


def sigma_weights(L: int, alpha: float, beta: float, kappa: float) -> SigmaWeights:
    lam = alpha**2 * (L + kappa) - L
    wm = np.full(2 * L + 1, 0.5 / (L + lam))
    wc = wm.copy()
    wm[0] = lam / (L + lam)
    wc[0] = lam / (L + lam) + (1.0 - alpha**2 + beta)
    return SigmaWeights(lam, wm, wc)


def robust_cholesky(P, max_jitter: float = 1e-6, step: int | None = None) -> np.ndarray:
    """Lower Cholesky factor, adding ``1e-12 I`` jitter escalating x10."""
    P = 0.5 * (P + P.T)
    jitter = 0.0
    eye = np.eye(P.shape[0])
    while True:
        try:
            return cholesky(P + jitter * eye, lower=True)
        except LinAlgError:
            jitter = 1e-12 if jitter == 0.0 else jitter * 10
            if jitter > max_jitter * (1 + 1e-9):
                raise DivergenceError("covariance not positive definite", step=step) from None


def sigma_points(z, P, lam: float, step: int | None = None) -> np.ndarray:
    """``2L + 1`` points as rows: ``z``, ``z + S_i``, ``z - S_i`` where
    ``S S^T = (L + lam) P``."""
    z = np.asarray(z, dtype=float)
    L = z.size
    S = robust_cholesky((L + lam) * np.asarray(P, dtype=float), step=step)
    return np.vstack([z, z + S.T, z - S.T])


def weighted_moments(points, weights: SigmaWeights):
    """Weighted mean and covariance of sigma-point rows."""
    mean = weights.mean @ points
    dev = points - mean
    cov = (dev * weights.cov[:, None]).T @ dev
    return mean, 0.5 * (cov + cov.T), dev


class AugmentedModel:
    """Process and observation maps of the augmented state for one chain."""

    def __init__(self, model: SystemModel, dofs, known_inputs: dict[int, float], config: UkfConfig):
        self.model = model
        self.n = model.n
        self.d = model.n_params
        self.L = 2 * self.n + self.d
        self.index = np.asarray(dofs, dtype=int) - 1
        self.known = dict(known_inputs)
        self.config = config

    @property
    def param_slice(self) -> slice:
        return slice(2 * self.n, self.L)

    def split(self, Z):
        n = self.n
        return Z[..., :n], Z[..., n : 2 * n], Z[..., 2 * n :]

    def _rates(self, x, v, th, u):
        return v, (u - restoring_force(self.model, th, x, v)) / self.model.masses

    def propagate(self, Z, u, dt: float) -> np.ndarray:
        """One step per point (forward Euler or RK4 with ``u`` held);
        parameters carried unchanged."""
        x, v, th = self.split(Z)
        if self.config.propagation == "euler":
            dx, dv = self._rates(x, v, th, u)
        else:
            k1x, k1v = self._rates(x, v, th, u)
            k2x, k2v = self._rates(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v, th, u)
            k3x, k3v = self._rates(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v, th, u)
            k4x, k4v = self._rates(x + dt * k3x, v + dt * k3v, th, u)
            dx = (k1x + 2 * k2x + 2 * k3x + k4x) / 6.0
            dv = (k1v + 2 * k2v + 2 * k3v + k4v) / 6.0
        out = np.array(Z, dtype=float, copy=True)
        out[..., : self.n] = x + dt * dx
        out[..., self.n : 2 * self.n] = v + dt * dv
        return out

    def input(self, accel_full, z) -> np.ndarray:
        x_v = z[: 2 * self.n]
        return input_from_motion(self.model, z[2 * self.n :], accel_full, x_v, self.known)

    def observe(self, Z, u) -> np.ndarray:
        x, v, th = self.split(Z)
        parts = []
        c = self.config
        if c.observe_accel:
            a = (u - restoring_force(self.model, th, x, v)) / self.model.masses
            parts.append(a[..., self.index])
        if c.observe_disp:
            parts.append(x[..., self.index])
        if c.observe_vel:
            parts.append(v[..., self.index])
        return np.concatenate(parts, axis=-1)

    def acceleration(self, z, u) -> np.ndarray:
        x, v, th = self.split(z)
        return (u - restoring_force(self.model, th, x, v)) / self.model.masses


def predict(aug: AugmentedModel, points, u_prev, dt: float, weights: SigmaWeights, Q):
    """Propagate sigma points; returns ``(points_p, z_p, P_p)``."""
    Zp = aug.propagate(points, u_prev, dt)
    if not np.all(np.isfinite(Zp)):
        raise DivergenceError("non-finite sigma-point propagation")
    zp, Pp, _ = weighted_moments(Zp, weights)
    return Zp, zp, Pp + Q


def input_predict(aug: AugmentedModel, accel_full, z_p) -> np.ndarray:
    return aug.input(accel_full, z_p)


def input_correct(aug: AugmentedModel, accel_full, z_k) -> np.ndarray:
    return aug.input(accel_full, z_k)


def update(aug: AugmentedModel, z_p, P_p, points_p, u_p, y_meas, weights: SigmaWeights, R):
    """Unscented measurement update; returns ``(z, P, innovation)``."""
    Y = aug.observe(points_p, u_p)
    y_mean, Pm, dev_y = weighted_moments(Y, weights)
    Pm = Pm + R
    dev_z = points_p - weights.mean @ points_p
    Ps = (dev_z * weights.cov[:, None]).T @ dev_y
    if not (np.all(np.isfinite(Pm)) and np.all(np.isfinite(y_meas))):
        raise DivergenceError("non-finite measurement prediction")
    try:
        fac = cho_factor(Pm, lower=True)
    except LinAlgError:
        raise DivergenceError("innovation covariance singular") from None
    gain = cho_solve(fac, Ps.T).T
    innovation = np.asarray(y_meas, dtype=float) - y_mean
    z = z_p + gain @ innovation
    P = P_p - gain @ Pm @ gain.T
    return z, 0.5 * (P + P.T), innovation


def observation_series(meas: MeasurementSet, config: UkfConfig) -> tuple[np.ndarray, np.ndarray]:
    """Measured counterpart of ``AugmentedModel.observe`` for every step,
    together with the acceleration series that drives input recovery."""
    accel, vel, disp = kinematic_series(meas.accel, meas.dt, config.detrend)
    if meas.displacement is not None:
        disp = sensed_displacement(meas.displacement, meas.dt, config.detrend)
    parts = []
    if config.observe_accel:
        parts.append(accel)
    if config.observe_disp:
        parts.append(disp)
    if config.observe_vel:
        parts.append(vel)
    return np.hstack(parts), accel


def ukf_run(
    model: SystemModel,
    config: UkfConfig,
    meas: MeasurementSet,
    theta0,
    known_inputs: dict[int, float] | None = None,
    set_index: int = 1,
    z0=None,
    u0=None,
) -> EstimatorRun:
    """Run the filter over every sample of ``meas``.

    ``known_inputs`` maps 1-based DOFs to known (constant) input values.
    """
    theta0 = np.asarray(theta0, dtype=float)
    known = {dof - 1: val for dof, val in (known_inputs or {}).items()}
    aug = AugmentedModel(model, meas.dofs, known, config)
    n, L, d = model.n, aug.L, aug.d
    if theta0.size != d:
        raise ConfigError(f"initial parameter set has {theta0.size} entries, expected {d}")
    weights = sigma_weights(L, config.alpha, config.beta, config.kappa)
    Q = _as_cov(config.Q, L)
    y_all, accel = observation_series(meas, config)
    R = _as_cov(config.R, y_all.shape[1])

    z = np.zeros(L)
    if z0 is not None:
        z[: 2 * n] = z0
    z[2 * n :] = theta0
    if config.P0 is not None:
        P = _as_cov(config.P0, L)
    else:
        P = np.diag(np.r_[np.full(2 * n, config.p0_state), np.full(d, config.p0_param)])
    if not np.all(np.linalg.eigvalsh(0.5 * (P + P.T)) > 0):
        raise ConfigError("initial covariance must be positive definite")
    u_e = np.zeros(n) if u0 is None else np.asarray(u0, dtype=float).copy()
    for j, val in known.items():
        u_e[j] = val

    divergence = PriorDivergence(GaussianSummary(theta0.copy(), np.eye(d)))
    ps = aug.param_slice
    run = EstimatorRun.allocate("ukf", set_index, theta0, meas.steps, meas.dt, L, n)
    run.param_cov = np.full((meas.steps + 1, d, d), np.nan)
    run.extras["innovation_norm"] = np.full(meas.steps + 1, np.nan)

    def record(k):
        run.z[k] = z
        run.theta[k] = z[ps]
        run.u[k] = u_e
        run.param_cov[k] = P[ps, ps]
        run.kl[k] = divergence(z[ps], P[ps, ps])

    record(0)
    a_est = aug.acceleration(z, u_e)
    for k in range(1, meas.steps + 1):
        try:
            points = sigma_points(z, P, weights.lam, step=k)
            Zp, zp, Pp = predict(aug, points, u_e, meas.dt, weights, Q)
            a_full = substitute_unmeasured_accelerations(accel[k], meas.dofs, a_est)
            u_p = input_predict(aug, a_full, zp)
            z, P, innov = update(aug, zp, Pp, Zp, u_p, y_all[k], weights, R)
            u_e = input_correct(aug, a_full, z)
            if not (np.all(np.isfinite(z)) and np.all(np.isfinite(P))):
                raise DivergenceError("non-finite state estimate")
            a_est = aug.acceleration(z, u_e)
            run.extras["innovation_norm"][k] = np.linalg.norm(innov)
            record(k)
        except (DivergenceError, np.linalg.LinAlgError, FloatingPointError) as exc:
            run.mark_failed(k, f"{exc} (step {k})" if "step" not in str(exc) else str(exc))
            break
    return run
