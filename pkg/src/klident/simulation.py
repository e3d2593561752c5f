"""Synthetic ground truth: RK4 response histories and noisy sensor records."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DivergenceError
from .models import SystemModel, acceleration, continuous_dynamics, state_space


@dataclass(frozen=True)
class Pulse:
    dof: int
    amplitude: float
    start: float
    duration: float

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError("pulse duration must be positive")


@dataclass(frozen=True)
class WhiteNoise:
    dof: int
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if self.variance < 0:
            raise ConfigError("white-noise variance must be non-negative")


@dataclass(frozen=True)
class Harmonic:
    dof: int
    amplitude: float
    frequency: float  # rad/s
    phase: float = 0.0


@dataclass(frozen=True)
class InputSchedule:
    """Superposition of load components; DOFs are 1-based."""

    components: tuple = ()

    def dofs(self) -> set[int]:
        return {c.dof for c in self.components}

    def realize(self, n: int, steps: int, dt: float, rng: np.random.Generator) -> np.ndarray:
        """Sampled input history of shape ``(steps + 1, n)``.

        Every value is held constant over ``[t_k, t_k + dt)``.
        """
        u = np.zeros((steps + 1, n))
        t = np.arange(steps + 1) * dt
        for comp in self.components:
            if not 1 <= comp.dof <= n:
                raise ConfigError(f"input DOF {comp.dof} outside [1, {n}]")
            j = comp.dof - 1
            if isinstance(comp, Pulse):
                k0 = int(round(comp.start / dt))
                width = max(1, int(round(comp.duration / dt)))
                u[k0 : k0 + width, j] += comp.amplitude
            elif isinstance(comp, WhiteNoise):
                u[:, j] += comp.mean + np.sqrt(comp.variance) * rng.standard_normal(steps + 1)
            elif isinstance(comp, Harmonic):
                u[:, j] += comp.amplitude * np.sin(comp.frequency * t + comp.phase)
            else:
                raise ConfigError(f"unknown input component {comp!r}")
        return u


@dataclass(frozen=True)
class DamageEvent:
    """Multiply selected true parameters by ``factor`` from ``time`` on.

    ``params`` holds 0-based parameter indices; ``None`` means all.
    """

    time: float
    factor: float
    params: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.factor <= 0:
            raise ConfigError("damage factor must be positive")


@dataclass
class Trajectory:
    dt: float
    t: np.ndarray
    z: np.ndarray  # (steps + 1, 2n)
    accel: np.ndarray  # (steps + 1, n)
    u: np.ndarray  # (steps + 1, n)
    theta: np.ndarray  # (steps + 1, n_params), true parameters per step

    @property
    def n(self) -> int:
        return self.u.shape[1]

    @property
    def steps(self) -> int:
        return self.t.size - 1

    def to_csv(self, path, pseudo=None) -> None:
        """One row per step: time, states, inputs, accelerations.

        ``pseudo`` optionally maps column names to extra series.
        """
        n = self.n
        header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"v{i + 1}" for i in range(n)]
        header += [f"u{i + 1}" for i in range(n)] + [f"a{i + 1}" for i in range(n)]
        cols = [self.t[:, None], self.z, self.u, self.accel]
        if pseudo:
            header += list(pseudo)
            cols += [np.asarray(v).reshape(-1, 1) for v in pseudo.values()]
        data = np.hstack(cols)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in data:
                writer.writerow([repr(float(v)) for v in row])


def n_steps(T: float, dt: float) -> int:
    if T <= 0 or dt <= 0:
        raise ConfigError("duration and time step must be positive")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ConfigError(f"duration {T} is not a whole number of steps of {dt}")
    return steps


def _theta_history(theta_true, damage: Sequence[DamageEvent], steps: int, dt: float) -> np.ndarray:
    theta = np.tile(np.asarray(theta_true, dtype=float), (steps + 1, 1))
    for ev in sorted(damage, key=lambda e: e.time):
        k0 = int(round(ev.time / dt))
        if not 0 <= k0 <= steps:
            raise ConfigError(f"damage event at {ev.time} s lies outside the simulation")
        cols = slice(None) if ev.params is None else list(ev.params)
        theta[k0:, cols] *= ev.factor
    return theta


def rk4_simulate(
    model: SystemModel,
    theta_true,
    schedule: InputSchedule,
    damage: Sequence[DamageEvent] = (),
    T: float = 30.0,
    dt: float = 0.01,
    seed=None,
    z0=None,
    u=None,
) -> Trajectory:
    """Integrate the chain with classic RK4 at step ``dt``.

    White-noise inputs are drawn once per step and held through all four
    stages.  ``u`` may be given directly to bypass the schedule.
    """
    steps = n_steps(T, dt)
    n = model.n
    if u is None:
        u = schedule.realize(n, steps, dt, np.random.default_rng(seed))
    else:
        u = np.asarray(u, dtype=float)
        if u.shape != (steps + 1, n):
            raise ConfigError(f"input history must have shape {(steps + 1, n)}")
    theta = _theta_history(theta_true, damage, steps, dt)
    z = np.zeros((steps + 1, 2 * n))
    if z0 is not None:
        z[0] = z0

    if model.nonlinear:
        _rk4_loop(model, theta, u, z, dt)
    else:
        _rk4_linear(model, theta, u, z, dt)
    accel = acceleration(model, theta, z[:, :n], z[:, n:], u)
    return Trajectory(dt=dt, t=np.arange(steps + 1) * dt, z=z, accel=accel, u=u, theta=theta)


def _check_step(nxt, k: int) -> None:
    if not np.all(np.isfinite(nxt)) or np.max(np.abs(nxt)) > 1e12:
        raise DivergenceError("simulation diverged", step=k + 1)


def _rk4_loop(model, theta, u, z, dt) -> None:
    def f(state, uk, th):
        return continuous_dynamics(model, th, state, uk)

    for k in range(u.shape[0] - 1):
        zk, uk, th = z[k], u[k], theta[k]
        k1 = f(zk, uk, th)
        k2 = f(zk + 0.5 * dt * k1, uk, th)
        k3 = f(zk + 0.5 * dt * k2, uk, th)
        k4 = f(zk + dt * k3, uk, th)
        nxt = zk + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        _check_step(nxt, k)
        z[k + 1] = nxt


def rk4_linear_map(A, B, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """One classic RK4 step of ``z' = A z + B u`` with ``u`` held, written
    as ``z+ = Phi z + Gamma u`` (exact algebra, no approximation)."""
    h = dt * np.asarray(A, dtype=float)
    I = np.eye(h.shape[0])
    h2 = h @ h
    Phi = I + h + h2 / 2 + h2 @ h / 6 + h2 @ h2 / 24
    Gamma = dt * (I + h / 2 + h2 / 6 + h2 @ h / 24) @ np.asarray(B, dtype=float)
    return Phi, Gamma


def _rk4_linear(model, theta, u, z, dt) -> None:
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(z[0]))):
        raise ValueError("non-finite state or input")
    current = None
    for k in range(u.shape[0] - 1):
        if current is None or not np.array_equal(theta[k], current):
            current = theta[k]
            ss = state_space(model, current)
            Phi, Gamma = rk4_linear_map(ss.A, ss.B, dt)
        nxt = Phi @ z[k] + Gamma @ u[k]
        _check_step(nxt, k)
        z[k + 1] = nxt


def add_noise(signal, ratio: float, seed=None) -> np.ndarray:
    """Add white Gaussian noise with std ``ratio * RMS`` per channel.

    A 2-D ``signal`` is treated as ``(samples, channels)``.
    """
    if ratio < 0:
        raise ConfigError("noise ratio must be non-negative")
    signal = np.asarray(signal, dtype=float)
    if ratio == 0:
        return signal.copy()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rms = np.sqrt(np.mean(signal**2, axis=0))
    if np.any(rms == 0):
        warnings.warn("zero-RMS channel left noise-free", RuntimeWarning, stacklevel=2)
    return signal + ratio * rms * rng.standard_normal(signal.shape)


@dataclass
class MeasurementSet:
    """Noisy records at instrumented DOFs (1-based, ascending)."""

    dt: float
    dofs: tuple[int, ...]
    accel: np.ndarray  # (steps + 1, m)
    truth: Trajectory
    displacement: np.ndarray | None = None  # direct displacement sensing, if any
    noise_ratio: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return self.accel.shape[0] - 1

    @property
    def index(self) -> np.ndarray:
        return np.asarray(self.dofs) - 1


def make_measurements(
    trajectory: Trajectory,
    dofs: Sequence[int],
    ratio: float,
    seed=None,
    displacement_sensing: bool = False,
) -> MeasurementSet:
    """Sample noisy accelerations (and optionally displacements) at ``dofs``."""
    dofs = tuple(sorted(int(d) for d in dofs))
    if not dofs:
        raise ConfigError("at least one instrumented DOF is required")
    if len(set(dofs)) != len(dofs) or dofs[0] < 1 or dofs[-1] > trajectory.n:
        raise ConfigError(f"instrumented DOFs {dofs} invalid for a {trajectory.n}-DOF chain")
    rng = np.random.default_rng(seed)
    idx = np.asarray(dofs) - 1
    accel = add_noise(trajectory.accel[:, idx], ratio, rng)
    disp = None
    if displacement_sensing:
        disp = add_noise(trajectory.z[:, idx], ratio, rng)
    return MeasurementSet(
        dt=trajectory.dt,
        dofs=dofs,
        accel=accel,
        truth=trajectory,
        displacement=disp,
        noise_ratio=ratio,
    )
