"""Displacement/velocity pseudo-measurements from acceleration records."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps


@dataclass(frozen=True)
class DetrendPolicy:
    """Drift control applied after each integration.

    kind:
        ``"none"``, ``"linear"`` (least-squares line over a trailing window of
        ``window`` seconds, evaluated at the newest sample), ``"highpass"``
        (Butterworth of ``order`` at ``cutoff`` Hz; causal unless
        ``zero_phase`` is set, in which case it runs forward and backward)
        or ``"common"``.

    The first three act on each integrated series separately.  ``"common"``
    integrates the raw record twice and then runs one and the same
    high-pass filter over acceleration, velocity and displacement.  Since a
    linear filter commutes with integration and with a linear equation of
    motion, the filtered triple stays kinematically consistent and satisfies
    the equation of motion with a filtered input; zero inputs stay zero.
    """

    kind: str = "linear"
    window: float = 5.0
    cutoff: float = 0.05
    order: int = 2
    zero_phase: bool = False

    def __post_init__(self):
        if self.kind not in ("none", "linear", "highpass", "common"):
            raise ValueError(f"unknown detrend policy {self.kind!r}")


NONE = DetrendPolicy("none")


def cumulative_trapezoid(a, dt: float, initial: float = 0.0) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    out[0] = 0.0
    np.cumsum(0.5 * dt * (a[1:] + a[:-1]), axis=0, out=out[1:])
    return out + initial


def trailing_linear_detrend(y, width: int) -> np.ndarray:
    """Subtract, at every sample, the value at that sample of the LS line
    fitted to the preceding ``width`` samples (fewer at the start)."""
    y = np.asarray(y, dtype=float)
    N = y.shape[0]
    k = np.arange(N, dtype=float)
    shape = (N,) + (1,) * (y.ndim - 1)
    kk = k.reshape(shape)
    cy = np.concatenate([np.zeros((1,) + y.shape[1:]), np.cumsum(y, axis=0)])
    cky = np.concatenate([np.zeros((1,) + y.shape[1:]), np.cumsum(kk * y, axis=0)])
    hi = np.arange(1, N + 1)
    lo = np.maximum(0, hi - width)
    m = (hi - lo).astype(float).reshape(shape)
    sy = cy[hi] - cy[lo]
    # local abscissa j = i - lo, j = 0..m-1
    sjy = (cky[hi] - cky[lo]) - lo.reshape(shape) * sy
    sj = m * (m - 1) / 2.0
    sjj = (m - 1) * m * (2 * m - 1) / 6.0
    denom = m * sjj - sj**2
    with np.errstate(invalid="ignore", divide="ignore"):
        slope = np.where(denom > 0, (m * sjy - sj * sy) / np.where(denom > 0, denom, 1.0), 0.0)
    intercept = (sy - slope * sj) / m
    fit_end = intercept + slope * (m - 1)
    return y - fit_end


def _highpass(y, dt: float, policy: DetrendPolicy) -> np.ndarray:
    sos = sps.butter(policy.order, policy.cutoff, btype="highpass", fs=1.0 / dt, output="sos")
    if policy.zero_phase:
        return sps.sosfiltfilt(sos, y, axis=0)
    return sps.sosfilt(sos, y, axis=0)


def _detrend(y, dt: float, policy: DetrendPolicy) -> np.ndarray:
    if policy.kind in ("none", "common"):
        return y
    if policy.kind == "linear":
        return trailing_linear_detrend(y, max(2, int(round(policy.window / dt))))
    return _highpass(y, dt, policy)


def integrate_stream(
    accel, dt: float, policy: DetrendPolicy = DetrendPolicy(), v0=0.0, x0=0.0
) -> tuple[np.ndarray, np.ndarray]:
    """Velocity and displacement pseudo-series from an acceleration record.

    Works on 1-D series or on ``(samples, channels)`` arrays.
    """
    _, vel, disp = kinematic_series(accel, dt, policy, v0, x0)
    return vel, disp


def kinematic_series(
    accel, dt: float, policy: DetrendPolicy = DetrendPolicy(), v0=0.0, x0=0.0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Acceleration, velocity and displacement series used by the filters.

    The acceleration comes back unchanged except under the ``"common"``
    policy, where it carries the same high-pass filter as the integrals.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    accel = np.asarray(accel, dtype=float)
    vel = _detrend(cumulative_trapezoid(accel, dt, v0), dt, policy)
    disp = _detrend(cumulative_trapezoid(vel, dt, x0), dt, policy)
    if policy.kind == "common":
        return _highpass(accel, dt, policy), _highpass(vel, dt, policy), _highpass(disp, dt, policy)
    return accel, vel, disp


def sensed_displacement(disp, dt: float, policy: DetrendPolicy) -> np.ndarray:
    """Directly sensed displacement, filtered like the integrated series
    under the ``"common"`` policy and passed through otherwise."""
    disp = np.asarray(disp, dtype=float)
    return _highpass(disp, dt, policy) if policy.kind == "common" else disp


def substitute_unmeasured_accelerations(measured, dofs, prior_estimate) -> np.ndarray:
    """Full acceleration vector: measured rows at ``dofs`` (1-based),
    previous-step estimates elsewhere."""
    full = np.array(prior_estimate, dtype=float, copy=True)
    full[np.asarray(dofs, dtype=int) - 1] = measured
    return full
