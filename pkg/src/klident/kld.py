"""Gaussian Kullback-Leibler divergence and run selection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import MetricError, SelectionError

RIDGE = 1e-8


@dataclass(frozen=True)
class GaussianSummary:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.size


def _cholesky(cov: np.ndarray, label: str):
    try:
        return cho_factor(cov, lower=True, check_finite=False)
    except LinAlgError:
        eig = np.linalg.eigvalsh(0.5 * (cov + cov.T)).min()
        raise np.linalg.LinAlgError(
            f"{label} covariance is not positive definite (smallest eigenvalue {eig:.3e})"
        ) from None


def gaussian_kl(prior: GaussianSummary, posterior: GaussianSummary) -> float:
    """``D(posterior || prior)`` in nats for two multivariate normals."""
    E1, W1 = np.asarray(prior.mean, float), np.asarray(prior.cov, float)
    E2, W2 = np.asarray(posterior.mean, float), np.asarray(posterior.cov, float)
    if E1.shape != E2.shape or W1.shape != W2.shape:
        raise ValueError("prior and posterior dimensions differ")
    d = E1.size
    c1 = _cholesky(W1, "prior")
    c2 = _cholesky(W2, "posterior")
    logdet1 = 2.0 * np.sum(np.log(np.diag(c1[0])))
    logdet2 = 2.0 * np.sum(np.log(np.diag(c2[0])))
    diff = E1 - E2
    trace = np.trace(cho_solve(c1, W2, check_finite=False))
    maha = diff @ cho_solve(c1, diff, check_finite=False)
    return 0.5 * (logdet1 - logdet2 - d + trace + maha)


class PriorDivergence:
    """``D(posterior || prior)`` against one fixed prior, with the prior's
    factorization computed once."""

    def __init__(self, prior: GaussianSummary):
        self.mean = np.asarray(prior.mean, dtype=float).copy()
        cov = np.asarray(prior.cov, dtype=float)
        self.dim = self.mean.size
        self._chol = _cholesky(cov, "prior")
        self._logdet = 2.0 * np.sum(np.log(np.diag(self._chol[0])))

    def __call__(self, mean, cov) -> float:
        c2 = _cholesky(np.asarray(cov, dtype=float), "posterior")
        logdet2 = 2.0 * np.sum(np.log(np.diag(c2[0])))
        diff = self.mean - np.asarray(mean, dtype=float)
        trace = np.trace(cho_solve(self._chol, cov, check_finite=False))
        maha = diff @ cho_solve(self._chol, diff, check_finite=False)
        return 0.5 * (self._logdet - logdet2 - self.dim + trace + maha)


def ukf_summary(z, P, param_slice: slice) -> GaussianSummary:
    """Parameter block of an augmented-state estimate, taken verbatim."""
    return GaussianSummary(np.asarray(z)[param_slice].copy(), np.asarray(P)[param_slice, param_slice].copy())


class RunningCovariance:
    """Sample covariance of a parameter track, updated one sample at a time
    (Welford).  ``window=None`` keeps every sample."""

    def __init__(self, dim: int, ridge: float = RIDGE):
        self.dim = dim
        self.ridge = ridge
        self.count = 0
        self.mean = np.zeros(dim)
        self._m2 = np.zeros((dim, dim))

    def push(self, x) -> None:
        x = np.asarray(x, dtype=float)
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self._m2 += np.outer(delta, x - self.mean)

    def covariance(self) -> np.ndarray:
        if self.count < 2:
            cov = np.zeros((self.dim, self.dim))
        else:
            cov = self._m2 / (self.count - 1)
            cov = 0.5 * (cov + cov.T)
        return cov + self.ridge * np.eye(self.dim)


def track_summary(track, window: int | None = None, ridge: float = RIDGE) -> GaussianSummary:
    """Latest value of a parameter track with the sample covariance of its
    trailing ``window`` samples plus a ridge."""
    track = np.atleast_2d(np.asarray(track, dtype=float))
    recent = track if window is None else track[-window:]
    d = track.shape[1]
    if recent.shape[0] < 2:
        cov = np.zeros((d, d))
    else:
        cov = np.atleast_2d(np.cov(recent, rowvar=False))
    return GaussianSummary(track[-1].copy(), cov + ridge * np.eye(d))


def error_metric(theta_est, theta_true) -> np.ndarray | float:
    """Sum of absolute relative parameter errors (broadcasts over rows)."""
    theta_est = np.asarray(theta_est, dtype=float)
    theta_true = np.asarray(theta_true, dtype=float)
    if np.any(theta_true == 0):
        raise MetricError("relative error undefined for a zero true parameter")
    return np.sum(np.abs((theta_est - theta_true) / theta_true), axis=-1)


@dataclass
class KlTrace:
    set_index: int
    values: np.ndarray
    failed: bool = False

    @property
    def final(self) -> float:
        if self.failed or self.values.size == 0:
            return float("inf")
        return float(self.values[-1])


@dataclass
class SelectionReport:
    kl: list[KlTrace]
    winner: int
    error: dict[int, np.ndarray] = field(default_factory=dict)
    note: str = ""

    def final_kl(self) -> dict[int, float]:
        return {t.set_index: t.final for t in self.kl}

    def final_error(self) -> dict[int, float]:
        return {s: float(e[-1]) if e.size else float("nan") for s, e in self.error.items()}


def select_best(traces, errors=None) -> SelectionReport:
    """Pick the set with the smallest final-step divergence.

    Failed runs never win; ties go to the lowest set index.
    """
    traces = list(traces)
    if not traces:
        raise SelectionError("no identification runs to select from")
    eligible = [t for t in traces if not t.failed and np.isfinite(t.final)]
    if not eligible:
        raise SelectionError("every identification run failed")
    best = min(eligible, key=lambda t: (t.final, t.set_index))
    ties = [t.set_index for t in eligible if t.final == best.final and t is not best]
    note = f"tie with sets {ties} broken by lowest index" if ties else ""
    return SelectionReport(kl=traces, winner=best.set_index, error=dict(errors or {}), note=note)
