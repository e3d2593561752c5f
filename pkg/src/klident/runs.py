"""Per-run result container shared by both estimators."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kld import GaussianSummary, KlTrace, error_metric


@dataclass
class EstimatorRun:
    """Traces of one filter instance started from one initial parameter set.

    Arrays are indexed by time step ``0..steps``.  After a divergence the
    remaining rows are NaN, ``failed`` is set and the KL trace is ``+inf``.
    """

    kind: str
    set_index: int
    theta0: np.ndarray
    t: np.ndarray
    theta: np.ndarray
    z: np.ndarray
    u: np.ndarray
    kl: np.ndarray
    rho_norm: np.ndarray | None = None
    param_cov: np.ndarray | None = None
    failed: bool = False
    fail_step: int | None = None
    message: str = ""
    extras: dict = field(default_factory=dict)

    @classmethod
    def allocate(cls, kind, set_index, theta0, steps, dt, n_state, n_input, with_rho=False):
        d = len(theta0)
        nan = lambda *shape: np.full(shape, np.nan)  # noqa: E731
        return cls(
            kind=kind,
            set_index=set_index,
            theta0=np.asarray(theta0, dtype=float).copy(),
            t=np.arange(steps + 1) * dt,
            theta=nan(steps + 1, d),
            z=nan(steps + 1, n_state),
            u=nan(steps + 1, n_input),
            kl=nan(steps + 1),
            rho_norm=nan(steps + 1) if with_rho else None,
        )

    def mark_failed(self, step: int, message: str) -> None:
        self.failed = True
        self.fail_step = step
        self.message = message
        self.kl[step:] = np.inf

    def kl_trace(self) -> KlTrace:
        return KlTrace(self.set_index, self.kl, self.failed)

    def error_trace(self, theta_true) -> np.ndarray:
        """Sum of relative parameter errors per step; ``theta_true`` may be a
        per-step history (damage scenarios)."""
        return error_metric(self.theta, theta_true)

    def posterior_summary(self, step: int = -1) -> GaussianSummary:
        """Parameter mean and covariance the divergence was computed from."""
        if self.param_cov is None:
            raise ValueError("run carries no parameter covariance")
        return GaussianSummary(self.theta[step].copy(), self.param_cov[step].copy())


def posterior_summary(run: EstimatorRun, step: int = -1) -> GaussianSummary:
    return run.posterior_summary(step)
