"""Parametric shear-building chain models.

A chain of ``n`` lumped masses is connected in series by springs and
dashpots, the first one attached to the ground.  Element ``j`` (1-based)
links DOF ``j-1`` to DOF ``j`` and carries a stiffness ``k_j``, a viscous
damping ``c_j`` and, for the Duffing variant, a cubic stiffness ``e_j``.

Parameter vectors are always ordered ``[k_1..k_n, c_1..c_n, (e_1..e_n)]``.
All force routines broadcast over leading axes so that a whole cloud of
sigma points (each with its own parameters) can be evaluated at once.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .errors import LayoutError

__all__ = [
    "SystemModel",
    "StateSpaceMatrices",
    "assemble",
    "restoring_force",
    "continuous_dynamics",
    "acceleration",
    "state_space",
    "discretize",
    "input_from_motion",
    "sensitivity_matrix",
]


@dataclass(frozen=True)
class SystemModel:
    """Mass-spring-damper chain with optional cubic springs.

    ``stiffness``/``damping``/``cubic`` hold nominal (true) values; every
    routine below takes the parameter vector explicitly so estimates can
    be substituted freely.
    """

    masses: np.ndarray
    stiffness: np.ndarray
    damping: np.ndarray
    cubic: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        masses = np.atleast_1d(np.asarray(self.masses, dtype=float))
        n = masses.size
        if n < 1:
            raise LayoutError("a chain needs at least one DOF")
        if np.any(masses <= 0) or not np.all(np.isfinite(masses)):
            raise LayoutError("masses must be finite and strictly positive")
        object.__setattr__(self, "masses", masses)
        for attr in ("stiffness", "damping"):
            arr = np.atleast_1d(np.asarray(getattr(self, attr), dtype=float))
            if arr.size != n:
                raise LayoutError(f"{attr} has {arr.size} entries, expected {n}")
            object.__setattr__(self, attr, arr)
        if self.cubic is not None:
            arr = np.atleast_1d(np.asarray(self.cubic, dtype=float))
            if arr.size != n:
                raise LayoutError(f"cubic has {arr.size} entries, expected {n}")
            object.__setattr__(self, "cubic", arr)

    @property
    def n(self) -> int:
        return self.masses.size

    @property
    def nonlinear(self) -> bool:
        return self.cubic is not None

    @property
    def n_params(self) -> int:
        return (3 if self.nonlinear else 2) * self.n

    @property
    def theta(self) -> np.ndarray:
        """Nominal parameter vector in canonical order."""
        parts = [self.stiffness, self.damping]
        if self.nonlinear:
            parts.append(self.cubic)
        return np.concatenate(parts)

    @property
    def mass_matrix(self) -> np.ndarray:
        return np.diag(self.masses)

    def param_names(self) -> list[str]:
        names = [f"k{j + 1}" for j in range(self.n)]
        names += [f"c{j + 1}" for j in range(self.n)]
        if self.nonlinear:
            names += [f"e{j + 1}" for j in range(self.n)]
        return names

    def split(self, theta) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
        """Split ``theta`` (shape ``(..., n_params)``) into k, c, e blocks."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != self.n_params:
            raise LayoutError(
                f"parameter vector has {theta.shape[-1]} entries, "
                f"model {self.name or 'chain'} expects {self.n_params}"
            )
        n = self.n
        k = theta[..., :n]
        c = theta[..., n : 2 * n]
        e = theta[..., 2 * n :] if self.nonlinear else None
        return k, c, e


@dataclass(frozen=True)
class StateSpaceMatrices:
    A: np.ndarray
    B: np.ndarray
    A_d: np.ndarray | None = field(default=None)
    B_d: np.ndarray | None = field(default=None)


def _chain_matrix(values: np.ndarray) -> np.ndarray:
    n = values.size
    mat = np.zeros((n, n))
    idx = np.arange(n)
    mat[idx, idx] = values
    mat[idx[:-1], idx[:-1]] += values[1:]
    mat[idx[:-1], idx[1:]] = -values[1:]
    mat[idx[1:], idx[:-1]] = -values[1:]
    return mat


def assemble(model: SystemModel, theta) -> tuple[np.ndarray, ...]:
    """Return ``(M, C, K)`` or, for the Duffing variant, ``(M, C, K, E)``.

    ``E`` multiplies the vector of cubed element elongations
    ``[(x_1 - x_0)^3, ..., (x_n - x_{n-1})^3]`` with ``x_0 = 0``.
    """
    k, c, e = model.split(np.asarray(theta, dtype=float).reshape(-1))
    M = model.mass_matrix
    C = _chain_matrix(c)
    K = _chain_matrix(k)
    if e is None:
        return M, C, K
    n = model.n
    E = np.zeros((n, n))
    idx = np.arange(n)
    E[idx, idx] = e
    E[idx[:-1], idx[1:]] = -e[1:]
    return M, C, K, E


def _elongation(x: np.ndarray) -> np.ndarray:
    out = np.array(x, dtype=float, copy=True)
    out[..., 1:] -= x[..., :-1]
    return out


def _element_to_nodal(f: np.ndarray) -> np.ndarray:
    # element j pushes DOF j by +f_j and DOF j-1 by -f_j
    out = f.copy()
    out[..., :-1] -= f[..., 1:]
    return out


def restoring_force(model: SystemModel, theta, x, v) -> np.ndarray:
    """Internal force ``K x + C v (+ E d^3)`` with broadcasting."""
    k, c, e = model.split(theta)
    d = _elongation(np.asarray(x, dtype=float))
    f = k * d + c * _elongation(np.asarray(v, dtype=float))
    if e is not None:
        f = f + e * d**3
    return _element_to_nodal(f)


def acceleration(model: SystemModel, theta, x, v, u) -> np.ndarray:
    return (np.asarray(u, dtype=float) - restoring_force(model, theta, x, v)) / model.masses


def continuous_dynamics(model: SystemModel, theta, z, u) -> np.ndarray:
    """Time derivative of ``z = [x, v]`` under input ``u``."""
    z = np.asarray(z, dtype=float)
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(u))):
        raise ValueError("non-finite state or input")
    n = model.n
    x, v = z[..., :n], z[..., n:]
    return np.concatenate([v, acceleration(model, theta, x, v, u)], axis=-1)


def state_space(model: SystemModel, theta) -> StateSpaceMatrices:
    """Continuous ``A = [0 I; -M^-1 K  -M^-1 C]`` and ``B = [0; M^-1]``.

    Linear chains only; the cubic term has no state-space form.
    """
    M, C, K = assemble(model, theta)[:3]
    n = model.n
    inv_m = 1.0 / model.masses
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = np.eye(n)
    A[n:, :n] = -K * inv_m[:, None]
    A[n:, n:] = -C * inv_m[:, None]
    B = np.vstack([np.zeros((n, n)), np.diag(inv_m)])
    return StateSpaceMatrices(A, B)


def discretize(A, B, dt: float, method: str = "taylor") -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization.

    ``"taylor"`` is the second-order series ``I + dt A + dt^2/2 A^2`` with
    ``B_d = dt B``.  ``"expm"`` uses the matrix exponential for ``A_d`` and
    the exact ZOH integral for ``B_d`` (via the augmented-matrix trick, so
    a singular ``A`` is fine).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if method == "taylor":
        I = np.eye(A.shape[0])
        return I + dt * A + 0.5 * dt**2 * (A @ A), dt * B
    if method == "expm":
        s, m = A.shape[0], B.shape[1]
        aug = np.zeros((s + m, s + m))
        aug[:s, :s] = A
        aug[:s, s:] = B
        phi = expm(aug * dt)
        return phi[:s, :s], phi[:s, s:]
    raise ValueError(f"unknown discretization method {method!r}")


def input_from_motion(model: SystemModel, theta, accel, z, known_inputs=None) -> np.ndarray:
    """Recover the input from the equation of motion ``u = M a + f(z)``.

    ``known_inputs`` maps 0-based DOF index to the known input value at the
    current step; those rows overwrite the recovered ones.
    """
    z = np.asarray(z, dtype=float)
    n = model.n
    u = model.masses * np.asarray(accel, dtype=float) + restoring_force(
        model, theta, z[..., :n], z[..., n:]
    )
    if known_inputs:
        u = np.array(u, copy=True)
        for dof, value in known_inputs.items():
            u[..., dof] = value
    return u


def sensitivity_matrix(model: SystemModel, z, theta=None) -> np.ndarray:
    """Matrix ``M^-1 d(f(z; theta))/d theta`` with ``f`` the restoring force.

    Linear in ``theta`` for linear chains (so ``theta`` is ignored there);
    for the cubic variant only the cubic columns depend on the state and
    none depend on ``theta`` either, but the argument is kept for callers
    that treat the map generically.
    """
    z = np.asarray(z, dtype=float)
    n = model.n
    d = _elongation(z[:n])
    dv = _elongation(z[n:])
    values = [d, dv]
    if model.nonlinear:
        values.append(d**3)
    rows, cols, sub_rows, sub_cols = _sensitivity_pattern(n, len(values))
    stacked = np.concatenate(values)
    U = np.zeros((n, model.n_params))
    U[rows, cols] = stacked
    U[sub_rows, sub_cols] = -stacked.reshape(len(values), n)[:, 1:].ravel()
    return U / model.masses[:, None]


@lru_cache(maxsize=None)
def _sensitivity_pattern(n: int, blocks: int):
    idx = np.arange(n)
    rows = np.tile(idx, blocks)
    cols = np.concatenate([b * n + idx for b in range(blocks)])
    sub_rows = np.tile(idx[:-1], blocks)
    sub_cols = np.concatenate([b * n + idx[1:] for b in range(blocks)])
    return rows, cols, sub_rows, sub_cols
