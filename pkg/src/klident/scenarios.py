"""Scenario and sweep configurations plus the built-in catalog.

A scenario is a plain JSON document.  Top-level keys:

``name``, ``description``
    Free text.
``masses``, ``stiffness``, ``damping``, ``cubic``
    Chain model; ``cubic`` is ``null`` for linear chains.
``theta_true``
    Parameters used to simulate the truth; ``null`` takes them from the
    model fields above.
``set_factors`` / ``initial_sets``
    Initial parameter sets, either as multiples of ``theta_true`` or as
    explicit vectors (explicit vectors win when both are given).
``estimator``, ``estimator_options``
    ``"ukf"`` or ``"rkf"`` and keyword overrides for its config class;
    a ``detrend`` entry is a mapping of drift-control settings.
``inputs``
    Load components, each ``{"kind": "pulse" | "white_noise" | "harmonic",
    "dof": ..., ...}`` with the fields of the matching class.
``known_inputs``
    ``{dof: value}``; ``null`` means zero at every DOF without a load.
``damage``
    ``[{"time": s, "factor": f, "params": [0-based indices] | null}]``.
``dofs``, ``displacement_sensing``, ``noise_ratio``, ``T``, ``dt``, ``seed``
    Sensing layout, noise level, horizon and the master seed.
"""
from __future__ import annotations

import copy
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .models import SystemModel
from .pseudo import DetrendPolicy
from .rkf import RkfConfig
from .simulation import DamageEvent, Harmonic, InputSchedule, Pulse, WhiteNoise
from .ukf import UkfConfig

SCENARIO_SCHEMA = "klident-scenario/1"
SWEEP_SCHEMA = "klident-sweep/1"
DEFAULT_FACTORS = (0.5, 0.75, 1.5)
SWEEPABLE = ("lam2", "mu", "Rd", "noise_ratio")

_COMPONENTS = {"pulse": Pulse, "white_noise": WhiteNoise, "harmonic": Harmonic}


def _check_vector(errors, name, value, length=None, positive=False):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        errors.append(f"{name}: not a numeric vector")
        return None
    if arr.ndim != 1:
        errors.append(f"{name}: expected a flat list")
        return None
    if length is not None and arr.size != length:
        errors.append(f"{name}: expected {length} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        errors.append(f"{name}: entries must be finite")
    elif positive and np.any(arr <= 0):
        errors.append(f"{name}: entries must be positive")
    return arr


@dataclass
class ScenarioConfig:
    """Everything needed to reproduce one multi-set identification."""

    name: str
    masses: list
    stiffness: list
    damping: list
    estimator: str
    dofs: list
    inputs: list = field(default_factory=list)
    description: str = ""
    cubic: list | None = None
    theta_true: list | None = None
    set_factors: list = field(default_factory=lambda: list(DEFAULT_FACTORS))
    initial_sets: list | None = None
    estimator_options: dict = field(default_factory=dict)
    known_inputs: dict | None = None
    damage: list = field(default_factory=list)
    displacement_sensing: bool = False
    noise_ratio: float = 0.05
    T: float = 30.0
    dt: float = 0.01
    seed: int = 0

    # ---------------------------------------------------------------- build
    def model(self) -> SystemModel:
        return SystemModel(self.masses, self.stiffness, self.damping, self.cubic, name=self.name)

    def true_parameters(self) -> np.ndarray:
        if self.theta_true is not None:
            return np.asarray(self.theta_true, dtype=float)
        return self.model().theta

    def parameter_sets(self) -> list[np.ndarray]:
        if self.initial_sets is not None:
            return [np.asarray(s, dtype=float) for s in self.initial_sets]
        theta = self.true_parameters()
        return [f * theta for f in self.set_factors]

    def schedule(self) -> InputSchedule:
        comps = []
        for spec in self.inputs:
            spec = dict(spec)
            comps.append(_COMPONENTS[spec.pop("kind")](**spec))
        return InputSchedule(tuple(comps))

    def damage_events(self) -> list[DamageEvent]:
        out = []
        for ev in self.damage:
            params = ev.get("params")
            out.append(DamageEvent(float(ev["time"]), float(ev["factor"]), None if params is None else tuple(params)))
        return out

    def known(self) -> dict[int, float]:
        """Known inputs keyed by 1-based DOF."""
        if self.known_inputs is not None:
            return {int(k): float(v) for k, v in self.known_inputs.items()}
        loaded = {int(spec["dof"]) for spec in self.inputs}
        return {j: 0.0 for j in range(1, len(self.masses) + 1) if j not in loaded}

    def estimator_config(self):
        opts = dict(self.estimator_options)
        if isinstance(opts.get("detrend"), dict):
            opts["detrend"] = DetrendPolicy(**opts["detrend"])
        cls = {"ukf": UkfConfig, "rkf": RkfConfig}[self.estimator]
        return cls(**opts)

    # ----------------------------------------------------------- validation
    def problems(self) -> list[str]:
        """Every validation problem found, in a stable order."""
        errors: list[str] = []
        masses = _check_vector(errors, "masses", self.masses, positive=True)
        n = None if masses is None else masses.size
        if n == 0:
            errors.append("masses: chain needs at least one DOF")
            n = None
        _check_vector(errors, "stiffness", self.stiffness, n)
        _check_vector(errors, "damping", self.damping, n)
        if self.cubic is not None:
            _check_vector(errors, "cubic", self.cubic, n)
        d = None if n is None else n * (3 if self.cubic is not None else 2)
        if self.theta_true is not None:
            _check_vector(errors, "theta_true", self.theta_true, d)

        if self.initial_sets is not None:
            if len(self.initial_sets) == 0:
                errors.append("initial_sets: at least one initial set is required")
            for i, s in enumerate(self.initial_sets, 1):
                _check_vector(errors, f"initial_sets[{i}]", s, d)
        else:
            if len(self.set_factors) == 0:
                errors.append("set_factors: at least one initial set is required")
            _check_vector(errors, "set_factors", self.set_factors)

        if self.estimator not in ("ukf", "rkf"):
            errors.append(f"estimator: expected 'ukf' or 'rkf', got {self.estimator!r}")
        else:
            try:
                self.estimator_config()
            except (TypeError, ValueError) as exc:
                errors.append(f"estimator_options: {exc}")
            if self.estimator == "rkf" and self.cubic is not None:
                errors.append("estimator: the residual-based filter needs a linear chain")

        if n is not None:
            dofs = list(self.dofs)
            if not dofs:
                errors.append("dofs: at least one instrumented DOF is required")
            elif len(set(dofs)) != len(dofs) or any(not 1 <= int(j) <= n for j in dofs):
                errors.append(f"dofs: {dofs} invalid for a {n}-DOF chain")
            for i, spec in enumerate(self.inputs, 1):
                kind = spec.get("kind")
                if kind not in _COMPONENTS:
                    errors.append(f"inputs[{i}]: unknown kind {kind!r}")
                    continue
                try:
                    comp = _COMPONENTS[kind](**{k: v for k, v in spec.items() if k != "kind"})
                except (TypeError, ValueError) as exc:
                    errors.append(f"inputs[{i}]: {exc}")
                    continue
                if not 1 <= comp.dof <= n:
                    errors.append(f"inputs[{i}]: DOF {comp.dof} outside [1, {n}]")
            for j in (self.known_inputs or {}):
                if not 1 <= int(j) <= n:
                    errors.append(f"known_inputs: DOF {j} outside [1, {n}]")

        if not (isinstance(self.noise_ratio, (int, float)) and self.noise_ratio >= 0):
            errors.append("noise_ratio: must be a non-negative number")
        if not (self.dt > 0 and self.T > 0):
            errors.append("T, dt: must be positive")
        elif abs(round(self.T / self.dt) * self.dt - self.T) > 1e-9 * max(1.0, self.T):
            errors.append(f"T: {self.T} is not a whole number of steps of {self.dt}")
        for i, ev in enumerate(self.damage, 1):
            try:
                event = DamageEvent(float(ev["time"]), float(ev["factor"]), ev.get("params"))
            except (KeyError, TypeError, ValueError) as exc:
                errors.append(f"damage[{i}]: {exc}")
                continue
            if not 0 <= event.time <= self.T:
                errors.append(f"damage[{i}]: time {event.time} outside [0, {self.T}]")
            if d is not None and event.params is not None and any(not 0 <= p < d for p in event.params):
                errors.append(f"damage[{i}]: parameter index outside [0, {d})")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            errors.append("seed: must be an unsigned 64-bit integer")
        return errors

    def validate(self) -> "ScenarioConfig":
        errors = self.problems()
        if errors:
            raise ConfigError("invalid scenario:\n  " + "\n  ".join(errors))
        return self

    # -------------------------------------------------------- serialization
    def to_dict(self) -> dict:
        return {"schema": SCENARIO_SCHEMA, **dataclasses.asdict(self)}

    def resolved(self) -> dict:
        """Fully expanded configuration: explicit sets, known inputs and
        every estimator option, so the file reruns without the catalog."""
        out = self.to_dict()
        out["theta_true"] = self.true_parameters().tolist()
        out["initial_sets"] = [s.tolist() for s in self.parameter_sets()]
        out["known_inputs"] = {str(k): v for k, v in sorted(self.known().items())}
        out["estimator_options"] = dataclasses.asdict(self.estimator_config())
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        schema = data.pop("schema", SCENARIO_SCHEMA)
        names = {f.name for f in dataclasses.fields(cls)}
        errors = []
        if schema != SCENARIO_SCHEMA:
            errors.append(f"schema: expected {SCENARIO_SCHEMA!r}, got {schema!r}")
        errors += [f"{key}: unknown field" for key in sorted(set(data) - names)]
        required = {f.name for f in dataclasses.fields(cls) if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING}
        errors += [f"{key}: missing" for key in sorted(required - set(data))]
        if errors:
            raise ConfigError("invalid scenario:\n  " + "\n  ".join(errors))
        return cls(**{k: v for k, v in data.items() if k in names})

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(copy.deepcopy(self), **changes)

    def with_duration(self, T: float) -> "ScenarioConfig":
        """Shortened or extended copy; damage events past ``T`` are dropped."""
        kept = [ev for ev in self.damage if float(ev["time"]) <= T]
        return self.replace(T=float(T), damage=kept)


@dataclass
class SweepConfig:
    """One scenario re-run over a grid of a single tuning parameter."""

    scenario: object  # catalog name or ScenarioConfig
    parameter: str
    values: list
    description: str = ""

    def base(self) -> ScenarioConfig:
        if isinstance(self.scenario, ScenarioConfig):
            return self.scenario
        if isinstance(self.scenario, dict):
            return ScenarioConfig.from_dict(self.scenario)
        return builtin(self.scenario)

    def problems(self) -> list[str]:
        errors = []
        if self.parameter not in SWEEPABLE:
            errors.append(f"parameter: expected one of {SWEEPABLE}, got {self.parameter!r}")
        if len(self.values) == 0:
            errors.append("values: the grid is empty")
        elif not all(isinstance(v, (int, float)) and math.isfinite(v) and v > 0 for v in self.values):
            errors.append("values: every grid value must be a positive number")
        try:
            base = self.base()
        except (ConfigError, KeyError) as exc:
            errors.append(f"scenario: {exc}")
        else:
            if self.parameter in ("lam2", "mu", "Rd") and base.estimator != "rkf":
                errors.append(f"parameter: {self.parameter} only applies to the residual-based filter")
            errors += [f"scenario.{e}" for e in base.problems()]
        return errors

    def validate(self) -> "SweepConfig":
        errors = self.problems()
        if errors:
            raise ConfigError("invalid sweep:\n  " + "\n  ".join(errors))
        return self

    def scenario_for(self, value: float) -> ScenarioConfig:
        base = self.base()
        if self.parameter == "noise_ratio":
            return base.replace(noise_ratio=float(value))
        opts = dict(base.estimator_options)
        opts[self.parameter] = float(value)
        return base.replace(estimator_options=opts)

    def to_dict(self) -> dict:
        scen = self.scenario.to_dict() if isinstance(self.scenario, ScenarioConfig) else self.scenario
        return {
            "schema": SWEEP_SCHEMA,
            "scenario": scen,
            "parameter": self.parameter,
            "values": list(self.values),
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        data = dict(data)
        schema = data.pop("schema", SWEEP_SCHEMA)
        if schema != SWEEP_SCHEMA:
            raise ConfigError(f"invalid sweep:\n  schema: expected {SWEEP_SCHEMA!r}, got {schema!r}")
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        missing = {"scenario", "parameter", "values"} - set(data)
        if unknown or missing:
            lines = [f"{k}: unknown field" for k in sorted(unknown)] + [f"{k}: missing" for k in sorted(missing)]
            raise ConfigError("invalid sweep:\n  " + "\n  ".join(lines))
        return cls(**data)


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None


def load_scenario(ref) -> ScenarioConfig:
    """Catalog name or path to a scenario JSON file."""
    if isinstance(ref, ScenarioConfig):
        return ref
    if str(ref) in CATALOG:
        return builtin(str(ref))
    path = Path(ref)
    if not path.exists():
        raise ConfigError(f"{ref!r} is neither a built-in scenario nor a file")
    return ScenarioConfig.from_dict(load_json(path))


def load_sweep(ref) -> SweepConfig:
    if isinstance(ref, SweepConfig):
        return ref
    if str(ref) in SWEEPS:
        return builtin_sweep(str(ref))
    path = Path(ref)
    if not path.exists():
        raise ConfigError(f"{ref!r} is neither a built-in sweep nor a file")
    return SweepConfig.from_dict(load_json(path))


# ---------------------------------------------------------------- catalog

_THREE = dict(masses=[1.0, 1.0, 1.0], stiffness=[9.0, 11.0, 13.0], damping=[0.25, 0.5, 0.75])
_SIX = dict(
    masses=[1.0] * 6,
    stiffness=[9.0, 9.0, 11.0, 11.0, 13.0, 13.0],
    damping=[0.25, 0.25, 0.5, 0.5, 0.75, 0.75],
)
_TEN = dict(
    masses=[1.0] * 10,
    stiffness=[9.0, 9.0, 9.0, 11.0, 11.0, 11.0, 11.0, 13.0, 13.0, 13.0],
    damping=[0.25, 0.25, 0.25, 0.5, 0.5, 0.5, 0.5, 0.75, 0.75, 0.75],
)
_DUFFING = dict(masses=[1.0, 1.0], stiffness=[3.0, 4.5], damping=[0.5, 0.5], cubic=[15.0, 27.0])

_PULSE3 = {"kind": "pulse", "dof": 3, "amplitude": 100.0, "start": 5.0, "duration": 0.01}
_NOISE3 = {"kind": "white_noise", "dof": 3, "mean": 0.0, "variance": 4.0}

_UKF = {"Q": 1e-9, "R": 1e-3, "propagation": "rk4", "detrend": {"kind": "common", "cutoff": 0.2, "order": 4}}
_UKF_DUFFING = {**_UKF, "R": 1e-5}
_RKF = {"lam2": 5e-2, "mu": 5e-3, "Qd": 1.0, "Rd": 1e-10, "P0": 1.0}


def _entries() -> dict[str, dict]:
    six_noise = [{"kind": "white_noise", "dof": 6, "mean": 0.0, "variance": 9.0}]
    return {
        "fig2": dict(
            description="3-DOF linear, UKF, 100 N pulse at DOF 3, full sensing, 5% noise",
            **_THREE, estimator="ukf", estimator_options=_UKF, dofs=[1, 2, 3], inputs=[_PULSE3],
        ),
        "fig3": dict(
            description="3-DOF linear, UKF, white-noise load at DOF 3, full sensing, 5% noise",
            **_THREE, estimator="ukf", estimator_options=_UKF, dofs=[1, 2, 3], inputs=[_NOISE3],
        ),
        "fig4": dict(
            description="3-DOF linear, UKF, white-noise load at DOF 3, full sensing, 10% noise",
            **_THREE, estimator="ukf", estimator_options=_UKF, dofs=[1, 2, 3], inputs=[_NOISE3],
            noise_ratio=0.10,
        ),
        "fig5": dict(
            description="3-DOF linear, UKF, white-noise load at DOF 3, full sensing, 20% noise",
            **_THREE, estimator="ukf", estimator_options=_UKF, dofs=[1, 2, 3], inputs=[_NOISE3],
            noise_ratio=0.20,
        ),
        "fig6": dict(
            description="3-DOF linear, RKF, white-noise load at DOF 3, sensors at DOFs 2-3",
            **_THREE, estimator="rkf", estimator_options=_RKF, dofs=[2, 3], inputs=[_NOISE3], T=100.0,
        ),
        "fig7": dict(
            description="fig6 with every parameter halved at 50 s",
            **_THREE, estimator="rkf", estimator_options=_RKF, dofs=[2, 3], inputs=[_NOISE3], T=100.0,
            damage=[{"time": 50.0, "factor": 0.5, "params": None}],
        ),
        "fig8": dict(
            description="6-DOF linear, RKF, white-noise load at DOF 6, sensors at DOFs 3-6",
            **_SIX, estimator="rkf", estimator_options=_RKF, dofs=[3, 4, 5, 6], inputs=six_noise, T=100.0,
        ),
        "fig9": dict(
            description="6-DOF linear, RKF, white-noise load at DOF 6, sensors at DOFs 4-6",
            **_SIX, estimator="rkf", estimator_options=_RKF, dofs=[4, 5, 6], inputs=six_noise, T=100.0,
        ),
        "fig10": dict(
            description="6-DOF linear, RKF, three pulses at DOF 6 plus a harmonic at DOF 5, sensors at DOFs 4-6",
            **_SIX, estimator="rkf", estimator_options=_RKF, dofs=[4, 5, 6], T=100.0,
            inputs=[
                {"kind": "pulse", "dof": 6, "amplitude": 100.0, "start": t, "duration": 0.01}
                for t in (17.3, 48.1, 76.9)
            ]
            + [{"kind": "harmonic", "dof": 5, "amplitude": 1.0, "frequency": 1.0, "phase": 0.0}],
        ),
        "fig11": dict(
            description="10-DOF linear, RKF, white-noise load at DOF 10, sensors at DOFs 5-10",
            **_TEN, estimator="rkf", estimator_options=_RKF, dofs=[5, 6, 7, 8, 9, 10], T=100.0,
            inputs=[{"kind": "white_noise", "dof": 10, "mean": 0.0, "variance": 9.0}],
        ),
        "fig12": dict(
            description="2-DOF Duffing, UKF, pulse plus white noise at DOF 2, sensors at DOFs 1-2",
            **_DUFFING, estimator="ukf", estimator_options=_UKF_DUFFING, dofs=[1, 2], displacement_sensing=True,
            inputs=[
                {"kind": "pulse", "dof": 2, "amplitude": 100.0, "start": 5.0, "duration": 0.01},
                {"kind": "white_noise", "dof": 2, "mean": 0.0, "variance": 4.0},
            ],
        ),
        "fig13": dict(
            description="2-DOF Duffing, UKF, pulse plus white noise at DOF 2, sensor at DOF 2 only",
            **_DUFFING, estimator="ukf", estimator_options=_UKF_DUFFING, dofs=[2], displacement_sensing=True,
            inputs=[
                {"kind": "pulse", "dof": 2, "amplitude": 100.0, "start": 5.0, "duration": 0.01},
                {"kind": "white_noise", "dof": 2, "mean": 0.0, "variance": 4.0},
            ],
        ),
    }


CATALOG = {name: ScenarioConfig(name=name, **copy.deepcopy(spec)) for name, spec in _entries().items()}

SWEEPS = {
    "fig17-lambda": SweepConfig(
        "fig8", "lam2", [1e-3, 3e-3, 1e-2, 2e-2, 5e-2, 1e-1, 2e-1, 5e-1, 1.0, 3.0, 10.0],
        description="regularization weight lambda^2 on fig8, final residual norm per value",
    ),
    "fig17-mu": SweepConfig(
        "fig8", "mu", [1e-1, 1e-2, 1e-3],
        description="step damping exponent mu on fig8, final parameter error per value",
    ),
    "fig17-rd": SweepConfig(
        "fig8", "Rd", [1e-4, 1e-6, 1e-8, 1e-10, 1e-12, 1e-14],
        description="pseudo-measurement covariance R_d on fig8, final parameter error per value",
    ),
}


def builtin(name: str) -> ScenarioConfig:
    if name not in CATALOG:
        raise ConfigError(f"unknown scenario {name!r}; see 'list'")
    return copy.deepcopy(CATALOG[name])


def builtin_sweep(name: str) -> SweepConfig:
    if name not in SWEEPS:
        raise ConfigError(f"unknown sweep {name!r}; see 'list'")
    return copy.deepcopy(SWEEPS[name])


def list_scenarios() -> list[tuple[str, str]]:
    """``(name, description)`` for every built-in scenario and sweep."""
    rows = [(name, cfg.description) for name, cfg in CATALOG.items()]
    rows += [(name, sw.description) for name, sw in SWEEPS.items()]
    return rows
