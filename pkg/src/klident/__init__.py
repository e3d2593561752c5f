"""Joint input-parameter-state identification of chain structures from
several initial parameter guesses, with the most plausible run picked by
its Kullback-Leibler divergence from the initial guess."""

from .errors import ConfigError, DivergenceError, KlidentError, LayoutError, MetricError, SelectionError
from .experiment import ScenarioResult, run_scenario, run_sweep, simulate
from .kld import GaussianSummary, SelectionReport, error_metric, gaussian_kl, select_best
from .models import SystemModel, discretize, input_from_motion, sensitivity_matrix, state_space
from .pseudo import DetrendPolicy, integrate_stream
from .rkf import RkfConfig, rkf_run
from .runs import EstimatorRun
from .scenarios import ScenarioConfig, SweepConfig, builtin, list_scenarios, load_scenario
from .simulation import DamageEvent, Harmonic, InputSchedule, Pulse, WhiteNoise, make_measurements, rk4_simulate
from .ukf import UkfConfig, ukf_run

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DamageEvent",
    "DetrendPolicy",
    "DivergenceError",
    "EstimatorRun",
    "GaussianSummary",
    "Harmonic",
    "InputSchedule",
    "KlidentError",
    "LayoutError",
    "MetricError",
    "Pulse",
    "RkfConfig",
    "ScenarioConfig",
    "ScenarioResult",
    "SelectionError",
    "SelectionReport",
    "SweepConfig",
    "SystemModel",
    "UkfConfig",
    "WhiteNoise",
    "builtin",
    "discretize",
    "error_metric",
    "gaussian_kl",
    "input_from_motion",
    "integrate_stream",
    "list_scenarios",
    "load_scenario",
    "make_measurements",
    "rk4_simulate",
    "rkf_run",
    "run_scenario",
    "run_sweep",
    "select_best",
    "sensitivity_matrix",
    "simulate",
    "state_space",
    "ukf_run",
]
