"""Scenario execution: one shared simulation, one filter run per initial
set, selection by final divergence and CSV output.

Every CSV starts with a ``# schema=...`` comment line followed by a header
row.  Floats are written with ``repr`` so reruns with the same seed produce
byte-identical files whether sets run in worker processes or in-process.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SelectionError
from .kld import SelectionReport, error_metric, select_best
from .rkf import rkf_run
from .runs import EstimatorRun
from .scenarios import ScenarioConfig, SweepConfig
from .simulation import MeasurementSet, make_measurements, rk4_simulate
from .ukf import ukf_run

TRACE_SCHEMA = "klident-trace/1"
KL_SCHEMA = "klident-kl/1"
SUMMARY_SCHEMA = "klident-summary/1"
SWEEP_TABLE_SCHEMA = "klident-sweep-table/1"


def simulate(config: ScenarioConfig) -> MeasurementSet:
    """Ground truth and noisy records, both drawn from the master seed."""
    input_seed, noise_seed = np.random.SeedSequence(config.seed).spawn(2)
    model = config.model()
    traj = rk4_simulate(
        model,
        config.true_parameters(),
        config.schedule(),
        config.damage_events(),
        T=config.T,
        dt=config.dt,
        seed=input_seed,
    )
    return make_measurements(traj, config.dofs, config.noise_ratio, noise_seed, config.displacement_sensing)


def run_set(config: ScenarioConfig, meas: MeasurementSet, theta0, set_index: int) -> EstimatorRun:
    runner = {"ukf": ukf_run, "rkf": rkf_run}[config.estimator]
    return runner(config.model(), config.estimator_config(), meas, theta0, config.known(), set_index=set_index)


def _run_set_job(args) -> EstimatorRun:
    return run_set(*args)


def _map(func, jobs, parallel: bool) -> list:
    jobs = list(jobs)
    if not parallel or len(jobs) < 2:
        return [func(job) for job in jobs]
    workers = min(len(jobs), os.cpu_count() or 1)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, jobs))


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    measurements: MeasurementSet
    runs: list[EstimatorRun]
    errors: dict[int, np.ndarray]
    report: SelectionReport | None

    @property
    def winner(self) -> int | None:
        return None if self.report is None else self.report.winner

    def final_error(self) -> dict[int, float]:
        return {s: float(e[-1]) for s, e in self.errors.items()}

    def final_kl(self) -> dict[int, float]:
        return {r.set_index: r.kl_trace().final for r in self.runs}

    def final_rho(self) -> dict[int, float]:
        return {r.set_index: float(r.rho_norm[-1]) if r.rho_norm is not None else float("nan") for r in self.runs}

    def run(self, set_index: int) -> EstimatorRun:
        return next(r for r in self.runs if r.set_index == set_index)


def run_scenario(config: ScenarioConfig, out=None, parallel: bool = True, raise_on_failure: bool = True) -> ScenarioResult:
    """Simulate once, identify from every initial set, select and report.

    Writes ``run_<set>.csv``, ``kl.csv``, ``summary.csv`` and
    ``config_resolved.json`` into ``out`` when given.  If every set
    diverges the files are still written and :class:`SelectionError` is
    raised afterwards (unless ``raise_on_failure`` is false).
    """
    config.validate()
    meas = simulate(config)
    sets = config.parameter_sets()
    jobs = [(config, meas, theta0, i) for i, theta0 in enumerate(sets, 1)]
    runs = _map(_run_set_job, jobs, parallel)
    truth = meas.truth.theta
    errors = {r.set_index: error_metric(r.theta, truth) for r in runs}
    try:
        report = select_best([r.kl_trace() for r in runs], errors)
        failure = None
    except SelectionError as exc:
        report, failure = None, exc
    result = ScenarioResult(config, meas, runs, errors, report)
    if out is not None:
        write_outputs(result, out)
    if failure is not None and raise_on_failure:
        raise failure
    return result


# ------------------------------------------------------------------ output


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def _write_table(path: Path, schema: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={schema}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def write_outputs(result: ScenarioResult, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    config = result.config
    model = config.model()
    n = model.n
    names = model.param_names()
    for run in result.runs:
        header = ["step", "t"] + names + ["error", "kl"]
        header += [f"u{j}" for j in range(1, n + 1)]
        header += [f"x{j}" for j in range(1, n + 1)] + [f"v{j}" for j in range(1, n + 1)]
        if run.rho_norm is not None:
            header.append("rho_norm")
        err = result.errors[run.set_index]
        rows = []
        for k in range(run.t.size):
            row = [str(k), _fmt(run.t[k])] + [_fmt(v) for v in run.theta[k]]
            row += [_fmt(err[k]), _fmt(run.kl[k])] + [_fmt(v) for v in run.u[k]]
            row += [_fmt(v) for v in run.z[k, : 2 * n]]
            if run.rho_norm is not None:
                row.append(_fmt(run.rho_norm[k]))
            rows.append(row)
        _write_table(out / f"run_{run.set_index}.csv", TRACE_SCHEMA, header, rows)

    t = result.runs[0].t
    header = ["step", "t"] + [f"kl_set{r.set_index}" for r in result.runs]
    rows = ([str(k), _fmt(t[k])] + [_fmt(r.kl[k]) for r in result.runs] for k in range(t.size))
    _write_table(out / "kl.csv", KL_SCHEMA, header, rows)

    kl, er, rho = result.final_kl(), result.final_error(), result.final_rho()
    header = ["set", "final_kl", "final_error", "final_rho_norm", "winner", "failed", "fail_step"]
    rows = [
        [
            str(r.set_index),
            _fmt(kl[r.set_index]),
            _fmt(er[r.set_index]),
            "" if r.rho_norm is None else _fmt(rho[r.set_index]),
            "1" if r.set_index == result.winner else "0",
            "1" if r.failed else "0",
            "" if r.fail_step is None else str(r.fail_step),
        ]
        for r in result.runs
    ]
    _write_table(out / "summary.csv", SUMMARY_SCHEMA, header, rows)

    (out / "config_resolved.json").write_text(json.dumps(config.resolved(), indent=2, sort_keys=True) + "\n")
    return out


# ------------------------------------------------------------------- sweeps


@dataclass
class SweepRow:
    value: float
    winner: int | None
    final_kl: dict[int, float]
    final_error: dict[int, float]
    final_rho: dict[int, float]

    def selected(self, stat: str) -> float:
        """Statistic of the selected set (NaN when every set failed)."""
        if self.winner is None:
            return float("nan")
        return getattr(self, stat)[self.winner]


def _sweep_point(args) -> SweepRow:
    sweep, value = args
    result = run_scenario(sweep.scenario_for(value), parallel=False, raise_on_failure=False)
    return SweepRow(float(value), result.winner, result.final_kl(), result.final_error(), result.final_rho())


def run_sweep(sweep: SweepConfig, out=None, parallel: bool = True) -> list[SweepRow]:
    """One full scenario per grid value; writes ``sweep.csv`` when ``out``
    is given.  Each row carries the selected set's final statistics and
    the per-set values."""
    sweep.validate()
    rows = _map(_sweep_point, [(sweep, v) for v in sweep.values], parallel)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        sets = sorted(rows[0].final_kl)
        header = [sweep.parameter, "winner", "final_kl", "final_error", "final_rho_norm"]
        for s in sets:
            header += [f"final_kl_set{s}", f"final_error_set{s}", f"final_rho_norm_set{s}"]
        table = []
        for row in rows:
            line = [_fmt(row.value), "" if row.winner is None else str(row.winner)]
            line += [_fmt(row.selected(k)) for k in ("final_kl", "final_error", "final_rho")]
            for s in sets:
                line += [_fmt(row.final_kl[s]), _fmt(row.final_error[s]), _fmt(row.final_rho[s])]
            table.append(line)
        _write_table(out / "sweep.csv", SWEEP_TABLE_SCHEMA, header, table)
        resolved = sweep.to_dict()
        resolved["scenario"] = sweep.base().resolved()
        (out / "config_resolved.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")
    return rows
