"""Experiment harness: measured error vs a priori estimate, per (method, h)
cell, emitted as CSV files plus an optional static plot.

A run is described by an :class:`ExperimentConfig` (JSON file and/or flag
overrides).  Each cell runs the method against the fine-step reference,
writes the error and estimate series, fits the error envelope, and records
the breakdown time (the first error peak reaching the local solution
amplitude).  Cells fail independently; the report keeps the per-cell status.

All CSV output is deterministic: header row, '.' decimal separator, 17
significant digits.
"""

from __future__ import annotations

import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .bseries import modified_equation_coeffs, rk_bseries
from .estimator import (
    CLOSED_FORM_COEFFS,
    closed_form_error_estimate,
    detect_breakdown,
    envelope_fit,
    linosc_estimate,
    measure_global_error,
    peak_envelope,
    reference_trajectory,
)
from .oscillators import (
    EmdenFowlerProblem,
    LinearOscillatorProblem,
    airy_system,
    ef_system,
    fit_action_angle,
    parse_problem_spec,
    solution_amplitude,
    wn_build,
)
from .rk import METHOD_ORDERS, get_method, integrate

__all__ = [
    "ExperimentConfig",
    "CellReport",
    "ExperimentReport",
    "run_experiment",
    "emit_plot",
    "write_csv",
]

CSV_FLOAT = "%.17g"


@dataclass
class ExperimentConfig:
    """Fully describes one experiment sweep."""

    problem: str = "emden:n=3,nu=1"
    methods: tuple[str, ...] = ("runge2", "heun3", "tuned3")
    step_sizes: tuple[float, ...] = (1.0 / 2000.0,)
    t0: float = 0.0
    y0: tuple[float, float] = (1.0, 0.0)
    t_end: float = 2000.0
    sample_dt: float = 0.02
    reference_method: str = "rk4"
    reference_h: float = 1e-4
    fit_t_end: float = 1000.0
    output_dir: str = "results"
    plot: bool = False
    workers: int = 1

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            raw = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key in ("methods", "step_sizes", "y0"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


@dataclass
class CellReport:
    method: str
    h: float
    status: str = "ok"
    message: str = ""
    error_csv: str = ""
    estimate_csv: str = ""
    envelope_amplitude: float | None = None
    envelope_exponent: float | None = None
    envelope_window: tuple[float, float] | None = None
    breakdown_time: float | None = None


@dataclass
class ExperimentReport:
    problem: str
    cells: list[CellReport] = field(default_factory=list)
    fitted_c1: float | None = None
    fitted_c2: float | None = None

    @property
    def ok(self) -> bool:
        return all(c.status == "ok" for c in self.cells)

    def write_json(self, path: str):
        payload = {
            "problem": self.problem,
            "fitted_c1": self.fitted_c1,
            "fitted_c2": self.fitted_c2,
            "cells": [asdict(c) for c in self.cells],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def write_csv(path: str, header: list[str], columns: list[np.ndarray]):
    data = np.column_stack(columns)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(CSV_FLOAT % x for x in row) + "\n")


def _problem_context(config: ExperimentConfig):
    """Build the ODE system, the estimate factory and the amplitude model."""
    problem = parse_problem_spec(config.problem)
    if isinstance(problem, EmdenFowlerProblem):
        problem = EmdenFowlerProblem(problem.n, problem.nu, config.y0[0], config.y0[1])
        system = ef_system(problem)
        ref = wn_build(problem.n)
        fit_traj = integrate(
            get_method(config.reference_method),
            system,
            problem.initial_state(),
            0.0,
            5e-4,
            max(config.fit_t_end, 50.0),
            stride=20,
        )
        c1, c2 = fit_action_angle(problem, fit_traj, ref)
        ref = ref.with_fit(c1, c2)

        def estimate_fn(method, h, times):
            if method not in CLOSED_FORM_COEFFS:
                return None
            est = closed_form_error_estimate(method, problem, ref)
            return est.evaluate(h, times), est.envelope(h, times), est.envelope(
                h, times, leading_only=True
            )

        def amplitude_fn(t):
            return solution_amplitude(problem, ref, t)

        y0 = problem.initial_state()
        return problem, system, y0, estimate_fn, amplitude_fn, (c1, c2)

    if isinstance(problem, LinearOscillatorProblem):
        problem = replace(problem, y0=config.y0[0], y0p=config.y0[1])
        if problem.g(config.t0) > 0:
            from .oscillators import lg_parameters

            problem = replace(
                problem,
                s0=lg_parameters(problem, config.t0, np.array(config.y0)),
            )
        system = airy_system()

        def estimate_fn(method, h, times):
            b = modified_equation_coeffs(
                rk_bseries(get_method(method), 2 * METHOD_ORDERS[method])
            )
            p = METHOD_ORDERS[method]
            est = linosc_estimate(problem, b, p, h, times, t0=config.t0)
            est = np.atleast_2d(est)
            env = np.abs(est)
            return est, env, env

        def amplitude_fn(t):
            g = problem.g(np.asarray(t, dtype=float))
            return np.linalg.norm(problem.s0) * g**-0.25

        y0 = np.array([config.y0[0], config.y0[1], config.t0])
        return problem, system, y0, estimate_fn, amplitude_fn, None

    raise ValueError(f"unsupported problem {config.problem!r}")


def _run_cell(config, system, y0, estimate_fn, amplitude_fn, ref_traj, method, h):
    cell = CellReport(method=method, h=h)
    try:
        meas = measure_global_error(
            get_method(method),
            system,
            y0,
            config.t0,
            h,
            config.t_end,
            config.sample_dt,
            reference=get_method(config.reference_method),
            h_ref=config.reference_h,
            ref_traj=ref_traj,
        )
        tag = f"{method}_h{h:g}".replace("/", "_")
        err_path = os.path.join(config.output_dir, f"error_{tag}.csv")
        write_csv(
            err_path,
            ["t", "err1", "err2"],
            [meas.times, meas.errors[:, 0], meas.errors[:, 1]],
        )
        cell.error_csv = err_path

        est = estimate_fn(method, h, meas.times)
        if est is not None:
            signed, _env, env_lead = est
            est_path = os.path.join(config.output_dir, f"estimate_{tag}.csv")
            write_csv(
                est_path,
                ["t", "est1", "est2", "est1_leading_only"],
                [meas.times, signed[:, 0], signed[:, 1], env_lead[:, 0]],
            )
            cell.estimate_csv = est_path

        pk_t, pk_v = peak_envelope(meas.times, meas.errors[:, 0])
        cell.breakdown_time = detect_breakdown(pk_t, pk_v, amplitude_fn, 1.0)
        hi = cell.breakdown_time if cell.breakdown_time else config.t_end
        window = (max(config.t0 + 1.0, 0.25 * hi), hi)
        try:
            fit = envelope_fit(meas.times, meas.errors[:, 0], window)
            cell.envelope_amplitude = fit.amplitude
            cell.envelope_exponent = fit.exponent
            cell.envelope_window = fit.window
        except Exception as exc:  # too few peaks is informative, not fatal
            cell.message = f"envelope fit skipped: {exc}"
    except Exception as exc:
        cell.status = "error"
        cell.message = f"{type(exc).__name__}: {exc}"
    return cell


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run every (method, h) cell and write CSVs, report and plots."""
    os.makedirs(config.output_dir, exist_ok=True)
    problem, system, y0, estimate_fn, amplitude_fn, fit = _problem_context(config)
    report = ExperimentReport(problem=config.problem)
    if fit is not None:
        report.fitted_c1, report.fitted_c2 = fit

    ref_traj = reference_trajectory(
        system,
        y0,
        config.t0,
        config.t_end,
        config.sample_dt,
        get_method(config.reference_method),
        config.reference_h,
    )

    cells = [(m, h) for m in config.methods for h in config.step_sizes]
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            futures = [
                pool.submit(
                    _run_cell, config, system, y0, estimate_fn, amplitude_fn, ref_traj, m, h
                )
                for m, h in cells
            ]
            report.cells = [f.result() for f in futures]
    else:
        report.cells = [
            _run_cell(config, system, y0, estimate_fn, amplitude_fn, ref_traj, m, h)
            for m, h in cells
        ]

    report.write_json(os.path.join(config.output_dir, "report.json"))
    if config.plot:
        for cell in report.cells:
            if cell.status == "ok" and cell.error_csv:
                out = cell.error_csv.replace("error_", "plot_").replace(".csv", ".svg")
                emit_plot(cell.error_csv, cell.estimate_csv or None, out)
    return report


def _read_csv(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    return data


def emit_plot(error_csv: str, estimate_csv: str | None, out_path: str,
              panels=((0.0, 50.0), None), log_envelope: bool = False):
    """Static two-panel plot: measured error, leading-term estimate (dashed)
    and full estimate (solid).  ``panels`` gives the time windows; None means
    the full range.  With ``log_envelope`` a log-log peak plot with the
    fitted slope is added."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    err = _read_csv(error_csv)
    est = _read_csv(estimate_csv) if estimate_csv else None
    if est is not None and (est["t"].shape != err["t"].shape or not np.allclose(est["t"], err["t"])):
        warnings.warn("estimate and error CSVs use different time grids; resampling")
        est1 = np.interp(err["t"], est["t"], est["est1"])
        lead = np.interp(err["t"], est["t"], est["est1_leading_only"])
    elif est is not None:
        est1, lead = est["est1"], est["est1_leading_only"]

    ncols = len(panels) + (1 if log_envelope else 0)
    fig, axes = plt.subplots(1, ncols, figsize=(6 * ncols, 4))
    axes = np.atleast_1d(axes)
    for ax, window in zip(axes, panels):
        lo, hi = window if window else (err["t"][0], err["t"][-1])
        m = (err["t"] >= lo) & (err["t"] <= hi)
        ax.plot(err["t"][m], err["err1"][m], lw=0.4, color="0.4", label="measured error")
        if est is not None:
            ax.plot(err["t"][m], lead[m], "--", color="tab:orange", label="leading-term estimate")
            ax.plot(err["t"][m], est1[m], "-", color="tab:red", lw=1.0, label="full estimate")
        ax.set_xlabel("t")
        ax.set_ylabel("first-component error")
        ax.legend(loc="upper left", fontsize=8)
    if log_envelope:
        ax = axes[-1]
        pk_t, pk_v = peak_envelope(err["t"], err["err1"])
        keep = pk_t > max(1.0, err["t"][0])
        ax.loglog(pk_t[keep], pk_v[keep], ".", ms=2)
        if keep.sum() >= 10:
            fit = envelope_fit(err["t"], err["err1"], (pk_t[keep][0], pk_t[keep][-1]))
            ax.loglog(pk_t[keep], fit.amplitude * pk_t[keep] ** fit.exponent, "-",
                      label=f"slope {fit.exponent:.3f}")
            ax.legend(fontsize=8)
        ax.set_xlabel("t")
        ax.set_ylabel("error peaks")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path
