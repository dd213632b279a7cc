"""Experiment orchestration behind the command-line subcommands.

Every command works on a run directory: a manifest is written when the
command starts and finalized when it ends, next to the CSV data and figures.
"""

from __future__ import annotations

import configparser
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__, analysis, plotting
from .config import RunConfig
from .errors import ConfigurationError, ConstantsTooLargeError, InsufficientDecayError, StructuralError
from .functionals import (FunctionalMonitor, FunctionalParams, Regime, check_certificate,
                          gronwall_diagnostic, params_monotone, params_nondegenerate,
                          params_taylor)
from .grid import Grid, build_grid
from .shear import (ValidationReport, equivalence_constant, validate_monotone,
                    validate_nondegenerate, validate_taylor)
from .solver import TrajectoryRecord, energy_residual, simulate

RATES_COLUMNS = ("nu", "k", "delta_hat", "r_squared", "window_lo", "window_hi")
SPECTRAL_COLUMNS = ("eps", "n", "constant", "converged")


class ValidationFailed(StructuralError):
    def __init__(self, report: ValidationReport):
        super().__init__("; ".join(report.failures) or f"{report.regime} validation failed")
        self.report = report


# -- manifest ---------------------------------------------------------------------

class Manifest:
    """Key-value record of a run, rewritten at start and at finish."""

    def __init__(self, path: Path, command: str, cfg: Optional[RunConfig] = None,
                 force: bool = False):
        self.path = Path(path)
        self.parser = configparser.ConfigParser(interpolation=None)
        self.parser.optionxform = str
        self.started = time.time()
        self.set("manifest", command=command, status="running", version=__version__,
                 force=str(bool(force)).lower(),
                 started=time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(self.started)))
        if cfg is not None:
            for section in cfg.parser.sections():
                self.set(f"config.{section}", **dict(cfg.parser.items(section)))
        self.write()

    def set(self, section: str, **values):
        if not self.parser.has_section(section):
            self.parser.add_section(section)
        for key, value in values.items():
            if isinstance(value, float):
                value = repr(value)
            self.parser.set(section, key, str(value))

    def write(self):
        with open(self.path, "w") as fh:
            self.parser.write(fh)

    def finalize(self, status: str, files=()):
        self.set("manifest", status=status, wall_clock_s=round(time.time() - self.started, 3))
        inventory = {}
        for f in files:
            p = Path(f)
            if p.exists():
                inventory[p.name] = f"{p.stat().st_size} bytes"
        if inventory:
            self.set("files", **inventory)
        self.write()

    @staticmethod
    def read(path) -> configparser.ConfigParser:
        p = configparser.ConfigParser(interpolation=None)
        p.optionxform = str
        if not p.read(path):
            raise ConfigurationError(f"cannot read manifest {path}")
        return p


# -- validation and parameters -------------------------------------------------------

@dataclass
class Prepared:
    cfg: RunConfig
    grid: Grid
    flow: object
    reference: object
    report: ValidationReport
    params: Optional[FunctionalParams] = None
    params_status: str = "not_computed"
    extras: Dict[str, float] = field(default_factory=dict)


def validate(cfg: RunConfig) -> Prepared:
    grid = cfg.grid()
    flow = cfg.flow()
    ref = cfg.reference()
    vp = cfg.validation_params()
    extras: Dict[str, float] = {}
    if cfg.regime is Regime.MONOTONE:
        report = validate_monotone(flow, vp, grid)
    elif cfg.regime is Regime.NONDEGENERATE:
        report = validate_nondegenerate(flow, ref, vp, grid, nu=cfg.nu)
        if report.passed:
            eq = equivalence_constant(flow, ref, grid, vp.times(), g0_floor=vp.g0)
            extras["c_star_sampled"] = eq.sampled
            extras["c_star_with_g0_floor"] = eq.value
            report.measured["c_star_sampled"] = eq.sampled
    else:
        report = validate_taylor(flow, vp, grid, nu=cfg.nu)
        gate = abs(cfg.k) <= cfg.nu * (1 + 1e-12)
        report.checks["taylor_wavenumber_gate"] = gate
        report.measured["k_over_nu"] = abs(cfg.k) / cfg.nu
        if not gate:
            report.failures.append(f"|k| = {abs(cfg.k):.4g} exceeds nu = {cfg.nu:.4g}")
            report.passed = False
    return Prepared(cfg, grid, flow, ref, report, extras=extras)


def derive_params(prep: Prepared, force: bool = False) -> Prepared:
    """Attach the regime's functional parameters, recording why they are missing."""
    cfg, report = prep.cfg, prep.report
    if not report.passed and not force:
        prep.params_status = "validation_failed"
        return prep
    try:
        if cfg.regime is Regime.MONOTONE:
            prep.params = params_monotone(prep.flow, report, force=force)
        elif cfg.regime is Regime.NONDEGENERATE:
            c_star = cfg.getfloat("functional", "c_star")
            if c_star is None:
                c_star = prep.extras.get("c_star_sampled")
            if c_star is None:
                eq = equivalence_constant(prep.flow, prep.reference, prep.grid,
                                          cfg.validation_params().times())
                c_star = eq.sampled
            g_spec = cfg.getfloat("functional", "g_spec")
            if g_spec is None:
                est = analysis.spectral_constant_torus(prep.reference, 0.0, cfg.nu / abs(cfg.k),
                                                       prep.grid, check_refinement=False)
                g_spec = est.constant
                prep.extras["g_spec_raw"] = est.raw
            prep.params = params_nondegenerate(c_star, g_spec,
                                               report.measured["sup_abs_dyyU"],
                                               validated=report.passed)
        else:
            c_spec = cfg.getfloat("functional", "c_spec")
            if c_spec is None:
                est = analysis.spectral_constant_channel(prep.flow, 0.0, prep.grid,
                                                         check_refinement=False)
                c_spec = est.constant
                prep.extras["c_spec_raw"] = est.raw
            prep.params = params_taylor(report, c_spec, cfg.getfloat("functional", "c0", 4.0),
                                        force=force)
        prep.params_status = "ok" if report.passed else "forced"
    except ConstantsTooLargeError as exc:
        prep.params_status = "constants_too_large"
        prep.extras["params_error"] = str(exc)
    return prep


def _write_validation(out: Path, report: ValidationReport) -> List[Path]:
    txt, js = out / "validation.txt", out / "validation.json"
    txt.write_text(report.to_text())
    js.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return [txt, js]


def cmd_validate(cfg: RunConfig, out) -> ValidationReport:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest(out / "manifest.ini", "validate", cfg)
    prep = validate(cfg)
    files = _write_validation(out, prep.report)
    man.set("validation", passed=str(prep.report.passed).lower(),
            **{k: v for k, v in prep.report.measured.items()})
    man.finalize("passed" if prep.report.passed else "validation_failed", files)
    return prep.report


# -- simulation -----------------------------------------------------------------------

@dataclass
class SimulationResult:
    out: Path
    record: TrajectoryRecord
    report: ValidationReport
    params: Optional[FunctionalParams]
    summary: Dict[str, object]


def cmd_simulate(cfg: RunConfig, out, force: bool = False, gate: bool = True,
                 plots: bool = True) -> SimulationResult:
    """Validate, simulate and evaluate certificates for one configuration.

    With ``gate`` (the default) a failed validation stops the run unless
    ``force`` is set.  Sweeps call this with ``gate=False``: the trajectory is
    still produced for rate measurement, but no certificate is evaluated.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest(out / "manifest.ini", "simulate", cfg, force)
    files = []
    try:
        prep = validate(cfg)
        files += _write_validation(out, prep.report)
        man.set("validation", passed=str(prep.report.passed).lower(),
                **{k: v for k, v in prep.report.measured.items()})
        man.write()
        if not prep.report.passed and gate and not force:
            raise ValidationFailed(prep.report)
        derive_params(prep, force=force)
        man.set("params", status=prep.params_status)
        if prep.params is not None:
            man.set("params", **{k: v for k, v in prep.params.to_dict().items()
                                 if not isinstance(v, dict) and v is not None})
        for key, value in prep.extras.items():
            man.set("params", **{key: value})
        man.write()

        sim = cfg.sim_config()
        initial = cfg.initial(prep.grid)
        monitor = None
        if prep.params is not None:
            monitor = FunctionalMonitor(prep.grid, cfg.k, cfg.nu, prep.params,
                                        prep.flow, prep.reference)
        record = simulate(prep.grid, initial, prep.flow, cfg.k, cfg.nu, cfg.sigma, sim,
                          monitor=monitor)
        csv_path = out / "trajectory.csv"
        record.to_csv(csv_path)
        files.append(csv_path)

        summary: Dict[str, object] = {
            "dt": sim.dt, "t_end": sim.t_end, "samples": len(record),
            "final_l2": float(record.l2[-1]), "t_sat": cfg.t_sat,
            "params_status": prep.params_status,
        }
        if len(record) >= 3:
            summary["energy_residual"] = energy_residual(record, cfg.nu, cfg.k, cfg.sigma)
        if prep.params is not None:
            tol = cfg.getfloat("functional", "cert_tol", 1e-6)
            cert = check_certificate(record, prep.params, cfg.nu, cfg.k, tol=tol)
            summary.update(certificate_max_margin=cert.max_margin,
                           certificate_pass=str(cert.passed).lower(),
                           certificate_best_prefactor=cert.best_prefactor,
                           certificate_tol=tol)
            if prep.params.validated:
                g = gronwall_diagnostic(record, prep.params, cfg.nu, cfg.k)
                summary.update(gronwall_max_violation=g.max_violation,
                               gronwall_checked=g.n_checked)
        try:
            fit = analysis.fit_decay_rate(record, cfg.window_policy(), cfg.t_sat)
            summary.update(delta_hat=fit.delta_hat, r_squared=fit.r_squared,
                           window_lo=fit.window[0], window_hi=fit.window[1],
                           fit_efolds=fit.efolds)
        except InsufficientDecayError as exc:
            summary["fit_status"] = f"insufficient decay: {exc}"
        man.set("results", **summary)
        if plots:
            files.append(plotting.plot_trajectory(
                record, out / "trajectory.svg", f"{cfg.regime.value}: nu={cfg.nu:g}, k={cfg.k:g}",
                cfg.t_sat))
        man.finalize("complete", files)
        return SimulationResult(out, record, prep.report, prep.params, summary)
    except ValidationFailed:
        man.finalize("validation_failed", files)
        raise
    except Exception as exc:
        man.set("manifest", error=f"{type(exc).__name__}: {exc}")
        man.finalize("failed", files)
        raise


# -- sweeps ------------------------------------------------------------------------------

def _sweep_point(args):
    text, source, axis, value, point_dir, force, plots = args
    cfg = RunConfig.from_string(text, source)
    cfg = cfg.with_overrides(**{f"physics.{axis}": float(value)})
    row = {"nu": cfg.nu, "k": cfg.k, "axis_value": float(value), "status": "ok",
           "delta_hat": math.nan, "r_squared": math.nan, "window_lo": math.nan,
           "window_hi": math.nan}
    try:
        res = cmd_simulate(cfg, point_dir, force=force, gate=False, plots=plots)
    except InsufficientDecayError as exc:
        row["status"] = f"insufficient decay: {exc}"
        return row
    s = res.summary
    if "delta_hat" in s:
        for key in ("delta_hat", "r_squared", "window_lo", "window_hi"):
            row[key] = s[key]
    else:
        row["status"] = s.get("fit_status", "no fit")
    row["params_status"] = s["params_status"]
    row["validation_passed"] = res.report.passed
    for key in ("certificate_max_margin", "certificate_pass", "gronwall_max_violation"):
        if key in s:
            row[key] = s[key]
    return row


@dataclass
class SweepResult:
    out: Path
    rows: List[dict]
    p_hat: float
    prefactors: Optional[np.ndarray]


def _threads(n_points: int) -> int:
    env = os.environ.get("SHEARLAB_THREADS")
    cap = int(env) if env and env.isdigit() and int(env) > 0 else (os.cpu_count() or 1)
    return max(1, min(cap, n_points))


def cmd_sweep(cfg: RunConfig, out, force: bool = False, plots: bool = True) -> SweepResult:
    axis, values = cfg.sweep_axis()
    if len(values) < 4:
        raise ConfigurationError("a sweep needs at least 4 axis points")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest(out / "manifest.ini", "sweep", cfg, force)
    values = sorted(values)
    jobs = [(cfg.to_text(), cfg.source, axis, v, str(out / f"point_{i:02d}"), force, plots)
            for i, v in enumerate(values)]
    workers = _threads(len(jobs))
    if workers == 1:
        rows = [_sweep_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    rows.sort(key=lambda r: r["axis_value"])

    rates = out / "rates.csv"
    with open(rates, "w") as fh:
        fh.write(",".join(RATES_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join("%.17e" % r[c] for c in RATES_COLUMNS) + "\n")
    files = [rates]

    good = [r for r in rows if math.isfinite(r["delta_hat"]) and r["delta_hat"] > 0]
    p_hat, pref = math.nan, None
    summary = {"axis": axis, "points": len(rows), "survivors": len(good), "workers": workers}
    if len(good) >= 4:
        fit = analysis.scaling_exponent([(r["axis_value"], r["delta_hat"]) for r in good])
        p_hat, pref = fit.p_hat, fit.prefactors
        summary.update(p_hat=p_hat, scaling_r_squared=fit.r_squared)
        if plots:
            files.append(plotting.plot_sweep([r["axis_value"] for r in good],
                                             [r["delta_hat"] for r in good], p_hat,
                                             float(np.exp(np.mean(np.log(pref)))),
                                             out / "sweep.svg",
                                             r"$\nu$" if axis == "nu" else "$k$"))
    else:
        summary["p_hat"] = "unavailable: fewer than 4 points with a rate"
    for i, r in enumerate(rows):
        scale = {Regime.MONOTONE: r["nu"] ** (1 / 3) * abs(r["k"]) ** (2 / 3),
                 Regime.NONDEGENERATE: (r["nu"] * abs(r["k"])) ** 0.5,
                 Regime.TAYLOR: r["k"] ** 2 / r["nu"]}[cfg.regime]
        r["normalized_rate"] = r["delta_hat"] / scale
        man.set(f"point_{i:02d}", **{k: v for k, v in r.items()})
    man.set("results", **summary)
    lines = [f"{axis}={r['axis_value']:.6g}  delta_hat={r['delta_hat']:.6g}  "
             f"normalized={r['normalized_rate']:.6g}  status={r['status']}  "
             f"certificate={r.get('certificate_pass', 'n/a')}" for r in rows]
    lines.append(f"p_hat = {p_hat}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    files.append(out / "summary.txt")
    man.finalize("complete", files)
    return SweepResult(out, rows, p_hat, pref)


# -- spectral constants ----------------------------------------------------------------------

@dataclass
class SpectralResult:
    out: Path
    estimates: List[analysis.SpectralEstimate]
    checks: List[analysis.SpectralCheck]


def cmd_spectral(cfg: RunConfig, out, plots: bool = True) -> SpectralResult:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest(out / "manifest.ini", "spectral", cfg)
    n = int(cfg.getfloat("spectral", "n", cfg.getfloat("domain", "n")))
    t = cfg.getfloat("spectral", "t", 0.0)
    grid = build_grid(cfg.kind, n, cfg.getfloat("domain", "half_width"), cfg.get("domain", "scheme"))
    seed = int(cfg.getfloat("spectral", "seed", analysis.DEFAULT_SEED))
    estimates, checks = [], []
    if cfg.regime is Regime.NONDEGENERATE:
        U = cfg.reference()
        for eps in cfg.spectral_eps():
            est = analysis.spectral_constant_torus(U, t, eps, grid)
            estimates.append(est)
            checks.append(analysis.verify_spectral(est, U, t, grid, seed=seed))
    elif cfg.regime is Regime.TAYLOR:
        V = cfg.flow()
        est = analysis.spectral_constant_channel(V, t, grid)
        estimates.append(est)
        checks.append(analysis.verify_spectral(est, V, t, grid, seed=seed))
    else:
        raise ConfigurationError("spectral constants are defined for the nondegenerate "
                                 "and Taylor regimes")
    path = out / "spectral.csv"
    with open(path, "w") as fh:
        fh.write(",".join(SPECTRAL_COLUMNS) + "\n")
        for e in estimates:
            eps = e.eps if e.eps is not None else math.nan
            fh.write("%.17e,%d,%.17e,%s\n" % (eps, e.grid_n, e.constant, str(e.converged).lower()))
    files = [path]
    for i, (e, c) in enumerate(zip(estimates, checks)):
        man.set(f"estimate_{i}", eps=e.eps if e.eps is not None else "none", raw=e.raw,
                constant=e.constant, refined=e.refined, converged=str(e.converged).lower(),
                random_fields=c.n_fields, violations=c.violations, seed=c.seed)
    if plots and len(estimates) > 1:
        files.append(plotting.plot_spectral([e.eps for e in estimates],
                                            [e.raw for e in estimates], out / "spectral.svg"))
    man.finalize("complete", files)
    return SpectralResult(out, estimates, checks)


# -- refit -------------------------------------------------------------------------------------

def cmd_fit(run_dir, policy: Optional[analysis.WindowPolicy] = None) -> analysis.RateFit:
    """Re-fit the decay rate of an existing run without re-simulating."""
    run_dir = Path(run_dir)
    csv_path = run_dir / "trajectory.csv"
    if not csv_path.exists():
        raise ConfigurationError(f"no trajectory.csv in {run_dir}")
    record = TrajectoryRecord.read_csv(csv_path)
    t_sat = 0.0
    man_path = run_dir / "manifest.ini"
    if man_path.exists():
        m = Manifest.read(man_path)
        if m.has_option("results", "t_sat"):
            t_sat = float(m.get("results", "t_sat"))
        if policy is None and m.has_section("config.fit"):
            cfg_fit = dict(m.items("config.fit"))
            f = lambda key: float(cfg_fit[key]) if key in cfg_fit else None
            policy = analysis.WindowPolicy(lo=f("lo"), hi=f("hi"),
                                           lo_sat=f("lo_sat") if f("lo_sat") is not None else 1.0,
                                           hi_sat=f("hi_sat"),
                                           floor_rel=f("floor_rel") or 1e-6,
                                           floor_abs=f("floor_abs") or 1e-10)
    fit = analysis.fit_decay_rate(record, policy, t_sat)
    (run_dir / "fit.txt").write_text(
        f"delta_hat = {fit.delta_hat!r}\nr_squared = {fit.r_squared!r}\n"
        f"window_lo = {fit.window[0]!r}\nwindow_hi = {fit.window[1]!r}\n"
        f"residual_max = {fit.residual_max!r}\nsamples = {fit.n_samples}\n")
    return fit
