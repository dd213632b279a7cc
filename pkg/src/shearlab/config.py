"""Run configuration: sectioned INI text parsed into the objects a run needs.

Example::

    [run]
    regime = monotone
    seed = 0

    [domain]
    kind = truncated_line
    n = 2049
    half_width = 8

    [flow]
    family = perturbed_monotone
    a = 0.1

    [physics]
    nu = 1e-4
    k = 1

    [initial]
    preset = gaussian_bump
    width = 1

    [time]
    t_end_sat = 6
    sample_every = 10
"""

from __future__ import annotations

import configparser
import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import analysis
from .errors import ConfigurationError, DataError
from .functionals import Regime, saturation_time
from .grid import DomainKind, Grid, build_grid
from .shear import FlowValidationParams, ShearFlow, builtin_flow
from .solver import Scheme, SimConfig, default_dt

ALLOWED_DOMAINS = {
    Regime.MONOTONE: {DomainKind.TRUNCATED_LINE, DomainKind.TORUS},
    Regime.NONDEGENERATE: {DomainKind.TORUS},
    Regime.TAYLOR: {DomainKind.CHANNEL},
}

_FLOW_NUMERIC = ("a", "omega", "nu", "amplitude", "phase")


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


class RunConfig:
    """Parsed run configuration.  The source text is kept for the manifest."""

    def __init__(self, parser: configparser.ConfigParser, source: str = "<string>"):
        self.parser = parser
        self.source = source
        try:
            self.regime = Regime(self.get("run", "regime", "monotone").lower())
        except ValueError as exc:
            raise ConfigurationError(f"unknown regime: {exc}") from exc
        self.kind = self._domain_kind()
        if self.kind not in ALLOWED_DOMAINS[self.regime]:
            raise ConfigurationError(
                f"regime {self.regime.value} is not defined on a {self.kind.value} domain")
        self.nu = self.getfloat("physics", "nu")
        if self.nu is None or not self.nu > 0:
            raise ConfigurationError("[physics] nu must be a positive number")
        k = self.getfloat("physics", "k")
        ratio = self.getfloat("physics", "k_over_nu")
        if (k is None) == (ratio is None):
            raise ConfigurationError("give exactly one of [physics] k or k_over_nu")
        self.k = k if k is not None else ratio * self.nu
        if self.k == 0:
            raise ConfigurationError("k must be nonzero")
        self.sigma = int(self.getfloat("physics", "sigma", 0))
        if self.sigma not in (0, 1):
            raise ConfigurationError("sigma must be 0 or 1")
        self.seed = int(self.getfloat("run", "seed", 0))

    # -- construction ------------------------------------------------------

    @classmethod
    def from_string(cls, text: str, source: str = "<string>") -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigurationError(f"{source}: {exc}") from exc
        return cls(parser, source)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_string(text, str(path))

    def to_text(self) -> str:
        buf = io.StringIO()
        self.parser.write(buf)
        return buf.getvalue()

    def with_overrides(self, **overrides) -> "RunConfig":
        """Copy with ``section.key`` style overrides; ``None`` values are skipped."""
        p = configparser.ConfigParser(interpolation=None)
        p.optionxform = str
        p.read_string(self.to_text())
        for dotted, value in overrides.items():
            if value is None:
                continue
            section, key = dotted.split(".", 1)
            if not p.has_section(section):
                p.add_section(section)
            p.set(section, key, repr(value) if isinstance(value, float) else str(value))
            if dotted == "physics.k" and p.has_option("physics", "k_over_nu"):
                p.remove_option("physics", "k_over_nu")
            if dotted == "time.t_end" and p.has_option("time", "t_end_sat"):
                p.remove_option("time", "t_end_sat")
        return RunConfig(p, self.source)

    # -- raw access ----------------------------------------------------------

    def get(self, section: str, key: str, default=None):
        if self.parser.has_option(section, key):
            return self.parser.get(section, key).strip()
        return default

    def getfloat(self, section: str, key: str, default=None):
        raw = self.get(section, key)
        if raw is None or raw == "" or raw.lower() == "auto":
            return default
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigurationError(f"[{section}] {key} = {raw!r} is not a number") from exc

    def section(self, name: str) -> Dict[str, str]:
        return dict(self.parser.items(name)) if self.parser.has_section(name) else {}

    # -- derived objects -------------------------------------------------------

    def _domain_kind(self) -> DomainKind:
        default = {Regime.MONOTONE: "truncated_line", Regime.NONDEGENERATE: "torus",
                   Regime.TAYLOR: "channel"}[self.regime]
        try:
            return DomainKind(self.get("domain", "kind", default).lower())
        except ValueError as exc:
            raise ConfigurationError(f"unknown domain kind: {exc}") from exc

    def grid(self) -> Grid:
        n = self.getfloat("domain", "n")
        if n is None:
            raise ConfigurationError("[domain] n is required")
        return build_grid(self.kind, int(n), self.getfloat("domain", "half_width"),
                          self.get("domain", "scheme"))

    def _flow(self, section: str) -> ShearFlow:
        spec = self.section(section)
        family = spec.pop("family", None)
        if family is None:
            raise ConfigurationError(f"[{section}] family is required")
        params = {}
        for key, value in spec.items():
            if key == "path":
                params["path"] = value
            elif key in _FLOW_NUMERIC:
                params[key] = float(value)
            else:
                raise ConfigurationError(f"[{section}] unknown flow parameter {key!r}")
        if family == "decaying_sine" and "nu" not in params:
            params["nu"] = self.nu
        return builtin_flow(family, **params)

    def flow(self) -> ShearFlow:
        return self._flow("flow")

    def reference(self) -> Optional[ShearFlow]:
        if not self.parser.has_section("reference"):
            if self.regime is Regime.NONDEGENERATE:
                raise ConfigurationError("nondegenerate runs need a [reference] flow")
            return None
        return self._flow("reference")

    def initial(self, grid: Grid) -> np.ndarray:
        preset = self.get("initial", "preset", "gaussian_bump").lower()
        if preset == "gaussian_bump":
            c = self.getfloat("initial", "center", 0.0)
            w = self.getfloat("initial", "width", 1.0)
            eta = self.getfloat("initial", "carrier", 0.0)
            if not w > 0:
                raise ConfigurationError("gaussian width must be positive")
            if grid.kind is DomainKind.TORUS:
                return grid.sample(lambda y: np.exp(-(grid.distance(y, c) / w) ** 2 + 1j * eta * y))
            return grid.sample(lambda y: np.exp(-((y - c) / w) ** 2 + 1j * eta * y))
        if preset == "sine_mode":
            m = self.getfloat("initial", "m", 1.0)
            if grid.kind is DomainKind.TORUS:
                return grid.sample(lambda y: np.sin(m * y))
            return grid.sample(lambda y: np.sin(m * np.pi * (y - grid.lower) / grid.length))
        if preset == "zero":
            return np.zeros(grid.n, dtype=complex)
        if preset == "random":
            return analysis.random_field(grid, np.random.default_rng(self.seed))
        if preset == "custom":
            return self._custom_initial(grid)
        raise ConfigurationError(f"unknown initial preset {preset!r}")

    def _custom_initial(self, grid: Grid) -> np.ndarray:
        path = self.get("initial", "path")
        if path is None:
            raise ConfigurationError("custom initial data needs [initial] path")
        try:
            with open(path, newline="") as fh:
                rows = list(csv.DictReader(fh))
        except OSError as exc:
            raise ConfigurationError(f"cannot read initial data {path}: {exc}") from exc
        if not rows or "y" not in rows[0] or "re" not in rows[0]:
            raise DataError(f"{path}: expected columns y, re[, im]")
        y = np.array([float(r["y"]) for r in rows])
        re = np.array([float(r["re"]) for r in rows])
        im = np.array([float(r.get("im") or 0.0) for r in rows])
        order = np.argsort(y)
        vals = np.interp(grid.points, y[order], re[order], left=0, right=0) + \
            1j * np.interp(grid.points, y[order], im[order], left=0, right=0)
        if grid.dirichlet:
            vals[0] = vals[-1] = 0
        return vals

    @property
    def t_sat(self) -> float:
        return saturation_time(self.regime, self.nu, self.k)

    def sim_config(self) -> SimConfig:
        dt = self.getfloat("time", "dt")
        if dt is None:
            dt = default_dt(self.regime.value, self.nu, self.k)
        t_end = self.getfloat("time", "t_end")
        if t_end is None:
            mult = self.getfloat("time", "t_end_sat")
            if mult is None:
                raise ConfigurationError("give [time] t_end or t_end_sat")
            t_end = mult * self.t_sat
        # land exactly on t_end
        steps = max(1, int(math.ceil(t_end / dt - 1e-9)))
        dt = t_end / steps
        every = int(self.getfloat("time", "sample_every", 1))
        scheme = Scheme(self.get("time", "scheme", Scheme.STRANG_CN.value).lower())
        return SimConfig(dt=dt, t_end=t_end, sample_every=every, scheme=scheme)

    def validation_params(self) -> FlowValidationParams:
        v = self.section("validation")
        horizon = self.getfloat("validation", "T")
        if horizon is None:
            horizon = self.sim_config().t_end
        kwargs = {"T": horizon}
        for key in ("c", "g0", "g1", "r", "g2", "g3", "r0"):
            if key in v:
                kwargs[key] = float(v[key])
        for key in ("m0", "N", "time_samples"):
            if key in v:
                kwargs[key] = int(float(v[key]))
        return FlowValidationParams(**kwargs)

    def window_policy(self) -> analysis.WindowPolicy:
        f = lambda key: self.getfloat("fit", key)
        lo_sat = f("lo_sat")
        return analysis.WindowPolicy(
            lo=f("lo"), hi=f("hi"), lo_sat=1.0 if lo_sat is None else lo_sat,
            hi_sat=f("hi_sat"), floor_rel=f("floor_rel") or 1e-6,
            floor_abs=f("floor_abs") or 1e-10)

    def sweep_axis(self):
        axis = self.get("sweep", "axis", "nu").lower()
        if axis not in ("nu", "k"):
            raise ConfigurationError("[sweep] axis must be nu or k")
        values = _floats(self.get("sweep", "values", ""))
        return axis, values

    def spectral_eps(self) -> List[float]:
        raw = self.get("spectral", "eps")
        if raw is None or raw.lower() == "auto":
            return [self.nu / abs(self.k)]
        return _floats(raw)
