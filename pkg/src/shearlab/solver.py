"""Time integration of the single-wavenumber advection-diffusion equation

    d_t f = -i k V(t, y) f + nu d_yy f - sigma nu k^2 f

by operator splitting: the transport part is an exact pointwise phase
rotation, the diffusion part a Crank-Nicolson step.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Iterable, Optional, Sequence

import numpy as np
from scipy import fft as sfft
from scipy import linalg

from .errors import ConfigurationError, NumericalError, TruncationError
from .grid import (DomainKind, Grid, derivative, fourier_wavenumbers, from_sine_coefficients,
                   h1_seminorm, inner_product, l2_norm, sine_coefficients, sine_wavenumbers)
from .shear import ShearFlow

CSV_COLUMNS = ("t", "l2sq", "h1sq", "cross_term", "functional", "certificate_margin",
               "boundary_mass")
BOUNDARY_FRACTION = 0.02
BOUNDARY_MASS_TOL = 1e-8
# roundoff allowance relative to ||f0||, so fully decayed runs are not rejected
BOUNDARY_MASS_FLOOR = 1e-13


class Scheme(str, enum.Enum):
    STRANG_CN = "strang_cn"
    LIE_CN = "lie_cn"


@dataclass
class ModeState:
    grid: Grid
    field: np.ndarray
    k: float
    nu: float
    sigma: int = 0
    t: float = 0.0

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigurationError("nu must be positive")
        if self.k == 0:
            raise ConfigurationError("k must be nonzero; the x-average obeys the plain heat equation")
        if self.sigma not in (0, 1):
            raise ConfigurationError("sigma must be 0 or 1")
        if self.grid.kind is DomainKind.TORUS and float(self.k) != int(self.k):
            raise ConfigurationError("wavenumbers on the torus must be integers")
        self.field = self.grid.conform(self.field)


@dataclass(frozen=True)
class SimConfig:
    dt: float
    t_end: float
    sample_every: int = 1
    scheme: Scheme = Scheme.STRANG_CN

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.t_end < self.dt:
            raise ConfigurationError("t_end must be at least dt")
        if int(self.sample_every) != self.sample_every or self.sample_every < 1:
            raise ConfigurationError("sample_every must be a positive integer")
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    @property
    def n_steps(self) -> int:
        """Steps needed to reach t_end; the last sample may overshoot by < dt."""
        return int(math.ceil(self.t_end / self.dt - 1e-9))


def default_dt(regime: str, nu: float, k: float) -> float:
    """At least ten steps per predicted e-folding of the regime's decay."""
    k = abs(k)
    if regime == "monotone":
        return min(1e-2, 0.1 * nu ** (-1 / 3) * k ** (-2 / 3))
    if regime == "nondegenerate":
        return min(1e-2, 0.1 * nu ** (-1 / 2) * k ** (-1 / 2))
    if regime == "taylor":
        return min(1e-2, 0.1 * nu / k**2)
    if regime == "heat":
        return min(1e-2, 0.1 / (nu * (1 + k**2)))
    raise ConfigurationError(f"unknown regime {regime!r}")


# -- diffusion substep -------------------------------------------------------

class _Diffusion:
    """Crank-Nicolson propagator for nu d_yy - sigma nu k^2 over one step."""

    def __init__(self, grid: Grid, k: float, nu: float, sigma: int, dt: float):
        self.grid = grid
        shift = sigma * nu * k**2
        half = 0.5 * dt
        if grid.scheme == "fourier":
            lam = nu * fourier_wavenumbers(grid) ** 2 + shift
            self.mult = (1 - half * lam) / (1 + half * lam)
            self.apply = self._fourier
        elif grid.scheme == "sine":
            lam = nu * sine_wavenumbers(grid) ** 2 + shift
            self.mult = (1 - half * lam) / (1 + half * lam)
            self.apply = self._sine
        elif grid.scheme == "fd":
            m = grid.n - 2
            h2 = grid.spacing ** 2
            diag = -2 * nu / h2 - shift
            off = nu / h2
            self.rhs = (1 + half * diag, half * off)
            ab = np.zeros((3, m))
            ab[0, 1:] = -half * off
            ab[1, :] = 1 - half * diag
            ab[2, :-1] = -half * off
            self.ab = ab
            self.apply = self._fd
        else:
            idx = slice(1, grid.n - 1)
            A = nu * grid.cheb_d2[idx, idx] - shift * np.eye(grid.n - 2)
            eye = np.eye(grid.n - 2)
            self.B = eye + half * A
            self.lu = linalg.lu_factor(eye - half * A)
            self.apply = self._cheb

    def _fourier(self, f):
        return np.fft.ifft(self.mult * np.fft.fft(f))

    def _sine(self, f):
        return from_sine_coefficients(self.grid, self.mult * sine_coefficients(self.grid, f))

    def _fd(self, f):
        d, o = self.rhs
        u = f[1:-1]
        r = d * u
        r[1:] += o * u[:-1]
        r[:-1] += o * u[1:]
        out = np.zeros_like(f)
        try:
            out[1:-1] = linalg.solve_banded((1, 1), self.ab, r, check_finite=True)
        except (linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"tridiagonal diffusion solve failed: {exc}") from exc
        return out

    def _cheb(self, f):
        out = np.zeros_like(f)
        out[1:-1] = linalg.lu_solve(self.lu, self.B @ f[1:-1])
        if not np.all(np.isfinite(out)):
            raise NumericalError("Chebyshev diffusion solve produced non-finite values")
        return out


@lru_cache(maxsize=64)
def _diffusion(grid: Grid, k: float, nu: float, sigma: int, dt: float) -> _Diffusion:
    return _Diffusion(grid, k, nu, sigma, dt)


def phase_rotation(flow: ShearFlow, grid: Grid, f: np.ndarray, k: float, t: float,
                   tau: float) -> np.ndarray:
    """Exact transport over a substep of length tau with V frozen at time t."""
    return f * np.exp(-1j * k * tau * flow.eval(t, grid.points))


def step(state: ModeState, flow: ShearFlow, config: SimConfig) -> ModeState:
    """Advance ``state`` by one step of ``config.dt``; returns a new state."""
    f = _advance(state.grid, state.field, flow, state.k, state.nu, state.sigma,
                 state.t, config.dt, config.scheme)
    return ModeState(state.grid, f, state.k, state.nu, state.sigma, state.t + config.dt)


def _advance(grid, f, flow, k, nu, sigma, t, dt, scheme):
    diff = _diffusion(grid, float(k), float(nu), int(sigma), float(dt))
    if scheme is Scheme.STRANG_CN:
        f = phase_rotation(flow, grid, f, k, t + dt / 4, dt / 2)
        f = diff.apply(f)
        f = phase_rotation(flow, grid, f, k, t + 3 * dt / 4, dt / 2)
    else:
        f = phase_rotation(flow, grid, f, k, t + dt / 2, dt)
        f = diff.apply(f)
    if grid.dirichlet:
        f[0] = f[-1] = 0.0
    return f


# -- trajectories -------------------------------------------------------------

@dataclass
class TrajectoryRecord:
    columns: Dict[str, np.ndarray]
    metadata: Dict[str, object] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def __len__(self) -> int:
        return len(self.columns["t"])

    @property
    def t(self) -> np.ndarray:
        return self.columns["t"]

    @property
    def l2(self) -> np.ndarray:
        return np.sqrt(self.columns["l2sq"])

    def to_csv(self, path) -> None:
        data = np.column_stack([self.columns[c] for c in CSV_COLUMNS])
        with open(path, "w", newline="") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for row in data:
                fh.write(",".join("%.17e" % v for v in row) + "\n")

    @classmethod
    def read_csv(cls, path) -> "TrajectoryRecord":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != CSV_COLUMNS:
                raise ConfigurationError(f"{path}: unexpected trajectory header {header}")
            rows = [[float(v) for v in row] for row in reader if row]
        arr = np.array(rows, dtype=float).reshape(-1, len(CSV_COLUMNS))
        return cls({c: arr[:, i].copy() for i, c in enumerate(CSV_COLUMNS)})


def boundary_mass(grid: Grid, f: np.ndarray) -> float:
    """max |f| over the outer 2% of points at each end (zero off the truncated line)."""
    if grid.kind is not DomainKind.TRUNCATED_LINE:
        return 0.0
    m = max(2, int(math.ceil(BOUNDARY_FRACTION * grid.n)))
    return float(max(np.max(np.abs(f[:m])), np.max(np.abs(f[-m:]))))


def cross_term_plain(grid: Grid, f: np.ndarray, k: float) -> float:
    """Re <i sign(k) f, d_y f>."""
    return float(inner_product(grid, 1j * np.sign(k) * f, derivative(grid, f, 1)).real)


Observer = Callable[[float, np.ndarray], None]


def simulate(grid: Grid, initial, flow: ShearFlow, k: float, nu: float, sigma: int,
             config: SimConfig, monitor=None, observers: Iterable[Observer] = ()
             ) -> TrajectoryRecord:
    """Integrate from t = 0 to ``config.t_end``, sampling every ``sample_every`` steps.

    ``monitor`` (for example a functionals.FunctionalMonitor) supplies the
    cross term, functional value and certificate margin at each sample; it
    must provide ``observe(t, f) -> (cross, functional, margin)``.  Without
    a monitor the unweighted cross term is recorded and the functional
    columns are NaN.
    """
    state = ModeState(grid, initial, k, nu, sigma)
    f = state.field.copy()
    norm0 = l2_norm(grid, f)
    if grid.kind is DomainKind.TRUNCATED_LINE and boundary_mass(grid, f) > 1e-12 * max(norm0, 1e-300):
        raise TruncationError("initial data is not negligible near the ends of the truncated line")

    observers = tuple(observers)
    rows = []

    def record(t, f):
        l2sq = inner_product(grid, f, f).real
        h1 = h1_seminorm(grid, f)
        bm = boundary_mass(grid, f)
        limit = BOUNDARY_MASS_TOL * math.sqrt(max(l2sq, 0.0)) + BOUNDARY_MASS_FLOOR * norm0
        if bm > limit:
            raise TruncationError(
                f"boundary mass {bm:.3e} exceeds {BOUNDARY_MASS_TOL:g}*||f|| at t={t:.6g}; "
                "enlarge the truncated domain")
        if monitor is not None:
            cross, func, margin = monitor.observe(t, f)
        else:
            cross, func, margin = cross_term_plain(grid, f, k), math.nan, math.nan
        rows.append((t, l2sq, h1 * h1, cross, func, margin, bm))
        for obs in observers:
            obs(t, f)

    n_steps = config.n_steps
    record(0.0, f)
    for s in range(1, n_steps + 1):
        t_prev = (s - 1) * config.dt
        f = _advance(grid, f, flow, k, nu, sigma, t_prev, config.dt, config.scheme)
        if s % config.sample_every == 0 or s == n_steps:
            if not np.all(np.isfinite(f)):
                raise NumericalError(f"non-finite field at t={s * config.dt:.6g}")
            record(s * config.dt, f)

    arr = np.array(rows, dtype=float)
    meta = {"grid": grid.kind.value, "scheme": grid.scheme, "n": grid.n, "k": k, "nu": nu,
            "sigma": sigma, "dt": config.dt, "t_end": config.t_end,
            "sample_every": config.sample_every, "time_scheme": config.scheme.value,
            "flow": flow.name}
    return TrajectoryRecord({c: arr[:, i].copy() for i, c in enumerate(CSV_COLUMNS)}, meta)


def energy_residual(record: TrajectoryRecord, nu: float, k: float, sigma: int = 0) -> float:
    """Max relative mismatch of d/dt ||f||^2 against -2 nu ||f'||^2 - 2 nu sigma k^2 ||f||^2.

    The time derivative is a central difference over neighbouring samples.
    """
    t = record["t"]
    if len(t) < 3:
        raise ConfigurationError("energy residual needs at least 3 samples")
    l2sq, h1sq = record["l2sq"], record["h1sq"]
    ddt = (l2sq[2:] - l2sq[:-2]) / (t[2:] - t[:-2])
    dissipation = 2 * nu * h1sq[1:-1] + 2 * nu * sigma * k**2 * l2sq[1:-1]
    mask = dissipation > 0
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(ddt[mask] + dissipation[mask]) / dissipation[mask]))


# -- Couette oracle ------------------------------------------------------------

def couette_exact(grid: Grid, initial, k: float, nu: float, sigma: int, t: float,
                  chunk: int = 1024) -> np.ndarray:
    """Closed-form solution for V = y on the whole line, evaluated on ``grid``.

    The initial data is Fourier transformed by dense quadrature.  Each
    frequency xi is carried to xi - k t with amplitude
    exp(-nu (xi^2 t - xi k t^2 + k^2 t^3 / 3) - sigma nu k^2 t), and the result is
    transformed back by the same quadrature.  Independent of the time stepper.
    """
    if grid.kind is not DomainKind.TRUNCATED_LINE:
        raise ConfigurationError("the Couette oracle is defined on the truncated line")
    f0 = np.asarray(initial, dtype=complex)
    if t == 0:
        return f0.copy()
    y, w = np.asarray(grid.points), np.asarray(grid.quadrature_weights)
    dxi = np.pi / (4 * grid.half_width)
    xmax = np.pi / grid.spacing
    xi = np.arange(-math.floor(xmax / dxi), math.floor(xmax / dxi) + 1) * dxi
    out = np.zeros(grid.n, dtype=complex)
    wf = w * f0
    for s in range(0, xi.size, chunk):
        x = xi[s:s + chunk]
        fhat = np.exp(-1j * np.outer(x, y)) @ wf
        amp = np.exp(-nu * (x**2 * t - x * k * t**2 + k**2 * t**3 / 3) - sigma * nu * k**2 * t)
        out += np.exp(1j * np.outer(y, x - k * t)) @ (amp * fhat)
    out *= dxi / (2 * np.pi)
    if grid.dirichlet:
        out[0] = out[-1] = 0.0
    return out
