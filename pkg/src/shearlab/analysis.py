"""Decay-rate fits, scaling exponents, spectral-inequality constants and the
channel Poincare constant."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .errors import ConfigurationError, DataError, DegenerateFlowError, InsufficientDecayError
from .grid import (DomainKind, Grid, build_grid, h1_seminorm, inner_product,
                   stiffness_and_mass)
from .shear import ShearFlow

BISECT_LO, BISECT_HI = 1e-6, 1e6
BISECT_RTOL = 1e-4
DEFAULT_SEED = 20240611


# -- rate fits ------------------------------------------------------------------

@dataclass(frozen=True)
class WindowPolicy:
    """Fit window: absolute bounds ``lo``/``hi`` override the multiples of the
    saturation time ``lo_sat``/``hi_sat``.  The window always ends at the first
    sample where ||f|| falls below max(floor_abs, floor_rel ||f0||)."""

    lo: Optional[float] = None
    hi: Optional[float] = None
    lo_sat: float = 1.0
    hi_sat: Optional[float] = None
    floor_rel: float = 1e-6
    floor_abs: float = 1e-10

    def bounds(self, t_sat: float) -> Tuple[float, float]:
        lo = self.lo if self.lo is not None else self.lo_sat * t_sat
        hi = self.hi if self.hi is not None else (
            self.hi_sat * t_sat if self.hi_sat is not None else math.inf)
        return lo, hi


@dataclass
class RateFit:
    delta_hat: float
    window: Tuple[float, float]
    r_squared: float
    residual_max: float
    n_samples: int
    efolds: float


def fit_decay_rate(record, policy: Optional[WindowPolicy] = None,
                   t_sat: float = 0.0) -> RateFit:
    """Least-squares slope of log ||f(t)|| over the policy window."""
    policy = policy or WindowPolicy()
    t = np.asarray(record["t"], dtype=float)
    norm = np.sqrt(np.maximum(np.asarray(record["l2sq"], dtype=float), 0.0))
    if t.size == 0:
        raise InsufficientDecayError("empty record")
    lo, hi = policy.bounds(t_sat)
    floor = max(policy.floor_abs, policy.floor_rel * norm[0])
    below = np.nonzero(norm < floor)[0]
    if below.size:
        hi = min(hi, t[below[0]])
    mask = (t >= lo) & (t <= hi) & (norm > 0)
    n = int(np.count_nonzero(mask))
    if n < 10:
        raise InsufficientDecayError(f"only {n} samples in fit window [{lo:.4g}, {hi:.4g}]")
    ts, logs = t[mask], np.log(norm[mask])
    efolds = float(logs[0] - logs[-1])
    if efolds < 2.0:
        raise InsufficientDecayError(
            f"||f|| decays by {efolds:.3g} e-folds in [{ts[0]:.4g}, {ts[-1]:.4g}]; need 2")
    slope, intercept = np.polyfit(ts, logs, 1)
    fit = slope * ts + intercept
    ss_res = float(np.sum((logs - fit) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(-slope), (float(ts[0]), float(ts[-1])), max(r2, 0.0),
                   float(np.max(np.abs(logs - fit))), n, efolds)


@dataclass
class ScalingFit:
    p_hat: float
    prefactors: np.ndarray
    r_squared: float


def scaling_exponent(points: Sequence[Tuple[float, float]]) -> ScalingFit:
    """Slope of log(rate) against log(x) for points (x, rate), x = nu or k."""
    pts = sorted((float(x), float(r)) for x, r in points)
    if len(pts) < 4:
        raise ConfigurationError("scaling fit needs at least 4 points")
    x = np.array([p[0] for p in pts])
    r = np.array([p[1] for p in pts])
    if np.any(x <= 0) or np.any(r <= 0):
        raise DataError("scaling fit needs positive axis values and rates")
    if math.log10(x.max() / x.min()) < 2 - 1e-9:
        raise ConfigurationError("scaling fit needs points spanning at least 2 decades")
    lx, lr = np.log(x), np.log(r)
    p, c = np.polyfit(lx, lr, 1)
    res = lr - (p * lx + c)
    ss_tot = float(np.sum((lr - lr.mean()) ** 2))
    r2 = 1 - float(np.sum(res**2)) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(float(p), r / x**p, r2)


# -- spectral constants ---------------------------------------------------------

@dataclass
class SpectralEstimate:
    constant: float         # max(raw, 1)
    raw: float
    eps: Optional[float]
    grid_n: int
    converged: bool
    refined: float          # raw constant on the doubled grid
    lambda_at: float        # ground energy at the returned constant
    lambda_below: float     # ground energy at constant * (1 - 1e-3)
    target: float


def _ground(Kq, P, M, C, a):
    """Lowest generalised eigenvalue of a*K + C*P against M."""
    A = a * Kq + C * P
    return float(linalg.eigh(A, M, eigvals_only=True, subset_by_index=[0, 0])[0])


def _bisect(Kq, P, M, a_of_C, target) -> float:
    lam = lambda C: _ground(Kq, P, M, C, a_of_C(C))
    lo, hi = BISECT_LO, BISECT_HI
    if lam(lo) >= target:
        return lo
    if lam(hi) < target:
        raise DegenerateFlowError(
            f"ground energy stays below {target:.4g} even at C = {BISECT_HI:g}")
    while hi / lo - 1 > BISECT_RTOL:
        mid = math.sqrt(lo * hi)
        if lam(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def _forms(grid: Grid, flow: ShearFlow, t: float):
    K, M, idx = stiffness_and_mass(grid)
    d = np.asarray(flow.d_y(t, grid.points), dtype=float)[idx]
    P = np.diag(np.diag(M) * d**2)
    return K, M, P


def _refine(grid: Grid) -> Grid:
    if grid.kind is DomainKind.TORUS:
        return build_grid(grid.kind, 2 * grid.n, scheme=grid.scheme)
    return build_grid(grid.kind, 2 * (grid.n - 1) + 1, half_width=grid.half_width,
                      scheme=grid.scheme)


def _torus_raw(U, t, eps, grid):
    K, M, P = _forms(grid, U, t)
    target = math.sqrt(eps)
    C = _bisect(K, P, M, lambda C: eps, target)
    return C, _ground(K, P, M, C, eps), _ground(K, P, M, C * (1 - 1e-3), eps), target


def spectral_constant_torus(U: ShearFlow, t: float, eps: float, grid: Grid,
                            check_refinement: bool = True) -> SpectralEstimate:
    """Smallest C with eps^(1/2)||f||^2 <= eps||f'||^2 + C||U' f||^2 on the grid."""
    if grid.kind is not DomainKind.TORUS:
        raise ConfigurationError("torus spectral constant needs a torus grid")
    if not eps > 0:
        raise ConfigurationError("eps must be positive")
    C, la, lb, target = _torus_raw(U, t, eps, grid)
    refined, converged = math.nan, False
    if check_refinement:
        refined = _torus_raw(U, t, eps, _refine(grid))[0]
        converged = abs(refined - C) < 0.01 * C
    return SpectralEstimate(max(C, 1.0), C, eps, grid.n, converged, refined, la, lb, target)


def _channel_raw(V, t, grid):
    K, M, P = _forms(grid, V, t)
    # C(||f'||^2 + ||V' f||^2) >= ||f||^2  <=>  ground energy of C(K + P) >= 1
    KP = K + P
    C = _bisect(KP, np.zeros_like(P), M, lambda C: C, 1.0)
    return C, _ground(KP, 0 * P, M, 0.0, C), _ground(KP, 0 * P, M, 0.0, C * (1 - 1e-3)), 1.0


def spectral_constant_channel(V: ShearFlow, t: float, grid: Grid,
                              check_refinement: bool = True) -> SpectralEstimate:
    """Smallest C with ||f||^2 <= C||f'||^2 + C||V' f||^2 on H^1_0(-1, 1)."""
    if grid.kind is not DomainKind.CHANNEL:
        raise ConfigurationError("channel spectral constant needs a channel grid")
    C, la, lb, target = _channel_raw(V, t, grid)
    refined, converged = math.nan, False
    if check_refinement:
        refined = _channel_raw(V, t, _refine(grid))[0]
        converged = abs(refined - C) < 0.01 * C
    return SpectralEstimate(max(C, 1.0), C, None, grid.n, converged, refined, la, lb, target)


def poincare_constant(grid: Grid) -> float:
    """1/sqrt of the lowest Dirichlet eigenvalue of -d_yy on the channel."""
    if grid.kind is not DomainKind.CHANNEL:
        raise ConfigurationError("Poincare constant is computed on the channel")
    if grid.scheme == "chebyshev":
        inner = slice(1, grid.n - 1)
        ev = linalg.eigvals(-grid.cheb_d2[inner, inner])
        lam = float(np.min(ev.real))
    else:
        K, M, _ = stiffness_and_mass(grid)
        lam = float(linalg.eigh(K, M, eigvals_only=True, subset_by_index=[0, 0])[0])
    return 1.0 / math.sqrt(lam)


# -- random admissible fields ---------------------------------------------------

def random_field(grid: Grid, rng: np.random.Generator) -> np.ndarray:
    """A pseudo-random smooth complex field admissible on ``grid``.

    Alternates between random spectral series with a random decay slope and
    localized wave packets at random positions.
    """
    y = np.asarray(grid.points)
    if rng.random() < 0.5:
        modes = max(4, min(grid.n // 4, 64))
        slope = rng.uniform(0.0, 2.0)
        coef = (rng.standard_normal(modes) + 1j * rng.standard_normal(modes))
        if grid.kind is DomainKind.TORUS:
            m = np.arange(modes) - modes // 2
            coef = coef / (1 + np.abs(m)) ** slope
            f = np.exp(1j * np.outer(y, m)) @ coef
        else:
            j = np.arange(1, modes + 1)
            coef = coef / j**slope
            s = (y - grid.lower) / grid.length
            f = np.sin(np.pi * np.outer(s, j)) @ coef
    else:
        half = grid.length / 2
        centre = rng.uniform(grid.lower + 0.2 * half, grid.lower + 1.8 * half)
        width = rng.uniform(0.05, 0.5) * (half if grid.kind is not DomainKind.TRUNCATED_LINE else 1.0)
        carrier = rng.uniform(-8, 8)
        dist = grid.distance(y, centre) if grid.kind is DomainKind.TORUS else y - centre
        f = np.exp(-(dist / width) ** 2 + 1j * carrier * y)
        f = f * (rng.standard_normal() + 1j * rng.standard_normal())
        if grid.dirichlet:
            s = (y - grid.lower) / grid.length
            f = f * np.sin(np.pi * s)
    f = np.asarray(f, dtype=complex)
    if grid.dirichlet:
        f[0] = f[-1] = 0.0
    return f


@dataclass
class SpectralCheck:
    n_fields: int
    violations: int
    worst_slack: float
    seed: int


def verify_spectral(estimate: SpectralEstimate, flow: ShearFlow, t: float, grid: Grid,
                    n_fields: int = 100, seed: int = DEFAULT_SEED) -> SpectralCheck:
    """Check the spectral inequality with the returned constant on seeded random fields."""
    rng = np.random.default_rng(seed)
    d = np.asarray(flow.d_y(t, grid.points), dtype=float)
    C = estimate.constant
    worst, bad = math.inf, 0
    for _ in range(n_fields):
        f = random_field(grid, rng)
        l2 = inner_product(grid, f, f).real
        h1 = h1_seminorm(grid, f) ** 2
        pot = inner_product(grid, d * f, d * f).real
        if estimate.eps is not None:
            lhs, rhs = math.sqrt(estimate.eps) * l2, estimate.eps * h1 + C * pot
        else:
            lhs, rhs = l2, C * (h1 + pot)
        slack = (rhs - lhs) / max(rhs, lhs, 1e-300)
        worst = min(worst, slack)
        if slack < -1e-12:
            bad += 1
    return SpectralCheck(n_fields, bad, worst, seed)
