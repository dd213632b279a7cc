"""Time-dependent shear profiles, critical points and structural validators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import interpolate, optimize

from .errors import ConfigurationError, DataError, DegenerateFlowError, StructuralError
from .grid import DomainKind, Grid

ROOT_TOL = 1e-10
MATCH_TOL = 1e-8
TRACK_RADIUS = 0.2
DEFAULT_TIME_SAMPLES = 201

Profile = Callable[[float, np.ndarray], np.ndarray]


def _zero(t, y):
    return np.zeros_like(np.asarray(y, dtype=float))


@dataclass(frozen=True)
class ShearFlow:
    """A shear profile V(t, y) with its derivatives.

    All callables take a scalar time and an array of y values.
    """

    eval: Profile
    d_y: Profile
    d_yy: Profile
    d_ty: Profile = _zero
    name: str = "custom"
    family_params: Dict[str, float] = field(default_factory=dict)
    tabulated: bool = False

    @property
    def consistency_tol(self) -> float:
        return 1e-4 if self.tabulated else 1e-6


def builtin_flow(family: str, **params) -> ShearFlow:
    """Analytic shear families.

    ``couette``             V = y
    ``perturbed_monotone``  V = y + a sin(omega t) sin(y)   (a=0.1, omega=1)
    ``decaying_sine``       V = A exp(-nu t) sin(y)          (nu required)
    ``static_sine``         V = A sin(y + phase)
    ``parabola``            V = 1 - y^2
    ``zero``                V = 0
    """
    family = family.lower()
    if family == "couette":
        return ShearFlow(
            eval=lambda t, y: np.asarray(y, dtype=float) * 1.0,
            d_y=lambda t, y: np.ones_like(np.asarray(y, dtype=float)),
            d_yy=_zero, d_ty=_zero, name=family)

    if family == "perturbed_monotone":
        a = float(params.get("a", 0.1))
        w = float(params.get("omega", 1.0))
        return ShearFlow(
            eval=lambda t, y: y + a * math.sin(w * t) * np.sin(y),
            d_y=lambda t, y: 1.0 + a * math.sin(w * t) * np.cos(y),
            d_yy=lambda t, y: -a * math.sin(w * t) * np.sin(y),
            d_ty=lambda t, y: a * w * math.cos(w * t) * np.cos(y),
            name=family, family_params={"a": a, "omega": w})

    if family == "decaying_sine":
        if "nu" not in params:
            raise ConfigurationError("decaying_sine requires the parameter nu")
        nu = float(params["nu"])
        A = float(params.get("amplitude", 1.0))
        return ShearFlow(
            eval=lambda t, y: A * math.exp(-nu * t) * np.sin(y),
            d_y=lambda t, y: A * math.exp(-nu * t) * np.cos(y),
            d_yy=lambda t, y: -A * math.exp(-nu * t) * np.sin(y),
            d_ty=lambda t, y: -nu * A * math.exp(-nu * t) * np.cos(y),
            name=family, family_params={"nu": nu, "amplitude": A})

    if family == "static_sine":
        A = float(params.get("amplitude", 1.0))
        p = float(params.get("phase", 0.0))
        return ShearFlow(
            eval=lambda t, y: A * np.sin(y + p),
            d_y=lambda t, y: A * np.cos(y + p),
            d_yy=lambda t, y: -A * np.sin(y + p),
            d_ty=_zero, name=family, family_params={"amplitude": A, "phase": p})

    if family == "parabola":
        return ShearFlow(
            eval=lambda t, y: 1.0 - np.asarray(y, dtype=float) ** 2,
            d_y=lambda t, y: -2.0 * np.asarray(y, dtype=float),
            d_yy=lambda t, y: np.full_like(np.asarray(y, dtype=float), -2.0),
            d_ty=_zero, name=family)

    if family == "zero":
        return ShearFlow(eval=_zero, d_y=_zero, d_yy=_zero, d_ty=_zero, name=family)

    if family in ("custom_tabulated", "custom-tabulated", "tabulated"):
        if "path" not in params:
            raise ConfigurationError("tabulated flow requires a CSV path")
        return load_tabulated_flow(params["path"])

    raise ConfigurationError(f"unknown shear family {family!r}")


def tabulated_flow(times: Sequence[float], ys: Sequence[float], values: np.ndarray,
                   name: str = "tabulated") -> ShearFlow:
    """Spline-interpolated flow from samples ``values[i, j] = V(times[i], ys[j])``.

    A single time row gives a stationary profile.  Derivatives come from the
    bicubic (or cubic) spline, so the consistency tolerance is loosened.
    """
    times = np.asarray(times, dtype=float)
    ys = np.asarray(ys, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.shape != (times.size, ys.size):
        raise DataError("tabulated values do not match the (t, y) lattice")
    if ys.size < 4:
        raise DataError("tabulated flow needs at least 4 y samples")

    if times.size == 1:
        spl = interpolate.CubicSpline(ys, values[0])
        d1, d2 = spl.derivative(1), spl.derivative(2)
        return ShearFlow(
            eval=lambda t, y: spl(np.asarray(y, dtype=float)),
            d_y=lambda t, y: d1(np.asarray(y, dtype=float)),
            d_yy=lambda t, y: d2(np.asarray(y, dtype=float)),
            d_ty=_zero, name=name, tabulated=True)

    if times.size < 4:
        raise DataError("time-dependent tabulated flow needs at least 4 time samples")
    spl = interpolate.RectBivariateSpline(times, ys, values, kx=3, ky=3)

    def make(dx, dy):
        def fn(t, y):
            y = np.asarray(y, dtype=float)
            return spl.ev(np.full_like(y, t), y, dx=dx, dy=dy)
        return fn

    return ShearFlow(eval=make(0, 0), d_y=make(0, 1), d_yy=make(0, 2), d_ty=make(1, 1),
                     name=name, tabulated=True)


def load_tabulated_flow(path) -> ShearFlow:
    """Read a CSV with columns t, y, V sampled on a regular lattice."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"t", "y", "V"} <= set(reader.fieldnames):
            raise DataError(f"{path}: expected columns t, y, V")
        for row in reader:
            rows.append((float(row["t"]), float(row["y"]), float(row["V"])))
    if not rows:
        raise DataError(f"{path}: no data rows")
    data = np.array(rows)
    times = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    if len(data) != times.size * ys.size:
        raise DataError(f"{path}: samples do not form a regular (t, y) lattice")
    order = np.lexsort((data[:, 1], data[:, 0]))
    values = data[order, 2].reshape(times.size, ys.size)
    return tabulated_flow(times, ys, values, name=f"tabulated:{path}")


def consistency_check(flow: ShearFlow, times, ys, h: float = 1e-4) -> Dict[str, float]:
    """Max deviation of the derivative closures from central differences of ``eval``."""
    ys = np.asarray(ys, dtype=float)
    err = {"d_y": 0.0, "d_yy": 0.0, "d_ty": 0.0}
    for t in times:
        v0 = flow.eval(t, ys)
        vp, vm = flow.eval(t, ys + h), flow.eval(t, ys - h)
        fd_y = (vp - vm) / (2 * h)
        fd_yy = (vp - 2 * v0 + vm) / h**2
        fd_ty = (flow.eval(t + h, ys + h) - flow.eval(t + h, ys - h)
                 - flow.eval(t - h, ys + h) + flow.eval(t - h, ys - h)) / (4 * h**2)
        err["d_y"] = max(err["d_y"], float(np.max(np.abs(flow.d_y(t, ys) - fd_y))))
        err["d_yy"] = max(err["d_yy"], float(np.max(np.abs(flow.d_yy(t, ys) - fd_yy))))
        err["d_ty"] = max(err["d_ty"], float(np.max(np.abs(flow.d_ty(t, ys) - fd_ty))))
    return err


# -- critical points --------------------------------------------------------

def critical_points(flow: ShearFlow, t: float, grid: Grid, max_roots: int = 64) -> List[float]:
    """Roots of d_y V(t, .) on the grid's domain, sorted ascending.

    Sign changes between neighbouring grid points are refined with Brent's
    method.  Touching zeros (d_y V vanishing without a sign change, as for
    V = y^3) are caught by minimising |d_y V| around local minima.
    """
    y = np.asarray(grid.points, dtype=float)
    periodic = grid.kind is DomainKind.TORUS
    if periodic:
        y = np.append(y, y[0] + 2 * np.pi)
    d = np.asarray(flow.d_y(t, y), dtype=float)
    if np.count_nonzero(np.abs(d) <= ROOT_TOL) > max_roots:
        raise DegenerateFlowError(f"{flow.name}: d_yV vanishes on a continuum at t={t}")

    fn = lambda s: float(flow.d_y(t, np.array([s]))[0])
    roots: List[float] = []
    m = len(y) - 1
    for i in range(m):
        if d[i] == 0.0:
            roots.append(y[i])
        elif d[i] * d[i + 1] < 0:
            roots.append(optimize.brentq(fn, y[i], y[i + 1], xtol=1e-15, rtol=1e-15))
        if len(roots) > max_roots:
            raise DegenerateFlowError(f"{flow.name}: more than {max_roots} critical points")
    if not periodic and d[-1] == 0.0:
        roots.append(y[-1])

    # touching zeros
    a = np.abs(d)
    rng = range(m) if periodic else range(1, m)
    for i in rng:
        lo, hi = (i - 1) % m if periodic else i - 1, i + 1
        if a[i] == 0.0 or not (a[i] <= a[lo] and a[i] <= a[hi]):
            continue
        if a[i] == a[lo] and a[i] == a[hi]:
            continue    # flat stretch, not an isolated minimum
        if d[lo] * d[i] <= 0 or d[i] * d[hi] <= 0:
            continue
        left = y[i] - (y[i] - y[lo]) % (2 * np.pi) if periodic else y[lo]
        res = optimize.minimize_scalar(lambda s: abs(fn(s)), bounds=(left, y[hi]),
                                       method="bounded", options={"xatol": 1e-13})
        if abs(fn(res.x)) <= ROOT_TOL:
            roots.append(res.x)

    if periodic:
        roots = [((r + np.pi) % (2 * np.pi)) - np.pi for r in roots]
    roots.sort()
    merged: List[float] = []
    for r in roots:
        if merged and (abs(r - merged[-1]) < 1e-9
                       or (periodic and abs(r - merged[0] - 2 * np.pi) < 1e-9)):
            continue
        merged.append(float(r))
    if len(merged) > max_roots:
        raise DegenerateFlowError(f"{flow.name}: more than {max_roots} critical points")
    return merged


@dataclass
class CriticalPointTrack:
    times: np.ndarray
    points: List[List[float]]
    continuous: bool = True
    max_jump: float = 0.0

    @property
    def count_per_time(self) -> List[int]:
        return [len(p) for p in self.points]


def track_critical_points(flow: ShearFlow, grid: Grid, times,
                          radius: float = TRACK_RADIUS) -> CriticalPointTrack:
    """Critical points at each time, with nearest-neighbour continuity check."""
    times = np.asarray(times, dtype=float)
    pts = [critical_points(flow, t, grid) for t in times]
    continuous, max_jump = True, 0.0
    for prev, cur in zip(pts, pts[1:]):
        if len(prev) != len(cur):
            continuous = False
            continue
        for p in cur:
            jump = float(np.min(grid.distance(np.asarray(prev), p))) if prev else 0.0
            max_jump = max(max_jump, jump)
            if jump >= radius:
                continuous = False
    return CriticalPointTrack(times, pts, continuous, max_jump)


# -- validation -------------------------------------------------------------

@dataclass
class FlowValidationParams:
    T: float = 1.0
    c: float = 0.0                # monotone lower bound for |d_y V|
    g0: float = 4.0               # shape constant near critical points
    g1: float = 4.0               # shape constant away from critical points
    r: float = 1.0                # neighbourhood radius
    g2: float = 1.0               # time-derivative constant (Taylor)
    g3: float = 1.0               # degeneracy constant (Taylor)
    m0: int = 1                   # degeneracy order
    r0: float = 0.5               # Taylor radius
    N: Optional[int] = None       # expected critical point count
    time_samples: int = DEFAULT_TIME_SAMPLES

    def __post_init__(self):
        if self.T < 0:
            raise ConfigurationError("horizon T must be nonnegative")
        for name in ("g0", "g1", "g3", "r", "r0"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.g2 < 0:
            raise ConfigurationError("g2 must be nonnegative")
        if int(self.m0) != self.m0 or self.m0 < 1:
            raise ConfigurationError("m0 must be a positive integer")
        if self.time_samples < 1:
            raise ConfigurationError("time_samples must be positive")

    def times(self) -> np.ndarray:
        if self.time_samples == 1 or self.T == 0:
            return np.array([0.0])
        return np.linspace(0.0, self.T, self.time_samples)


@dataclass
class ValidationReport:
    regime: str
    passed: bool
    checks: Dict[str, bool]
    measured: Dict[str, float]
    lattice: str
    failures: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"regime": self.regime, "passed": self.passed, "checks": dict(self.checks),
                "measured": dict(self.measured), "lattice": self.lattice,
                "failures": list(self.failures)}

    def to_text(self) -> str:
        lines = [f"regime: {self.regime}", f"result: {'PASS' if self.passed else 'FAIL'}",
                 f"lattice: {self.lattice}", "checks:"]
        lines += [f"  {k}: {'pass' if v else 'FAIL'}" for k, v in self.checks.items()]
        lines.append("measured:")
        lines += [f"  {k}: {v:.17g}" for k, v in self.measured.items()]
        if self.failures:
            lines.append("failures:")
            lines += [f"  - {msg}" for msg in self.failures]
        return "\n".join(lines) + "\n"


def _lattice_desc(grid: Grid, times) -> str:
    return f"{grid.n} grid points x {len(times)} time samples on [{times[0]:g}, {times[-1]:g}]"


def _sup(fn, times, y) -> float:
    return max(float(np.max(np.abs(fn(t, y)))) for t in times)


def validate_monotone(flow: ShearFlow, params: FlowValidationParams, grid: Grid,
                      time_samples=None) -> ValidationReport:
    """Check inf |d_y V| >= c on the sampling lattice; report W^{3,inf}-type sups."""
    times = params.times() if time_samples is None else np.asarray(time_samples, dtype=float)
    y = np.asarray(grid.points)
    inf_dy = min(float(np.min(np.abs(flow.d_y(t, y)))) for t in times)
    measured = {
        "inf_abs_dyV": inf_dy,
        "sup_abs_V": _sup(flow.eval, times, y),
        "sup_abs_dyV": _sup(flow.d_y, times, y),
        "sup_abs_dyyV": _sup(flow.d_yy, times, y),
        "c": params.c,
    }
    ok = inf_dy >= params.c - 1e-12
    failures = [] if ok else [f"inf |d_yV| = {inf_dy:.6g} < c = {params.c:.6g}"]
    return ValidationReport("monotone", ok, {"monotone_lower_bound": ok}, measured,
                            _lattice_desc(grid, times), failures)


def _match(a: List[float], b: List[float], grid: Grid, tol: float) -> bool:
    if len(a) != len(b):
        return False
    return all(float(np.min(grid.distance(np.asarray(b), p))) <= tol for p in a)


def _shape_checks(dz: np.ndarray, y: np.ndarray, crit: List[float], grid: Grid,
                  params: FlowValidationParams):
    """Return (inside_ok, outside_ok, worst inside ratio, worst outside bound)."""
    near = np.zeros(y.shape, dtype=bool)
    inside_ok = True
    worst_in = 1.0
    for yi in crit:
        dist = grid.distance(y, yi)
        ball = dist < params.r
        near |= ball
        d2, z2 = dz[ball] ** 2, dist[ball] ** 2
        lo = z2 / params.g0 - 1e-12 <= d2
        hi = d2 <= params.g0 * z2 + 1e-12
        inside_ok &= bool(np.all(lo & hi))
        nz = z2 > 1e-24
        if np.any(nz):
            ratio = d2[nz] / z2[nz]
            worst_in = max(worst_in, float(np.max(ratio)), float(np.max(1.0 / np.maximum(ratio, 1e-300))))
    far = np.abs(dz[~near])
    outside_ok = bool(np.all((far >= 1.0 / params.g1 - 1e-12) & (far <= params.g1 + 1e-12)))
    worst_out = 1.0
    if far.size:
        worst_out = max(float(np.max(far)), 1.0 / max(float(np.min(far)), 1e-300))
    return inside_ok, outside_ok, worst_in, worst_out


def validate_nondegenerate(flowV: ShearFlow, flowU: ShearFlow, params: FlowValidationParams,
                           grid: Grid, time_samples=None, *, nu: float) -> ValidationReport:
    """Check the phase and shape hypotheses relating V to the reference shear U."""
    if grid.kind is not DomainKind.TORUS:
        raise ConfigurationError("nondegenerate validation requires a torus grid")
    times = params.times() if time_samples is None else np.asarray(time_samples, dtype=float)
    y = np.asarray(grid.points)
    checks = {"critical_points_shared": True, "count_fixed": True, "sign_agreement": True,
              "slow_reference": True, "shape_near_critical": True, "shape_away": True}
    failures: List[str] = []
    counts = set()
    min_prod, worst_in, worst_out = np.inf, 1.0, 1.0
    for t in times:
        cv = critical_points(flowV, t, grid)
        cu = critical_points(flowU, t, grid)
        counts.add(len(cv))
        if not _match(cv, cu, grid, MATCH_TOL):
            if checks["critical_points_shared"]:
                failures.append(f"critical points differ at t={t:g}: V {cv} vs U {cu}")
            checks["critical_points_shared"] = False
        dv, du = flowV.d_y(t, y), flowU.d_y(t, y)
        min_prod = min(min_prod, float(np.min(dv * du)))
        for label, dz in (("V", dv), ("U", du)):
            ins, out, wi, wo = _shape_checks(dz, y, cu, grid, params)
            worst_in, worst_out = max(worst_in, wi), max(worst_out, wo)
            if not ins and checks["shape_near_critical"]:
                failures.append(f"{label}: near-critical shape bound fails at t={t:g}")
            if not out and checks["shape_away"]:
                failures.append(f"{label}: away-from-critical bound fails at t={t:g}")
            checks["shape_near_critical"] &= ins
            checks["shape_away"] &= out
    if len(counts) != 1 or (params.N is not None and counts != {params.N}):
        checks["count_fixed"] = False
        failures.append(f"critical point counts {sorted(counts)} (expected {params.N})")
    if min_prod < -1e-12:
        checks["sign_agreement"] = False
        failures.append(f"d_yV * d_yU reaches {min_prod:.3g} < 0")
    sup_ty = _sup(flowU.d_ty, times, y)
    if sup_ty > nu**0.75:
        checks["slow_reference"] = False
        failures.append(f"||d_tyU|| = {sup_ty:.3g} > nu^(3/4) = {nu ** 0.75:.3g}")
    measured = {
        "N": float(next(iter(counts))) if len(counts) == 1 else float("nan"),
        "min_dyV_dyU": min_prod,
        "sup_abs_dtyU": sup_ty,
        "nu_pow_3_4": nu**0.75,
        "worst_near_ratio": worst_in,
        "worst_away_bound": worst_out,
        "sup_abs_dyyU": _sup(flowU.d_yy, times, y),
        "sup_abs_dyV": _sup(flowV.d_y, times, y),
        "sup_abs_dyU": _sup(flowU.d_y, times, y),
        "g0": params.g0, "g1": params.g1, "r": params.r,
    }
    return ValidationReport("nondegenerate", all(checks.values()), checks, measured,
                            _lattice_desc(grid, times), failures)


def validate_taylor(flow: ShearFlow, params: FlowValidationParams, grid: Grid,
                    time_samples=None, *, nu: float) -> ValidationReport:
    """Check ||d_tyV|| <= g2 nu and |y - y_i|^m0 <= g3 |d_yV| near each critical point."""
    if grid.kind is not DomainKind.CHANNEL:
        raise ConfigurationError("Taylor validation requires a channel grid")
    times = params.times() if time_samples is None else np.asarray(time_samples, dtype=float)
    y = np.asarray(grid.points)
    checks = {"finite_critical_points": True, "slow_time_dependence": True,
              "nondegenerate_order": True}
    failures: List[str] = []
    sup_ty = _sup(flow.d_ty, times, y)
    if sup_ty > params.g2 * nu + 1e-15:
        checks["slow_time_dependence"] = False
        failures.append(f"||d_tyV|| = {sup_ty:.3g} > g2*nu = {params.g2 * nu:.3g}")
    max_count, worst = 0, 0.0
    for t in times:
        try:
            crit = critical_points(flow, t, grid)
        except DegenerateFlowError as exc:
            checks["finite_critical_points"] = False
            failures.append(str(exc))
            break
        max_count = max(max_count, len(crit))
        dv = np.abs(flow.d_y(t, y))
        for yi in crit:
            # dense local lattice so the check does not depend on grid alignment
            z = np.linspace(max(-1.0, yi - params.r0), min(1.0, yi + params.r0), 401)
            lhs = np.abs(z - yi) ** params.m0
            rhs = params.g3 * np.abs(flow.d_y(t, z))
            slack = lhs - rhs
            worst = max(worst, float(np.max(slack)))
            if np.any(slack > 1e-12 * (1 + rhs)):
                if checks["nondegenerate_order"]:
                    failures.append(f"|y-y_i|^m0 > g3|d_yV| near y_i={yi:.6g}, t={t:g}")
                checks["nondegenerate_order"] = False
        del dv
    measured = {
        "sup_abs_dtyV": sup_ty,
        "max_critical_points": float(max_count),
        "worst_order_excess": worst,
        "sup_abs_dyV": _sup(flow.d_y, times, y),
        "sup_abs_dyyV": _sup(flow.d_yy, times, y),
        "g2": params.g2, "g3": params.g3, "m0": float(params.m0), "r0": params.r0,
    }
    return ValidationReport("taylor", all(checks.values()), checks, measured,
                            _lattice_desc(grid, times), failures)


@dataclass
class EquivalenceConstant:
    value: float        # max(sampled, g0_floor) when a floor is given
    sampled: float      # lattice maximum of the two-sided ratio
    g0_floor: Optional[float] = None


def equivalence_constant(flowV: ShearFlow, flowU: ShearFlow, grid: Grid, time_samples,
                         exclusion_radius: float = 1e-3,
                         g0_floor: Optional[float] = None) -> EquivalenceConstant:
    """Smallest C with C^-1 |d_yU| <= |d_yV| <= C |d_yU| on the sampled lattice.

    Points within ``exclusion_radius`` of a critical point of U are skipped;
    if ``g0_floor`` is given the result is raised to at least that value,
    which bounds the ratio inside the excluded balls.
    """
    y = np.asarray(grid.points)
    best = 1.0
    for t in np.asarray(time_samples, dtype=float):
        dv = np.abs(flowV.d_y(t, y))
        du = np.abs(flowU.d_y(t, y))
        keep = np.ones(y.shape, dtype=bool)
        crit = set(critical_points(flowU, t, grid)) | set(critical_points(flowV, t, grid))
        for yi in crit:
            keep &= grid.distance(y, yi) >= exclusion_radius
        dv, du = dv[keep], du[keep]
        if dv.size == 0:
            continue
        if np.min(du) < 1e-14 or np.min(dv) < 1e-14:
            raise StructuralError("shear gradient vanishes outside the excluded balls")
        best = max(best, float(np.max(dv / du)), float(np.max(du / dv)))
    value = best if g0_floor is None else max(best, g0_floor)
    return EquivalenceConstant(value, best, g0_floor)
