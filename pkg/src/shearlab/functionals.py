"""Hypocoercivity functionals, their parameter choices, equivalence checks and
decay certificates for the monotone, nondegenerate and Taylor regimes."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, NamedTuple, Optional

import numpy as np

from .errors import ConfigurationError, ConstantsTooLargeError
from .grid import Grid, derivative, h1_seminorm, inner_product
from .shear import ShearFlow, ValidationReport


class Regime(str, enum.Enum):
    MONOTONE = "monotone"
    NONDEGENERATE = "nondegenerate"
    TAYLOR = "taylor"


class Weights(NamedTuple):
    eps: float
    psi: float
    phi: float
    zeta: float


def weights(t: float, nu: float, k: float) -> Weights:
    """eps = nu/|k| and the three ramp weights, each saturating at 1."""
    if not nu > 0 or k == 0 or t < 0:
        raise ConfigurationError("weights need nu > 0, k != 0 and t >= 0")
    ak = abs(k)
    return Weights(
        eps=nu / ak,
        psi=min(nu ** (1 / 3) * ak ** (2 / 3) * t, 1.0),
        phi=min(nu**0.5 * ak**0.5 * t, 1.0),
        zeta=min(ak**2 * t / nu, 1.0),
    )


def rate_scale(regime, nu: float, k: float) -> float:
    """Enhanced rate scale: nu^(1/3)|k|^(2/3), nu^(1/2)|k|^(1/2) or k^2/nu."""
    regime = Regime(regime)
    ak = abs(k)
    if regime is Regime.MONOTONE:
        return nu ** (1 / 3) * ak ** (2 / 3)
    if regime is Regime.NONDEGENERATE:
        return nu**0.5 * ak**0.5
    return ak**2 / nu


def saturation_time(regime, nu: float, k: float) -> float:
    """Time after which the regime's weight equals 1."""
    regime = Regime(regime)
    if regime is Regime.TAYLOR:
        return nu / k**2
    return 1.0 / rate_scale(regime, nu, k)


@dataclass
class FunctionalParams:
    regime: Regime
    alpha: float
    beta: float
    delta: float
    gamma: float = 0.0
    c_star: Optional[float] = None
    c_spec: Optional[float] = None        # spectral constant (torus or channel)
    c0: Optional[float] = None
    sup_dyV: Optional[float] = None       # needed by the Taylor constraint
    validated: bool = False
    enforce: bool = True                  # False only for deliberately invalid sets
    notes: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.regime = Regime(self.regime)
        if min(self.alpha, self.beta, self.gamma) < 0 or self.delta < 0:
            raise ConfigurationError("functional parameters must be nonnegative")
        if self.enforce and not self.constraint_holds():
            raise ConfigurationError(f"{self.regime.value} parameter constraint violated")

    def constraint_holds(self) -> bool:
        if self.regime is Regime.MONOTONE:
            return self.alpha > self.beta**2
        if self.regime is Regime.NONDEGENERATE:
            # equality is the intended choice; allow rounding in the product
            return self.beta**2 <= self.alpha * self.gamma * (1 + 1e-12)
        if self.sup_dyV is None:
            raise ConfigurationError("Taylor parameters need sup|d_yV|")
        return self.beta**2 / self.alpha * self.sup_dyV**2 <= 0.5

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regime"] = self.regime.value
        d.pop("enforce")
        return d


def _require_report(report: Optional[ValidationReport], regime: str, force: bool):
    if report is None:
        raise ConfigurationError(f"{regime} parameters require a validation report")
    if report.regime != regime:
        raise ConfigurationError(f"validation report is for {report.regime}, not {regime}")
    if not report.passed and not force:
        raise ConfigurationError(f"{regime} validation failed; parameters unavailable")


def params_monotone(flow: ShearFlow, report: ValidationReport,
                    force: bool = False) -> FunctionalParams:
    """alpha = beta = 1/(2(1+||V'||)), delta = 1/(6(1+c)(1+||V'||))."""
    _require_report(report, "monotone", force)
    s = report.measured["sup_abs_dyV"]
    c = report.measured["c"]
    a = 1.0 / (2 * (1 + s))
    return FunctionalParams(Regime.MONOTONE, alpha=a, beta=a,
                            delta=1.0 / (6 * (1 + c) * (1 + s)), sup_dyV=s,
                            validated=report.passed, notes={"c": c})


def _nondeg_feasible(beta: float, c_star: float, g_spec: float, m: float) -> bool:
    first = 4 * beta * c_star + 83 * beta**1.5 * c_star**4 * m
    second = (12 * beta**0.5 * c_star**1.5 + 83 * beta**0.5 * c_star**4 * g_spec * m)
    return first <= 5 / 8 and second <= 1 / (8 * c_star)


def params_nondegenerate(c_star: float, g_spec: float, sup_dyyU: float,
                         validated: bool = True) -> FunctionalParams:
    """Largest beta <= 1 meeting both dissipation constraints at half margin.

    alpha and gamma follow from beta so that beta^2 = alpha*gamma.  The rate
    delta is the largest value for which the final dissipation bound
    dominates delta times the upper equivalence bound of the functional.
    """
    if min(c_star, g_spec) <= 0 or sup_dyyU < 0:
        raise ConfigurationError("nondegenerate constants must be positive")
    m = max(1.0, sup_dyyU**2)
    if _nondeg_feasible(1.0, c_star, g_spec, m):
        beta = 1.0
    else:
        lo, hi = 1e-12, 1.0
        if not _nondeg_feasible(lo, c_star, g_spec, m):
            raise ConstantsTooLargeError(
                f"no beta > 1e-12 satisfies the constraints (C*={c_star:.4g}, "
                f"spectral constant={g_spec:.4g}, ||U''||={sup_dyyU:.4g})")
        # both constraints are monotone in beta; bisect in log space
        for _ in range(200):
            mid = math.sqrt(lo * hi)
            if _nondeg_feasible(mid, c_star, g_spec, m):
                lo = mid
            else:
                hi = mid
            if hi / lo - 1 < 1e-13:
                break
        beta = lo
    alpha = beta**0.5 / (4 * c_star**1.5)
    gamma = 4 * beta**1.5 * c_star**1.5
    delta = min(beta / (16 * g_spec * c_star), 1 / (6 * alpha),
                1 / (96 * beta**0.5 * c_star**2.5))
    return FunctionalParams(Regime.NONDEGENERATE, alpha=alpha, beta=beta, gamma=gamma,
                            delta=delta, c_star=c_star, c_spec=g_spec, validated=validated,
                            notes={"sup_dyyU": sup_dyyU})


def params_taylor(report: ValidationReport, c_spec: Optional[float], c0: float = 4.0,
                  force: bool = False) -> FunctionalParams:
    """alpha = beta = 1/(16 C0 (1 + G2 + ||V'||^2 + ||V''||^2)), delta = beta/(6 C_spec)."""
    _require_report(report, "taylor", force)
    if c_spec is None:
        raise ConfigurationError("Taylor parameters need the channel spectral constant")
    if c0 < 1:
        raise ConfigurationError("C0 must be at least 1")
    m = report.measured
    s1, s2 = m["sup_abs_dyV"], m["sup_abs_dyyV"]
    b = 1.0 / (16 * c0 * (1 + m["g2"] + s1**2 + s2**2))
    return FunctionalParams(Regime.TAYLOR, alpha=b, beta=b, delta=b / (6 * c_spec),
                            c_spec=c_spec, c0=c0, sup_dyV=s1, validated=report.passed)


# -- evaluation ---------------------------------------------------------------

@dataclass
class FunctionalSample:
    t: float
    value: float
    l2sq: float
    h1sq: float
    cross: float          # weighted cross term as it enters the functional
    gradient: float       # weighted gradient term
    potential: float      # weighted ||U' f||^2 term (nondegenerate only)
    raw_cross: float      # unweighted Re <i sign(k) W' f, f'>
    weights: Weights
    regime: Regime


def eval_functional(grid: Grid, f, t: float, k: float, nu: float, params: FunctionalParams,
                    flowV: Optional[ShearFlow] = None, flowU: Optional[ShearFlow] = None,
                    w: Optional[Weights] = None) -> FunctionalSample:
    f = np.asarray(f, dtype=complex)
    w = weights(t, nu, k) if w is None else w
    sgn = float(np.sign(k))
    l2sq = inner_product(grid, f, f).real
    h1sq = h1_seminorm(grid, f) ** 2
    df = derivative(grid, f, 1)
    potential = 0.0
    regime = params.regime
    if regime is Regime.MONOTONE:
        raw = inner_product(grid, 1j * sgn * f, df).real
        grad = params.alpha * w.psi * w.eps ** (2 / 3) * h1sq
        cross = params.beta * w.psi**2 * w.eps ** (1 / 3) * raw
    elif regime is Regime.NONDEGENERATE:
        if flowU is None:
            raise ConfigurationError("the nondegenerate functional needs the reference shear U")
        uf = flowU.d_y(t, grid.points) * f
        raw = inner_product(grid, 1j * sgn * uf, df).real
        grad = params.alpha * w.phi * w.eps**0.5 * h1sq
        cross = params.beta * w.phi**2 * raw
        potential = params.gamma * w.phi**3 * w.eps**-0.5 * inner_product(grid, uf, uf).real
    else:
        if flowV is None:
            raise ConfigurationError("the Taylor functional needs the shear V")
        vf = flowV.d_y(t, grid.points) * f
        raw = inner_product(grid, 1j * sgn * vf, df).real
        grad = params.alpha * w.zeta * h1sq
        cross = params.beta * w.zeta * raw
    value = l2sq + grad + cross + potential
    return FunctionalSample(t, value, l2sq, h1sq, cross, grad, potential, raw, w, regime)


@dataclass
class EquivalenceMargin:
    lower_slack: float    # functional - lower bound
    upper_slack: float    # upper bound - functional
    scale: float
    holds: bool

    @property
    def min_slack(self) -> float:
        return min(self.lower_slack, self.upper_slack)


def check_equivalence(sample: FunctionalSample, params: FunctionalParams,
                      rel_tol: float = 1e-12) -> EquivalenceMargin:
    """Two-sided comparison of the functional with its weighted H^1 norm."""
    F = sample.value
    if sample.regime is Regime.NONDEGENERATE:
        extra = sample.gradient + sample.potential
        lower = sample.l2sq + 0.5 * extra
        upper = sample.l2sq + 1.5 * extra
    else:
        base = sample.l2sq + sample.gradient
        lower, upper = 0.5 * base, 1.5 * base
    scale = max(upper, 0.0)
    lo, hi = F - lower, upper - F
    ok = min(lo, hi) >= -rel_tol * scale
    return EquivalenceMargin(lo, hi, scale, bool(ok))


class FunctionalMonitor:
    """Simulation observer producing (cross, functional, certificate margin)."""

    def __init__(self, grid: Grid, k: float, nu: float, params: FunctionalParams,
                 flowV: Optional[ShearFlow] = None, flowU: Optional[ShearFlow] = None):
        self.grid, self.k, self.nu, self.params = grid, k, nu, params
        self.flowV, self.flowU = flowV, flowU
        self.rho = rate_scale(params.regime, nu, k)
        self.initial: Optional[float] = None
        self.samples = []

    def observe(self, t: float, f):
        s = eval_functional(self.grid, f, t, self.k, self.nu, self.params,
                            self.flowV, self.flowU)
        self.samples.append(s)
        if self.initial is None:
            self.initial = s.value
        margin = certificate_value(s.value, self.initial, t, self.params.delta, self.rho)
        return s.cross, s.value, margin


def certificate_value(F: float, F0: float, t: float, delta: float, rho: float) -> float:
    if F0 <= 0:
        return 0.0
    return F * math.exp(delta * rho * t - 1.0) / F0


@dataclass
class CertificateResult:
    max_margin: float
    passed: bool
    margins: np.ndarray
    best_prefactor: float   # smallest C with F(t) <= C F(0) exp(-delta rho t)
    tol: float


def check_certificate(record, params: FunctionalParams, nu: float, k: float,
                      rate_kind=None, tol: float = 1e-6) -> CertificateResult:
    """max over samples of F(t) exp(delta rho t) / (e F(0)); passes iff <= 1 + tol."""
    rho = rate_scale(params.regime if rate_kind is None else rate_kind, nu, k)
    t = np.asarray(record["t"])
    F = np.asarray(record["functional"])
    if F.size == 0 or not np.all(np.isfinite(F)):
        raise ConfigurationError("record has no functional values")
    if F[0] <= 0:
        margins = np.zeros_like(F)
    else:
        margins = F * np.exp(params.delta * rho * t - 1.0) / F[0]
    worst = float(np.max(margins))
    return CertificateResult(worst, worst <= 1 + tol, margins, worst * math.e, tol)


@dataclass
class GronwallResult:
    max_violation: float
    n_checked: int
    t_start: float


def gronwall_diagnostic(record, params: FunctionalParams, nu: float, k: float,
                        rate_kind=None) -> GronwallResult:
    """Worst relative excess of F(t+h) over F(t) exp(-delta rho h) after the initial layer."""
    if not params.validated:
        raise ConfigurationError("Gronwall diagnostic requires parameters from a passed validation")
    regime = params.regime if rate_kind is None else Regime(rate_kind)
    rho = rate_scale(regime, nu, k)
    t0 = saturation_time(regime, nu, k)
    t = np.asarray(record["t"])
    F = np.asarray(record["functional"])
    idx = np.nonzero(t >= t0)[0]
    worst, count = 0.0, 0
    for i, j in zip(idx[:-1], idx[1:]):
        if F[i] <= 0:
            continue
        excess = (F[j] - F[i] * math.exp(-params.delta * rho * (t[j] - t[i]))) / F[i]
        worst = max(worst, excess)
        count += 1
    return GronwallResult(worst, count, t0)
