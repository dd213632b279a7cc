"""One-dimensional collocation grids for the cross-stream variable y.

Three domains are supported:

* ``torus``           -- [-pi, pi) with Fourier collocation
* ``truncated_line``  -- [-L, L] with homogeneous Dirichlet ends, sine-series
  collocation on a uniform mesh
* ``channel``         -- [-1, 1] with Dirichlet walls, either second-order
  finite differences (default) or Chebyshev-Gauss-Lobatto collocation

Fields are plain complex numpy arrays aligned with ``Grid.points``.  Grids
are immutable; every array they hold is flagged read-only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import fft as sfft

from .errors import ConfigurationError

MIN_POINTS = 16
MIN_HALF_WIDTH = 4.0


class DomainKind(str, enum.Enum):
    TORUS = "torus"
    TRUNCATED_LINE = "truncated_line"
    CHANNEL = "channel"


class Boundary(str, enum.Enum):
    PERIODIC = "periodic"
    DIRICHLET = "dirichlet"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    kind: DomainKind
    n: int
    points: np.ndarray
    quadrature_weights: np.ndarray
    boundary: Boundary
    scheme: str
    half_width: Optional[float] = None
    # dense Chebyshev differentiation matrices; None for the other schemes
    cheb_d1: Optional[np.ndarray] = field(default=None, repr=False)
    cheb_d2: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def length(self) -> float:
        if self.kind is DomainKind.TORUS:
            return 2 * np.pi
        if self.kind is DomainKind.CHANNEL:
            return 2.0
        return 2 * self.half_width

    @property
    def lower(self) -> float:
        return -self.length / 2

    @property
    def dirichlet(self) -> bool:
        return self.boundary is Boundary.DIRICHLET

    @property
    def spacing(self) -> float:
        """Mesh width of the uniform schemes (undefined for Chebyshev)."""
        if self.scheme == "chebyshev":
            raise ConfigurationError("Chebyshev grids have no uniform spacing")
        if self.kind is DomainKind.TORUS:
            return 2 * np.pi / self.n
        return self.length / (self.n - 1)

    def sample(self, func: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Evaluate ``func`` on the grid, zeroing Dirichlet boundary values."""
        values = np.asarray(func(np.asarray(self.points)), dtype=complex)
        values = np.broadcast_to(values, (self.n,)).copy()
        if self.dirichlet:
            values[0] = values[-1] = 0.0
        return values

    def conform(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=complex)
        if values.shape != (self.n,):
            raise ConfigurationError(
                f"field of shape {values.shape} does not conform to grid with n={self.n}")
        if self.dirichlet and (values[0] != 0 or values[-1] != 0):
            raise ConfigurationError("Dirichlet field must vanish at both ends")
        return values

    def distance(self, y, y0):
        """|y - y0|, measured modulo 2*pi on the torus."""
        d = np.asarray(y) - y0
        if self.kind is DomainKind.TORUS:
            d = (d + np.pi) % (2 * np.pi) - np.pi
        return np.abs(d)


def _chebyshev(n: int):
    # Trefethen's cheb(), reflected so the points increase.
    N = n - 1
    j = np.arange(n)
    x = np.cos(np.pi * j / N)
    c = np.hstack([2.0, np.ones(N - 1), 2.0]) * (-1.0) ** j
    dx = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (dx + np.eye(n))
    D -= np.diag(D.sum(axis=1))
    return -x, -D


def _clenshaw_curtis(n: int) -> np.ndarray:
    N = n - 1
    theta = np.pi * np.arange(n) / N
    w = np.zeros(n)
    ii = np.arange(1, N)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N**2 - 1)
        for k in range(1, N // 2):
            v -= 2 * np.cos(2 * k * theta[ii]) / (4 * k**2 - 1)
        v -= np.cos(N * theta[ii]) / (N**2 - 1)
    else:
        w[0] = w[N] = 1.0 / N**2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2 * np.cos(2 * k * theta[ii]) / (4 * k**2 - 1)
    w[ii] = 2 * v / N
    return w


def build_grid(kind, n: int, half_width: Optional[float] = None,
               scheme: Optional[str] = None) -> Grid:
    """Construct a grid for one of the three domains.

    Parameters
    ----------
    kind : DomainKind or str
    n : int
        Number of collocation points (boundary points included for the
        Dirichlet domains), at least 16.
    half_width : float, optional
        Half width L of the truncated line; required for that domain only.
    scheme : str, optional
        ``"fd"`` (default) or ``"chebyshev"`` for the channel.  Ignored for
        the other domains.
    """
    try:
        kind = DomainKind(kind)
    except ValueError:
        raise ConfigurationError(f"unknown domain kind {kind!r}") from None
    if int(n) != n or n < MIN_POINTS:
        raise ConfigurationError(f"grid needs an integer n >= {MIN_POINTS}, got {n!r}")
    n = int(n)
    if kind is DomainKind.TRUNCATED_LINE:
        if half_width is None:
            raise ConfigurationError("truncated_line grid requires half_width")
        if half_width < MIN_HALF_WIDTH:
            raise ConfigurationError(f"half_width must be >= {MIN_HALF_WIDTH}")
    elif half_width is not None:
        raise ConfigurationError(f"half_width only applies to truncated_line, not {kind.value}")

    if kind is DomainKind.TORUS:
        y = -np.pi + 2 * np.pi * np.arange(n) / n
        w = np.full(n, 2 * np.pi / n)
        return Grid(kind, n, _frozen(y), _frozen(w), Boundary.PERIODIC, "fourier")

    if kind is DomainKind.TRUNCATED_LINE:
        L = float(half_width)
        h = 2 * L / (n - 1)
        y = -L + h * np.arange(n)
        y[-1] = L
        w = np.full(n, h)
        w[0] = w[-1] = h / 2
        return Grid(kind, n, _frozen(y), _frozen(w), Boundary.DIRICHLET, "sine", half_width=L)

    scheme = (scheme or "fd").lower()
    if scheme == "fd":
        h = 2.0 / (n - 1)
        y = -1.0 + h * np.arange(n)
        y[-1] = 1.0
        w = np.full(n, h)
        w[0] = w[-1] = h / 2
        return Grid(kind, n, _frozen(y), _frozen(w), Boundary.DIRICHLET, "fd")
    if scheme == "chebyshev":
        y, D = _chebyshev(n)
        D2 = D @ D
        return Grid(kind, n, _frozen(y), _frozen(_clenshaw_curtis(n)), Boundary.DIRICHLET,
                    "chebyshev", cheb_d1=_frozen(D), cheb_d2=_frozen(D2))
    raise ConfigurationError(f"unknown channel scheme {scheme!r}")


# -- spectral helpers -------------------------------------------------------

def fourier_wavenumbers(grid: Grid) -> np.ndarray:
    return np.fft.fftfreq(grid.n, 1.0 / grid.n)


def sine_wavenumbers(grid: Grid) -> np.ndarray:
    """Wavenumbers m*pi/(2L), m = 1..n-2, of the Dirichlet sine basis."""
    return np.arange(1, grid.n - 1) * np.pi / grid.length


def sine_coefficients(grid: Grid, f: np.ndarray) -> np.ndarray:
    return sfft.dst(f[1:-1], type=1, norm="ortho")


def from_sine_coefficients(grid: Grid, b: np.ndarray) -> np.ndarray:
    out = np.zeros(grid.n, dtype=complex)
    out[1:-1] = sfft.dst(b, type=1, norm="ortho")
    return out


# -- differentiation and quadrature -----------------------------------------

def derivative(grid: Grid, f, order: int = 1) -> np.ndarray:
    """First or second y-derivative of a field.

    On Dirichlet grids the second derivative is returned with zero boundary
    values, matching the wall conditions f = f'' = 0.
    """
    if order not in (1, 2):
        raise ConfigurationError(f"derivative order must be 1 or 2, got {order!r}")
    f = np.asarray(f, dtype=complex)
    if f.shape != (grid.n,):
        raise ConfigurationError("field does not conform to grid")

    if grid.scheme == "fourier":
        m = fourier_wavenumbers(grid)
        c = np.fft.fft(f)
        if order == 1:
            mult = 1j * m
            if grid.n % 2 == 0:
                mult[grid.n // 2] = 0.0
        else:
            mult = -(m**2)
        return np.fft.ifft(mult * c)

    if grid.scheme == "sine":
        b = sine_coefficients(grid, f)
        kappa = sine_wavenumbers(grid)
        if order == 2:
            return from_sine_coefficients(grid, -(kappa**2) * b)
        # derivative of the sine series is a cosine series -> DCT-I
        x = np.zeros(grid.n, dtype=complex)
        x[1:-1] = b * kappa * np.sqrt(2.0 / (grid.n - 1)) / 2
        return sfft.dct(x, type=1)

    if grid.scheme == "fd":
        h = grid.spacing
        out = np.zeros_like(f)
        if order == 1:
            out[1:-1] = (f[2:] - f[:-2]) / (2 * h)
            out[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
            out[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
        else:
            out[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / h**2
        return out

    # chebyshev
    if order == 1:
        return grid.cheb_d1 @ f
    out = grid.cheb_d2 @ f
    out[0] = out[-1] = 0.0
    return out


def inner_product(grid: Grid, f, g) -> complex:
    """Quadrature approximation of the integral of f * conj(g) over the domain."""
    f = np.asarray(f, dtype=complex)
    g = np.asarray(g, dtype=complex)
    w = grid.quadrature_weights
    # explicit real arithmetic: swapping f and g then only flips the sign of
    # the imaginary products, so <f,g> == conj(<g,f>) bit for bit
    re = np.sum(w * (f.real * g.real + f.imag * g.imag))
    im = np.sum(w * (f.imag * g.real - f.real * g.imag))
    return complex(re, im)


def l2_norm(grid: Grid, f) -> float:
    return float(np.sqrt(max(inner_product(grid, f, f).real, 0.0)))


def h1_seminorm(grid: Grid, f) -> float:
    """||f'||_2, computed in the form that matches each scheme's diffusion operator.

    Fourier and sine grids use Parseval on the spectral coefficients; the
    finite-difference channel uses forward differences, which equals
    -<D2 f, f> exactly for Dirichlet data.
    """
    f = np.asarray(f, dtype=complex)
    if grid.scheme == "fourier":
        c = np.fft.fft(f) / grid.n
        m = fourier_wavenumbers(grid)
        return float(np.sqrt(2 * np.pi * np.sum(m**2 * np.abs(c) ** 2)))
    if grid.scheme == "sine":
        b = sine_coefficients(grid, f)
        return float(np.sqrt(grid.spacing * np.sum(sine_wavenumbers(grid) ** 2 * np.abs(b) ** 2)))
    if grid.scheme == "fd":
        return float(np.sqrt(np.sum(np.abs(np.diff(f)) ** 2) / grid.spacing))
    return l2_norm(grid, derivative(grid, f, 1))


def stiffness_and_mass(grid: Grid):
    """Dense matrices (K, M) over the free unknowns with f^H K f = ||f'||^2 and
    f^H M f = ||f||^2, as computed by h1_seminorm and l2_norm.

    The free unknowns are all points on the torus and the interior points on
    Dirichlet grids; ``unknowns`` is returned as an index array.
    """
    n = grid.n
    if grid.scheme == "fourier":
        m = fourier_wavenumbers(grid)
        F = np.fft.fft(np.eye(n), axis=0) / n
        K = 2 * np.pi * (F.conj().T * m**2) @ F
        K = (K + K.conj().T).real / 2
        return K, np.diag(grid.quadrature_weights.copy()), np.arange(n)
    idx = np.arange(1, n - 1)
    M = np.diag(grid.quadrature_weights[idx])
    if grid.scheme == "fd":
        h = grid.spacing
        K = (2 * np.eye(n - 2) - np.eye(n - 2, k=1) - np.eye(n - 2, k=-1)) / h
        return K, M, idx
    if grid.scheme == "sine":
        S = sfft.dst(np.eye(n - 2), type=1, norm="ortho", axis=0)
        K = S.T @ np.diag(grid.spacing * sine_wavenumbers(grid) ** 2) @ S
        return (K + K.T) / 2, M, idx
    D = grid.cheb_d1[:, idx]
    K = D.T @ (grid.quadrature_weights[:, None] * D)
    return (K + K.T) / 2, M, idx
