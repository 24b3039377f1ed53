"""Geometry of the unit circle, sampled fields, interaction kernels and the
quadrature-based norms, convolutions and divergences built on them.

Angles live on ``[-pi, pi)``; the seam point ``pi`` is identified with
``-pi``. Fields are stored as ``m`` samples at the nodes
``x_k = -pi + k * 2*pi/m`` and integrated with the rectangle rule, which is
exact for trigonometric polynomials of degree below ``m`` and coincides with
the discrete circular convolution sum.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from numbers import Real

import numpy as np

from .errors import (
    GridMismatchError,
    InvalidArgumentError,
    InvalidInputError,
    InvalidParameterError,
)

TWO_PI = 2.0 * np.pi

#: Lower bound applied to normalized probabilities in KL denominators.
KL_FLOOR = 1e-12


def wrap_angle(x):
    """Wrap angle(s) to ``[-pi, pi)``.

    Works on scalars and arrays; scalars come back as Python floats.

    >>> wrap_angle(3 * np.pi / 2)
    -1.5707963267948966
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("wrap_angle requires finite input")
    out = np.mod(arr + np.pi, TWO_PI) - np.pi
    # fmod rounding can land exactly on +pi for inputs just below a seam
    out = np.where(out >= np.pi, -np.pi, out)
    if out.ndim == 0:
        return float(out)
    return out


def wrapped_distance(xi, xj):
    """Signed shorter-arc displacement ``wrap(xi - xj)`` in ``[-pi, pi)``."""
    return wrap_angle(np.asarray(xi, dtype=float) - np.asarray(xj, dtype=float))


@dataclass(frozen=True)
class RingGrid:
    """Uniform periodic grid with ``m`` cells on ``[-pi, pi)``."""

    m: int = 256

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise InvalidParameterError(f"grid needs an integer m >= 2, got {self.m!r}")
        object.__setattr__(self, "m", int(self.m))

    @property
    def cell_width(self) -> float:
        return TWO_PI / self.m

    h = cell_width

    @property
    def x(self) -> np.ndarray:
        return -np.pi + self.cell_width * np.arange(self.m)

    def offsets(self) -> np.ndarray:
        """Wrapped lag ``k * h`` for ``k = 0..m-1`` (lag ``m/2`` maps to ``-pi``)."""
        return wrap_angle(self.cell_width * np.arange(self.m))

    def field(self, values) -> "RingField":
        return RingField(self, values)

    def zeros(self) -> "RingField":
        return RingField(self, np.zeros(self.m))

    def constant(self, c: float) -> "RingField":
        return RingField(self, np.full(self.m, float(c)))


def _check_same_grid(*fields: "RingField") -> RingGrid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(
                f"fields live on different grids (m={grid.m} vs m={f.grid.m})"
            )
    return grid


@dataclass
class RingField:
    """Scalar function on the circle sampled at the nodes of ``grid``.

    Only one sample represents the seam, so periodicity holds by
    construction. Supports elementwise arithmetic with scalars and other
    fields on the same grid.
    """

    grid: RingGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 0:
            values = np.full(self.grid.m, float(values))
        if values.shape != (self.grid.m,):
            raise GridMismatchError(
                f"expected {self.grid.m} samples, got shape {values.shape}"
            )
        self.values = values

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def integral(self) -> float:
        return float(self.grid.cell_width * self.values.sum())

    def copy(self) -> "RingField":
        return RingField(self.grid, self.values.copy())

    def _coerce(self, other):
        if isinstance(other, RingField):
            _check_same_grid(self, other)
            return other.values
        if isinstance(other, Real):
            return float(other)
        return NotImplemented

    def _binary(self, other, op):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return RingField(self.grid, op(self.values, o))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return RingField(self.grid, -self.values)

    def __len__(self):
        return self.grid.m


# ---------------------------------------------------------------------------
# kernels


class Kernel:
    """Pairwise interaction velocity ``z -> f(z)`` on ``[-pi, pi]``.

    ``__call__`` is the bare formula. ``periodic`` evaluates the periodic
    extension on wrapped lags; at the seam, where odd kernels jump, it uses
    the midpoint ``(f(-pi) + f(pi)) / 2`` so that odd kernels stay odd on
    the grid and two antipodal agents exert no net force on each other.
    """

    def __call__(self, z):
        raise NotImplementedError

    def periodic(self, z):
        z = np.asarray(wrap_angle(z), dtype=float)
        out = np.asarray(self(z), dtype=float)
        seam = z == -np.pi
        if np.any(seam):
            mid = 0.5 * (float(self(-np.pi)) + float(self(np.pi)))
            out = np.where(seam, mid, out)
        return out

    def sample(self, grid: RingGrid) -> np.ndarray:
        """Kernel values at the grid lags, in FFT (lag-major) order."""
        return _sampled(self, grid.m).copy()

    def on_grid(self, grid: RingGrid) -> RingField:
        """Kernel as a field over the node positions, for norms and plots."""
        return RingField(grid, self.periodic(grid.x))


@functools.lru_cache(maxsize=64)
def _sampled(kernel: Kernel, m: int) -> np.ndarray:
    samples = kernel.periodic(RingGrid(m).offsets())
    samples.setflags(write=False)
    return samples


@functools.lru_cache(maxsize=64)
def _spectrum(kernel: Kernel, m: int) -> np.ndarray:
    return np.fft.rfft(_sampled(kernel, m))


def morse_kernel(z, G: float = 0.5, L: float = 0.5):
    """Repulsive Morse interaction ``sign(z) * (-G exp(-|z|/L) + exp(-|z|))``.

    Returns 0 at ``z = 0``.
    """
    if not L > 0:
        raise InvalidParameterError(f"Morse length L must be positive, got {L!r}")
    z = np.asarray(z, dtype=float)
    a = np.abs(z)
    out = np.sign(z) * (-G * np.exp(-a / L) + np.exp(-a))
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class MorseKernel(Kernel):
    G: float = 0.5
    L: float = 0.5

    def __post_init__(self):
        if not self.L > 0:
            raise InvalidParameterError(f"Morse length L must be positive, got {self.L!r}")

    def __call__(self, z):
        return morse_kernel(z, self.G, self.L)


@dataclass(frozen=True)
class WindowedKernel(Kernel):
    """``base`` restricted to the sensing window ``|z| <= delta``."""

    base: Kernel
    delta: float

    def __post_init__(self):
        if not (0.0 < self.delta <= np.pi * (1 + 1e-12)):
            raise InvalidParameterError(
                f"sensing radius must lie in (0, pi], got {self.delta!r}"
            )

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        inside = np.abs(z) <= self.delta * (1 + 1e-12)
        out = np.where(inside, self.base(z), 0.0)
        if out.ndim == 0:
            return float(out)
        return out


@dataclass(frozen=True)
class DifferenceKernel(Kernel):
    """Pointwise difference ``first - second`` (used for g and g-tilde)."""

    first: Kernel
    second: Kernel

    def __call__(self, z):
        return np.asarray(self.first(z), dtype=float) - np.asarray(self.second(z), dtype=float)


@dataclass(frozen=True)
class ZeroKernel(Kernel):
    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        if out.ndim == 0:
            return 0.0
        return out


@dataclass(frozen=True, eq=False)
class TabulatedKernel(Kernel):
    """Kernel given by samples, linearly interpolated with period 2*pi.

    Odd symmetry is the caller's responsibility.
    """

    z: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if z.shape != v.shape or z.ndim != 1 or z.size < 2:
            raise InvalidParameterError("tabulated kernel needs matching 1-D z/values")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "values", v)

    def __call__(self, z):
        out = np.interp(z, self.z, self.values, period=TWO_PI)
        if np.ndim(out) == 0:
            return float(out)
        return out


def window_kernel(f: Kernel, delta: float) -> Kernel:
    """Restrict ``f`` to ``[-delta, delta]``; ``delta = pi`` keeps ``f`` on the circle."""
    return WindowedKernel(f, float(delta))


# ---------------------------------------------------------------------------
# calculus on fields


def circular_convolution(kernel: Kernel, rho: RingField) -> RingField:
    """``(k * rho)(x_j) = h * sum_k k(wrap(x_j - y_k)) rho_k`` via FFT."""
    grid = rho.grid
    spec = _spectrum(kernel, grid.m)
    out = np.fft.irfft(spec * np.fft.rfft(rho.values), n=grid.m)
    return RingField(grid, grid.cell_width * out)


def central_difference(v: np.ndarray, h: float) -> np.ndarray:
    """Periodic ``(v[i+1] - v[i-1]) / 2h`` on a raw sample array."""
    out = np.empty_like(v)
    out[1:-1] = v[2:] - v[:-2]
    out[0] = v[1] - v[-1]
    out[-1] = v[0] - v[-2]
    out /= 2.0 * h
    return out


def ddx(u: RingField) -> RingField:
    """Second-order periodic central difference."""
    return RingField(u.grid, central_difference(u.values, u.grid.cell_width))


def convolution_derivative(kernel: Kernel, rho: RingField) -> RingField:
    """Spatial derivative of ``kernel * rho``, computed as ``kernel * rho_x``."""
    return circular_convolution(kernel, ddx(rho))


def lp_norm(u: RingField, p=2) -> float:
    """Rectangle-rule L^p norm on the circle for ``p`` in {1, 2, inf}."""
    v = u.values
    if p == 1:
        return float(u.grid.cell_width * np.abs(v).sum())
    if p == 2:
        return float(np.sqrt(u.grid.cell_width * np.dot(v, v)))
    if p in (np.inf, "inf", "infinity"):
        return float(np.abs(v).max())
    raise InvalidParameterError(f"unsupported norm order p={p!r}; use 1, 2 or inf")


def _normalized(u: RingField, name: str) -> np.ndarray:
    v = u.values
    tol = 1e-9 * max(1.0, float(np.abs(v).max()))
    if v.min() < -tol:
        raise InvalidInputError(f"{name} has negative samples (min {v.min():.3g})")
    v = np.clip(v, 0.0, None)
    mass = u.grid.cell_width * v.sum()
    if not mass > 0:
        raise InvalidInputError(f"{name} has zero total mass")
    return v / mass


def kl_divergence(rho: RingField, rho_d: RingField) -> float:
    """KL divergence of normalized ``rho`` from normalized ``rho_d``.

    Both densities are rescaled to unit integral. ``0 log 0`` counts as 0 and
    the reference density is floored at ``KL_FLOOR`` in the denominator.
    """
    grid = _check_same_grid(rho, rho_d)
    p = _normalized(rho, "rho")
    q = np.maximum(_normalized(rho_d, "rho_d"), KL_FLOOR)
    pos = p > 0
    kl = grid.cell_width * float(np.sum(p[pos] * np.log(p[pos] / q[pos])))
    return max(kl, 0.0)


def von_mises_field(mu: float, k: float, mass: float, grid: RingGrid) -> RingField:
    """Density proportional to ``exp(k cos(x - mu))`` with quadrature mass ``mass``."""
    if k < 0:
        raise InvalidParameterError(f"concentration must be >= 0, got {k!r}")
    if not mass > 0:
        raise InvalidParameterError(f"mass must be positive, got {mass!r}")
    v = np.exp(k * (np.cos(grid.x - mu) - 1.0))
    v *= mass / (grid.cell_width * v.sum())
    return RingField(grid, v)
