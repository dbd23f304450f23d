"""Wavelength discretization, sampled spectra, and quadrature.

Every other module works on top of these two types. A grid fixes a uniform
sampling of the visible interval; a spectrum is a vector of samples bound to
one grid. Integrals are trapezoidal, which is exact on the piecewise-linear
spectra used throughout the synthetic scenes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError, InvalidRangeError

DEFAULT_LAMBDA_MIN = 400.0
DEFAULT_LAMBDA_MAX = 700.0
DEFAULT_N_BANDS = 31


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """Uniform wavelength sampling of [lambda_min, lambda_max], inclusive."""

    lambda_min: float
    lambda_max: float
    n_bands: int

    def __post_init__(self):
        if not (self.lambda_min < self.lambda_max):
            raise InvalidRangeError(
                f"lambda_min must be < lambda_max, got [{self.lambda_min}, {self.lambda_max}]"
            )
        if self.n_bands < 2:
            raise InvalidRangeError(f"n_bands must be >= 2, got {self.n_bands}")
        wl = np.linspace(self.lambda_min, self.lambda_max, self.n_bands)
        wl.setflags(write=False)
        object.__setattr__(self, "_wavelengths", wl)
        h = (self.lambda_max - self.lambda_min) / (self.n_bands - 1)
        object.__setattr__(self, "_spacing", h)
        w = np.full(self.n_bands, h)
        w[0] = w[-1] = 0.5 * h
        w.setflags(write=False)
        object.__setattr__(self, "_trap_weights", w)

    @property
    def wavelengths(self) -> np.ndarray:
        """Band centers in nm, strictly increasing."""
        return self._wavelengths

    @property
    def spacing(self) -> float:
        return self._spacing

    @property
    def trap_weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights (h at interior bands, h/2 at the ends)."""
        return self._trap_weights

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, SpectralGrid):
            return NotImplemented
        return (
            self.lambda_min == other.lambda_min
            and self.lambda_max == other.lambda_max
            and self.n_bands == other.n_bands
        )

    def __hash__(self):
        return hash((self.lambda_min, self.lambda_max, self.n_bands))

    def __repr__(self):
        return f"SpectralGrid({self.lambda_min}, {self.lambda_max}, n_bands={self.n_bands})"


def make_grid(
    lambda_min: float = DEFAULT_LAMBDA_MIN,
    lambda_max: float = DEFAULT_LAMBDA_MAX,
    n_bands: int = DEFAULT_N_BANDS,
) -> SpectralGrid:
    """Build a uniform grid; band k sits at lambda_min + k*(lambda_max-lambda_min)/(n_bands-1)."""
    return SpectralGrid(float(lambda_min), float(lambda_max), int(n_bands))


@dataclass(frozen=True, eq=False)
class Spectrum:
    """A sampled spectral function on a grid. Values must be finite."""

    grid: SpectralGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.shape != (self.grid.n_bands,):
            raise GridMismatchError(
                f"expected {self.grid.n_bands} values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidRangeError("spectrum values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @staticmethod
    def constant(grid: SpectralGrid, value: float) -> "Spectrum":
        return Spectrum(grid, np.full(grid.n_bands, float(value)))

    def __add__(self, other):
        if isinstance(other, Spectrum):
            require_same_grid(self, other)
            return Spectrum(self.grid, self.values + other.values)
        return Spectrum(self.grid, self.values + float(other))

    def __sub__(self, other):
        if isinstance(other, Spectrum):
            require_same_grid(self, other)
            return Spectrum(self.grid, self.values - other.values)
        return Spectrum(self.grid, self.values - float(other))

    def __mul__(self, other):
        if isinstance(other, Spectrum):
            require_same_grid(self, other)
            return Spectrum(self.grid, self.values * other.values)
        return Spectrum(self.grid, self.values * float(other))

    __rmul__ = __mul__


def require_same_grid(*objs) -> SpectralGrid:
    """Raise GridMismatchError unless all arguments share one grid; return it."""
    grid = objs[0].grid
    for o in objs[1:]:
        if o.grid is not grid and o.grid != grid:
            raise GridMismatchError(f"grids differ: {grid} vs {o.grid}")
    return grid


def inner_product(f: Spectrum, g: Spectrum) -> float:
    """Trapezoidal approximation of the integral of f*g over the grid interval.

    Symmetric in its arguments bit-for-bit: the elementwise product commutes
    and the weighted summation order is fixed by the band order.
    """
    grid = require_same_grid(f, g)
    return float(np.dot(f.values * g.values, grid.trap_weights))


def norm(f: Spectrum) -> float:
    """Quadrature L2 norm sqrt(<f, f>)."""
    return float(np.sqrt(inner_product(f, f)))
