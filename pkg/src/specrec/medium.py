"""Image formation in an attenuating medium and its algebraic inverse.

Per pixel and per band, the apparent radiance is a convex combination of the
inherent radiance and the backscatter-at-infinity, weighted by exp(-c*z):

    F = exp(-c*z) * L + (1 - exp(-c*z)) * B

``invert_model`` solves this exactly for L given (c, B); ``rte_integrate``
integrates the underlying transport ODE numerically and exists to validate
that closed form independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidRangeError, OverflowGuardError, ShapeMismatchError
from .spectral import Spectrum, SpectralGrid, require_same_grid

#: Default ceiling on c*z for inversion; exp(30) ~ 1e13 already amplifies
#: float32 cube quantization past any useful tolerance.
DEFAULT_CZ_GUARD = 30.0

IMAGE_KINDS = ("inherent", "apparent")


@dataclass(frozen=True, eq=False)
class MediumParams:
    """Per-band beam attenuation c (1/m, strictly positive) and backscatter B (>= 0)."""

    grid: SpectralGrid
    c: Spectrum
    B: Spectrum

    def __post_init__(self):
        require_same_grid(self, self.c, self.B)
        if np.any(self.c.values <= 0):
            raise InvalidRangeError("attenuation c must be strictly positive per band")
        if np.any(self.B.values < 0):
            raise InvalidRangeError("backscatter B must be non-negative per band")


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel distance to the scene (meters), strictly positive."""

    z: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=np.float64, copy=True)
        if z.ndim != 2:
            raise ShapeMismatchError(f"depth map must be 2-D, got shape {z.shape}")
        if not np.all(np.isfinite(z)) or np.any(z <= 0):
            raise InvalidRangeError("depths must be finite and > 0")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def height(self) -> int:
        return self.z.shape[0]

    @property
    def width(self) -> int:
        return self.z.shape[1]


@dataclass(frozen=True, eq=False)
class SpectralImage:
    """Per-pixel spectral cube, shape (height, width, n_bands), tagged by kind."""

    grid: SpectralGrid
    cube: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in IMAGE_KINDS:
            raise InvalidRangeError(f"kind must be one of {IMAGE_KINDS}, got {self.kind!r}")
        cube = np.array(self.cube, dtype=np.float64, copy=True)
        if cube.ndim != 3 or cube.shape[2] != self.grid.n_bands:
            raise ShapeMismatchError(
                f"cube must have shape (H, W, {self.grid.n_bands}), got {cube.shape}"
            )
        if not np.all(np.isfinite(cube)):
            raise InvalidRangeError("cube values must be finite")
        cube.setflags(write=False)
        object.__setattr__(self, "cube", cube)

    @property
    def height(self) -> int:
        return self.cube.shape[0]

    @property
    def width(self) -> int:
        return self.cube.shape[1]


def _check_shapes(img: SpectralImage, depth: DepthMap, m: MediumParams):
    require_same_grid(img, m)
    if (img.height, img.width) != (depth.height, depth.width):
        raise ShapeMismatchError(
            f"image is {img.height}x{img.width} but depth map is "
            f"{depth.height}x{depth.width}"
        )


def forward_model(L: SpectralImage, depth: DepthMap, m: MediumParams) -> SpectralImage:
    """Apparent image from inherent radiance, depth, and medium parameters."""
    _check_shapes(L, depth, m)
    t = np.exp(-m.c.values[None, None, :] * depth.z[:, :, None])
    F = t * L.cube + (1.0 - t) * m.B.values[None, None, :]
    return SpectralImage(L.grid, F, "apparent")


def invert_model(
    F: SpectralImage,
    depth: DepthMap,
    m: MediumParams,
    cz_guard: float = DEFAULT_CZ_GUARD,
) -> SpectralImage:
    """Exact algebraic inverse of the forward model: L = exp(c*z)*F + (1-exp(c*z))*B.

    Raises OverflowGuardError when any pixel-band has c*z above ``cz_guard``;
    exp(c*z) amplifies measurement error by that factor, so saturating
    silently would corrupt downstream comparisons.
    """
    _check_shapes(F, depth, m)
    cz = m.c.values[None, None, :] * depth.z[:, :, None]
    worst = float(np.max(cz))
    if worst > cz_guard:
        n_bad = int(np.count_nonzero(cz > cz_guard))
        raise OverflowGuardError(
            f"c*z reaches {worst:.3g} (> guard {cz_guard:.3g}) on {n_bad} pixel-bands"
        )
    e = np.exp(cz)
    L = e * F.cube + (1.0 - e) * m.B.values[None, None, :]
    return SpectralImage(F.grid, L, "inherent")


def rte_integrate(Q0: float, Qplus: float, c: float, z: float, steps: int) -> float:
    """Integrate dQ/dz = Qplus - c*Q from 0 to z with classical 4th-order steps.

    Converges at O(h^4) to exp(-c*z)*Q0 + (1 - exp(-c*z))*Qplus/c, the closed
    form the rest of the package relies on.
    """
    if c <= 0:
        raise InvalidRangeError("c must be > 0")
    if z <= 0:
        raise InvalidRangeError("z must be > 0")
    if steps < 1:
        raise InvalidRangeError("steps must be >= 1")
    h = z / steps
    q = float(Q0)
    for _ in range(steps):
        k1 = Qplus - c * q
        k2 = Qplus - c * (q + 0.5 * h * k1)
        k3 = Qplus - c * (q + 0.5 * h * k2)
        k4 = Qplus - c * (q + h * k3)
        q += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return q
