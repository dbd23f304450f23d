"""Camera projection onto channel intensities and best-approximation recovery.

A camera integrates a spectrum against each channel sensitivity, producing
one intensity per channel. Recovery of the spectrum from intensities is only
possible up to the span of the sensitivities; the Gram system gives the best
L2 approximation within that span, and everything orthogonal to it is
invisible to the camera. ``null_perturbation`` constructs such an invisible
spectrum explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    IllConditionedGramError,
    InvalidRangeError,
    SingularGramError,
    TrivialComplementError,
)
from .spectral import Spectrum, SpectralGrid, inner_product, norm, require_same_grid

#: Condition number above which a Gram matrix is treated as numerically singular.
SINGULAR_COND = 1e14

#: Default ceiling on acceptable Gram condition numbers for solves.
DEFAULT_COND_BOUND = 1e10


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Channel sensitivities on a shared grid plus their precomputed Gram matrix.

    Construction fails with SingularGramError when the sensitivities are
    (numerically) linearly dependent. The condition number is recorded either
    way; solves check it against ``cond_bound``.
    """

    grid: SpectralGrid
    sensitivities: tuple
    cond_bound: float = DEFAULT_COND_BOUND
    gram: np.ndarray = field(init=False)
    cond: float = field(init=False)

    def __post_init__(self):
        sens = tuple(self.sensitivities)
        if len(sens) < 1:
            raise InvalidRangeError("camera needs at least one channel")
        for s in sens:
            require_same_grid(self, s)
            if np.any(s.values < 0):
                raise InvalidRangeError("sensitivities must be non-negative")
        object.__setattr__(self, "sensitivities", sens)
        n = len(sens)
        gram = np.empty((n, n))
        for j in range(n):
            for k in range(j, n):
                gram[j, k] = gram[k, j] = inner_product(sens[j], sens[k])
        gram.setflags(write=False)
        object.__setattr__(self, "gram", gram)
        cond = float(np.linalg.cond(gram))
        object.__setattr__(self, "cond", cond)
        if not np.isfinite(cond) or cond > SINGULAR_COND:
            raise SingularGramError(
                f"sensitivities are linearly dependent (cond {cond:.3g})"
            )

    @property
    def n_channels(self) -> int:
        return len(self.sensitivities)

    def _check_conditioning(self):
        if self.cond > self.cond_bound:
            raise IllConditionedGramError(
                f"Gram condition number {self.cond:.3g} exceeds bound {self.cond_bound:.3g}"
            )


def project(F: Spectrum, cam: CameraModel) -> np.ndarray:
    """Pixel intensities: one quadrature inner product <F, S_j> per channel."""
    require_same_grid(F, cam)
    return np.array([inner_product(F, s) for s in cam.sensitivities])


def best_approx(P: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Coefficients of the best in-span approximation, solved from Gram @ coeffs = P."""
    P = np.asarray(P, dtype=np.float64)
    if P.shape != (cam.n_channels,):
        raise InvalidRangeError(
            f"expected {cam.n_channels} intensities, got shape {P.shape}"
        )
    cam._check_conditioning()
    try:
        return np.linalg.solve(cam.gram, P)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - caught at construction
        raise SingularGramError(str(exc)) from exc


def reconstruct(coeffs: np.ndarray, cam: CameraModel) -> Spectrum:
    """The spectrum sum_k coeffs[k] * S_k."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (cam.n_channels,):
        raise InvalidRangeError(
            f"expected {cam.n_channels} coefficients, got shape {coeffs.shape}"
        )
    acc = np.zeros(cam.grid.n_bands)
    for a, s in zip(coeffs, cam.sensitivities):
        acc += a * s.values
    return Spectrum(cam.grid, acc)


def residual(F: Spectrum, cam: CameraModel) -> Spectrum:
    """Component of F orthogonal to every sensitivity: F minus its in-span part."""
    require_same_grid(F, cam)
    coeffs = best_approx(project(F, cam), cam)
    return Spectrum(cam.grid, F.values - reconstruct(coeffs, cam).values)


def null_perturbation(cam: CameraModel, seed: int, rel_tol: float = 1e-10) -> Spectrum:
    """A nonzero spectrum the camera cannot see, deterministic in the seed.

    Projects a seeded random spectrum onto the orthogonal complement of the
    sensitivity span (two Gram-Schmidt passes keep the projections at
    round-off). Raises TrivialComplementError when the complement is trivial
    at tolerance, e.g. for the per-band identity camera.
    """
    rng = np.random.default_rng(seed)
    r = Spectrum(cam.grid, rng.standard_normal(cam.grid.n_bands))
    delta = residual(residual(r, cam), cam)
    if norm(delta) <= rel_tol * norm(r):
        raise TrivialComplementError(
            "sensitivity span covers the sampled space; no invisible spectrum exists"
        )
    p = project(delta, cam)
    if np.max(np.abs(p)) > rel_tol * norm(delta):  # pragma: no cover - defensive
        raise TrivialComplementError(
            "could not orthogonalize below tolerance; complement effectively trivial"
        )
    return delta


def identity_camera(grid: SpectralGrid, cond_bound: float = DEFAULT_COND_BOUND) -> CameraModel:
    """One unit boxcar channel per grid band: the lossless per-band camera."""
    sens = []
    for k in range(grid.n_bands):
        v = np.zeros(grid.n_bands)
        v[k] = 1.0
        sens.append(Spectrum(grid, v))
    return CameraModel(grid, tuple(sens), cond_bound)


def gaussian_rgb_camera(
    grid: SpectralGrid,
    centers: tuple = (610.0, 545.0, 465.0),
    sigma: float = 35.0,
    cond_bound: float = DEFAULT_COND_BOUND,
) -> CameraModel:
    """Three Gaussian channels (R, G, B order) with unit peak sensitivity."""
    wl = grid.wavelengths
    sens = tuple(
        Spectrum(grid, np.exp(-0.5 * ((wl - mu) / sigma) ** 2)) for mu in centers
    )
    return CameraModel(grid, sens, cond_bound)
