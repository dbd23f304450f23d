"""Derivative fields and majority-consensus recovery of the medium.

On any pixel set where the inherent radiance is locally constant and depth
varies, the points (F_i, dF_i/dz_i) fall on the line

    dF/dz = c*B - c*F

so a line supported by more than half of all image pixels is unique and
identifies (c, B) at that band even when the set itself is unknown. The
consensus search enumerates a deterministic family of 2-point hypotheses for
small inputs (disjoint pairs across the x-sorted order: any strict majority
of inliers leaves at least one all-inlier pair) and seeded random pairs for
large inputs, then polishes with least squares over the inliers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    AtypicalSceneError,
    InvalidRangeError,
    NoConsensusError,
    NonPhysicalError,
    NonPositiveRatioError,
    ShapeMismatchError,
    TooFewEligibleError,
    TooSmallImageError,
)
from .medium import DepthMap, SpectralImage
from .spectral import SpectralGrid, require_same_grid

DEFAULT_EPS_Z = 1e-9
_ENUM_LIMIT = 2000  # above this, hypothesis sampling replaces enumeration
_EXHAUSTIVE_LIMIT = 400
_N_RANDOM_HYPOTHESES = 128  # miss probability < 0.75^128 ~ 1e-16 for any strict majority


def _unit_direction(direction) -> tuple:
    if isinstance(direction, str):
        if direction == "x":
            return (1.0, 0.0)
        if direction == "y":
            return (0.0, 1.0)
        raise InvalidRangeError(f"direction must be 'x', 'y', or a vector, got {direction!r}")
    dx, dy = float(direction[0]), float(direction[1])
    n = math.hypot(dx, dy)
    if n == 0.0:
        raise InvalidRangeError("direction vector must be nonzero")
    return (dx / n, dy / n)


def _d1(a: np.ndarray, axis: int) -> np.ndarray:
    """First difference per unit pixel step along ``axis``.

    Interior points use a 4th-order stencil; this keeps the slope bias on
    exponential-in-position fields at (c*dz)^4/30 instead of (c*dz)^2/6,
    which the exact-recovery tolerances require. Offset-1 points fall back
    to plain central, borders to one-sided differences.
    """
    b = np.moveaxis(a, axis, 0)
    out = np.empty_like(b)
    n = b.shape[0]
    if n < 3:
        raise TooSmallImageError("need at least 3 samples along the differencing axis")
    if n >= 5:
        out[2:-2] = (8.0 * (b[3:-1] - b[1:-3]) - (b[4:] - b[:-4])) / 12.0
        out[1] = 0.5 * (b[2] - b[0])
        out[-2] = 0.5 * (b[-1] - b[-3])
    else:
        out[1:-1] = 0.5 * (b[2:] - b[:-2])
    out[0] = b[1] - b[0]
    out[-1] = b[-1] - b[-2]
    return np.moveaxis(out, 0, axis)


def _d2(a: np.ndarray, axis: int) -> np.ndarray:
    """Second central difference along ``axis``, shifted stencil at borders."""
    b = np.moveaxis(a, axis, 0)
    out = np.empty_like(b)
    n = b.shape[0]
    if n < 3:
        raise TooSmallImageError("need at least 3 samples along the differencing axis")
    out[1:-1] = b[2:] - 2.0 * b[1:-1] + b[:-2]
    out[0] = b[0] - 2.0 * b[1] + b[2]
    out[-1] = b[-1] - 2.0 * b[-2] + b[-3]
    return np.moveaxis(out, 0, axis)


@dataclass(frozen=True, eq=False)
class DerivativeField:
    """Directional derivatives of a cube and its depth map, per unit pixel step."""

    direction: tuple
    dF: np.ndarray  # (H, W, K)
    dz: np.ndarray  # (H, W)
    d2F: np.ndarray | None = None
    d2z: np.ndarray | None = None


def differentiate(
    F: SpectralImage,
    depth: DepthMap,
    direction,
    second: bool = False,
) -> DerivativeField:
    """Directional derivative field of radiance and depth in image coordinates.

    The direction is 'x', 'y', or any nonzero vector (normalized). Central
    differences interior, one-sided at borders; exact on fields affine
    (first) and quadratic (second) in pixel position.
    """
    if (F.height, F.width) != (depth.height, depth.width):
        raise ShapeMismatchError("image and depth dimensions disagree")
    dx, dy = _unit_direction(direction)
    if dx != 0.0 and F.width < 3:
        raise TooSmallImageError(f"width {F.width} < 3")
    if dy != 0.0 and F.height < 3:
        raise TooSmallImageError(f"height {F.height} < 3")

    cube, z = F.cube, depth.z
    dF = np.zeros_like(cube)
    dz = np.zeros_like(z)
    Dx_cube = _d1(cube, 1) if dx != 0.0 else None
    Dy_cube = _d1(cube, 0) if dy != 0.0 else None
    if dx != 0.0:
        dF += dx * Dx_cube
        dz += dx * _d1(z, 1)
    if dy != 0.0:
        dF += dy * Dy_cube
        dz += dy * _d1(z, 0)

    d2F = d2z = None
    if second:
        d2F = np.zeros_like(cube)
        d2z = np.zeros_like(z)
        if dx != 0.0:
            d2F += dx * dx * _d2(cube, 1)
            d2z += dx * dx * _d2(z, 1)
        if dy != 0.0:
            d2F += dy * dy * _d2(cube, 0)
            d2z += dy * dy * _d2(z, 0)
        if dx != 0.0 and dy != 0.0:
            d2F += 2.0 * dx * dy * _d1(Dy_cube, 1)
            d2z += 2.0 * dx * dy * _d1(_d1(z, 0), 1)
    return DerivativeField((dx, dy), dF, dz, d2F, d2z)


# -- consensus line fitting ---------------------------------------------------


class LineFit(NamedTuple):
    slope: float
    intercept: float
    inliers: np.ndarray  # indices into the original point order


def _ls_line(x: np.ndarray, y: np.ndarray):
    xm, ym = x.mean(), y.mean()
    dxv = x - xm
    sxx = float(np.dot(dxv, dxv))
    if sxx == 0.0:
        return None
    slope = float(np.dot(dxv, y - ym)) / sxx
    return slope, float(ym - slope * xm)


def _best_hypothesis(xs, ys, pairs, tol, stop_at=None):
    """Max-support 2-point hypothesis, first occurrence on ties.

    With ``stop_at`` set (the majority threshold), evaluation stops at the
    first block containing a hypothesis that reaches it; any such line is the
    unique majority line, so the scan order only affects runtime.
    """
    if len(pairs) == 0:
        return None, -1
    i, j = pairs[:, 0], pairs[:, 1]
    dx = xs[j] - xs[i]
    keep = dx != 0.0
    if not np.any(keep):
        return None, -1
    i, j, dx = i[keep], j[keep], dx[keep]
    m = (ys[j] - ys[i]) / dx
    b = ys[i] - m * xs[i]
    best, best_count = None, -1
    block = 512
    for s in range(0, len(m), block):
        mb = m[s : s + block, None]
        bb = b[s : s + block, None]
        counts = (np.abs(ys[None, :] - (mb * xs[None, :] + bb)) <= tol).sum(axis=1)
        k = int(np.argmax(counts))
        if counts[k] > best_count:
            best_count = int(counts[k])
            best = (float(m[s + k]), float(b[s + k]))
        if stop_at is not None and best_count >= stop_at:
            break
    return best, best_count


def majority_line_fit(
    points,
    min_support: int,
    tol: float,
    seed: int = 0,
) -> LineFit:
    """Find the line passing within ``tol`` (vertical distance) of at least
    ``min_support`` points; with min_support > N/2 such a line is unique when
    it exists. Deterministic given the seed; least-squares polished over the
    inlier set. Raises NoConsensusError when no line reaches the support.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidRangeError(f"points must be (N, 2), got {pts.shape}")
    n = len(pts)
    if min_support < 2:
        raise InvalidRangeError("min_support must be >= 2")
    if n < min_support:
        raise InvalidRangeError(f"{n} points cannot reach support {min_support}")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    xs, ys = pts[order, 0], pts[order, 1]

    if n <= _ENUM_LIMIT:
        # disjoint pairs across the x-sorted order: any strict majority of
        # inliers leaves at least one all-inlier pair, and the x-spread keeps
        # 2-point hypotheses stable under noise
        half = n // 2
        pairs = np.column_stack(
            [np.arange(half, dtype=np.intp), np.arange(half, dtype=np.intp) + half]
        )
    else:
        rng = np.random.default_rng(seed)
        half = n // 2
        a = rng.integers(0, n - half, size=_N_RANDOM_HYPOTHESES)
        wide = np.column_stack([a, a + half])  # large-x-spread sample
        u = rng.integers(0, n, size=_N_RANDOM_HYPOTHESES)
        v = rng.integers(0, n, size=_N_RANDOM_HYPOTHESES)
        v = np.where(u == v, (v + half) % n, v)
        pairs = np.vstack([wide, np.column_stack([u, v])]).astype(np.intp)
    best, best_count = _best_hypothesis(xs, ys, pairs, tol, stop_at=min_support)

    if best_count < min_support and n <= _EXHAUSTIVE_LIMIT:
        iu, ju = np.triu_indices(n, k=1)
        best, best_count = _best_hypothesis(
            xs, ys, np.column_stack([iu, ju]).astype(np.intp), tol, stop_at=min_support
        )
    if best is None or best_count < min_support:
        raise NoConsensusError(
            f"best hypothesis support {max(best_count, 0)} < required {min_support}"
        )

    slope, intercept = best
    inl = np.abs(ys - (slope * xs + intercept)) <= tol
    # least-squares / recount to a fixed point; 2-point hypotheses start
    # tilted under noise and a bounded iteration count keeps this deterministic
    for _ in range(32):
        if inl.sum() < 2:
            break
        fit = _ls_line(xs[inl], ys[inl])
        if fit is None:
            break
        slope, intercept = fit
        new_inl = np.abs(ys - (slope * xs + intercept)) <= tol
        if np.array_equal(new_inl, inl):
            break
        inl = new_inl
    support = int(inl.sum())
    if support < min_support:
        raise NoConsensusError(
            f"inlier support {support} < required {min_support} after refinement"
        )
    return LineFit(slope, intercept, np.sort(order[inl]))


def _robust_scale(x: np.ndarray, y: np.ndarray) -> float:
    """Noise scale of y around the local line, from consecutive-in-x triples.

    Each triple contributes the residual of the middle point against linear
    interpolation of its neighbours; that residual is zero for any collinear
    triple irrespective of x spacing, so on exact majority-collinear data the
    median sits at round-off while under noise it tracks sigma (after
    normalizing each triple's stencil variance and the Gaussian MAD constant).
    """
    if len(y) < 3:
        return 0.0
    o = np.argsort(x, kind="stable")
    xs, ys = x[o], y[o]
    span = xs[2:] - xs[:-2]
    ok = span > 0
    if not np.any(ok):
        return 0.0
    t = (xs[1:-1][ok] - xs[:-2][ok]) / span[ok]
    r = ys[1:-1][ok] - ((1.0 - t) * ys[:-2][ok] + t * ys[2:][ok])
    stencil = np.sqrt(1.0 + (1.0 - t) ** 2 + t ** 2)
    return float(np.median(np.abs(r / stencil)) / 0.6744897501960817)


# -- medium estimation from a recovery set -----------------------------------


@dataclass(frozen=True, eq=False)
class RecoveryBandEstimate:
    """One band's consensus estimate and its fit diagnostics."""

    band: int
    c_hat: float
    B_hat: float
    inliers: np.ndarray  # flat pixel indices (row-major)
    slope: float
    intercept: float
    support: int
    tol: float
    residual_scale: float
    min_f_gap: float


def required_support(n_pixels: int) -> int:
    """ceil(N/2) + 1: strict majority of the full image pixel count."""
    return (n_pixels + 1) // 2 + 1


def estimate_from_recovery_set(
    F: SpectralImage,
    depth: DepthMap,
    direction,
    band: int,
    eps_z: float = DEFAULT_EPS_Z,
    tol: float | None = None,
    seed: int = 0,
    field: DerivativeField | None = None,
) -> RecoveryBandEstimate:
    """Estimate (c, B) at one band from the majority line through (F, dF/dz).

    Pixels with |dz| <= eps_z are ineligible, but the support threshold stays
    ceil(N/2)+1 of the full pixel count. The inlier tolerance defaults to
    max(1e-9, 3 * robust noise scale of dF/dz).
    """
    if not 0 <= band < F.grid.n_bands:
        raise InvalidRangeError(f"band {band} out of range")
    if field is None:
        field = differentiate(F, depth, direction)
    n_pixels = F.width * F.height
    min_support = required_support(n_pixels)
    dz = field.dz.ravel()
    eligible = np.flatnonzero(np.abs(dz) > eps_z)
    if len(eligible) < min_support:
        raise TooFewEligibleError(
            f"{len(eligible)} pixels with |dz| > {eps_z:.3g}, need {min_support}"
        )
    x = F.cube[:, :, band].ravel()[eligible]
    y = field.dF[:, :, band].ravel()[eligible] / dz[eligible]
    if tol is None:
        tol = max(1e-9, 3.0 * _robust_scale(x, y))
    fit = majority_line_fit(np.column_stack([x, y]), min_support, tol, seed=seed)
    if fit.slope >= 0.0:
        raise NonPhysicalError(f"consensus slope {fit.slope:.3g} implies c <= 0")
    c_hat = -fit.slope
    B_hat = fit.intercept / c_hat
    xi = x[fit.inliers]
    yi = y[fit.inliers]
    resid = yi - (fit.slope * xi + fit.intercept)
    min_gap = float(np.min(np.diff(np.sort(xi)))) if len(xi) > 1 else math.inf
    return RecoveryBandEstimate(
        band=band,
        c_hat=c_hat,
        B_hat=B_hat,
        inliers=eligible[fit.inliers],
        slope=fit.slope,
        intercept=fit.intercept,
        support=len(fit.inliers),
        tol=tol,
        residual_scale=float(np.sqrt(np.mean(resid * resid))),
        min_f_gap=min_gap,
    )


@dataclass(frozen=True, eq=False)
class RecoverySetFit:
    """Per-band consensus fits over a whole cube; failed bands are flagged."""

    grid: SpectralGrid
    direction: tuple
    c_hat: np.ndarray
    B_hat: np.ndarray
    slope: np.ndarray
    intercept: np.ndarray
    support: np.ndarray
    residual_scale: np.ndarray
    min_f_gap: np.ndarray
    tol: np.ndarray
    degenerate: np.ndarray
    failures: tuple
    inliers: tuple

    def n_degenerate(self) -> int:
        return int(np.count_nonzero(self.degenerate))


def fit_recovery_set(
    F: SpectralImage,
    depth: DepthMap,
    direction,
    eps_z: float = DEFAULT_EPS_Z,
    tol: float | None = None,
    seed: int = 0,
    threads: int = 1,
) -> RecoverySetFit:
    """Run the per-band consensus estimate across all bands.

    Bands where consensus fails (or the slope is non-physical) are flagged
    with the failure message; the rest are estimated independently. Results
    do not depend on the thread count.
    """
    field = differentiate(F, depth, direction)
    n = F.grid.n_bands

    def one(band: int):
        try:
            return estimate_from_recovery_set(
                F, depth, direction, band, eps_z=eps_z, tol=tol, seed=seed, field=field
            )
        except (NoConsensusError, NonPhysicalError, TooFewEligibleError) as exc:
            return exc

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(n)))
    else:
        results = [one(b) for b in range(n)]

    c = np.zeros(n)
    B = np.zeros(n)
    slope = np.zeros(n)
    intercept = np.zeros(n)
    support = np.zeros(n, dtype=np.int64)
    rscale = np.zeros(n)
    gap = np.full(n, math.inf)
    tols = np.zeros(n)
    degenerate = np.zeros(n, dtype=bool)
    failures = [""] * n
    inliers = [np.empty(0, dtype=np.intp)] * n
    for b, r in enumerate(results):
        if isinstance(r, Exception):
            degenerate[b] = True
            failures[b] = f"{type(r).__name__}: {r}"
            continue
        c[b], B[b] = r.c_hat, r.B_hat
        slope[b], intercept[b] = r.slope, r.intercept
        support[b] = r.support
        rscale[b] = r.residual_scale
        gap[b] = r.min_f_gap
        tols[b] = r.tol
        inliers[b] = r.inliers
    return RecoverySetFit(
        grid=F.grid,
        direction=_unit_direction(direction),
        c_hat=c,
        B_hat=B,
        slope=slope,
        intercept=intercept,
        support=support,
        residual_scale=rscale,
        min_f_gap=gap,
        tol=tols,
        degenerate=degenerate,
        failures=tuple(failures),
        inliers=tuple(inliers),
    )


# -- equal-depth pair estimator ------------------------------------------------


def necessity_estimator(
    F: SpectralImage,
    L: SpectralImage,
    depth: DepthMap,
    i1,
    i2,
    band: int,
    eps_z: float = DEFAULT_EPS_Z,
    eps_f: float = 1e-12,
) -> tuple:
    """(c, B) at one band from two equal-depth pixels with distinct inherent radiance.

    Uses F1 - F2 = exp(-c*z) * (L1 - L2), then substitutes c back into the
    image formation model at pixel 1 to get B. Raises AtypicalSceneError when
    the radiances coincide (the pair carries no information about c).
    """
    require_same_grid(F, L)
    (x1, y1), (x2, y2) = (i1, i2)
    z1, z2 = depth.z[y1, x1], depth.z[y2, x2]
    if abs(z1 - z2) > eps_z:
        raise InvalidRangeError(f"pixels must share depth: |dz| = {abs(z1 - z2):.3g}")
    L1, L2 = L.cube[y1, x1, band], L.cube[y2, x2, band]
    if abs(L1 - L2) <= eps_f:
        raise AtypicalSceneError("equal-depth pixels have equal inherent radiance")
    F1, F2 = F.cube[y1, x1, band], F.cube[y2, x2, band]
    ratio = (F1 - F2) / (L1 - L2)
    if not ratio > 0:
        raise NonPositiveRatioError(f"(F1-F2)/(L1-L2) = {ratio:.3g} must be > 0")
    z = 0.5 * (z1 + z2)
    c = -math.log(ratio) / z
    den = -math.expm1(-c * z)
    B = (F1 - math.exp(-c * z) * L1) / den
    return c, B


def find_equal_depth_pair(
    L: SpectralImage,
    depth: DepthMap,
    band: int,
    eps_z: float = DEFAULT_EPS_Z,
    eps_f: float = 1e-12,
) -> tuple:
    """First (in depth order) equal-depth pixel pair with distinct radiance.

    Scans depth-sorted pixels in stable order; within each equal-depth run,
    returns the extremal-radiance pair if its gap exceeds eps_f. Raises
    AtypicalSceneError when no such pair exists anywhere (radiance is then a
    function of depth alone).
    """
    z = depth.z.ravel()
    lv = L.cube[:, :, band].ravel()
    order = np.argsort(z, kind="stable")
    n = len(order)
    start = 0
    while start < n - 1:
        stop = start + 1
        while stop < n and z[order[stop]] - z[order[start]] <= eps_z:
            stop += 1
        if stop - start >= 2:
            grp = order[start:stop]
            k_lo = grp[np.argmin(lv[grp])]
            k_hi = grp[np.argmax(lv[grp])]
            if abs(lv[k_hi] - lv[k_lo]) > eps_f:
                w = L.width
                return (
                    (int(k_lo % w), int(k_lo // w)),
                    (int(k_hi % w), int(k_hi // w)),
                )
        start = stop
    raise AtypicalSceneError(
        "no equal-depth pixel pair with distinct inherent radiance exists"
    )
