"""Closed-form medium recovery from pixel groups with known cross-pixel relations.

Six pattern kinds are supported; each determines the per-band medium
parameters (c, B) from two to four apparent-radiance samples, possibly with
directional derivatives. The saturation ratio

    phi(c; z1, z2) = (1 - exp(-c*z1)) / (1 - exp(-c*z2))

is strictly monotone in c for z1 != z2 (negative depth arguments included)
and is inverted numerically by bracketed bisection plus secant polish.

Estimation is per band: a degenerate band (vanishing denominator, ratio
outside the attainable range, non-positive recovered c) is flagged and
zero-filled, and never contaminates its neighbours.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDepthsError,
    GridMismatchError,
    InvalidRangeError,
    OutOfRangeError,
    PatternShapeError,
)
from .medium import DepthMap, SpectralImage
from .spectral import Spectrum, SpectralGrid, require_same_grid

DEFAULT_C_MAX = 50.0
DEFAULT_EPS_Z = 1e-9
_PHI_LO = 1e-8
_BISECT_TOL = 1e-13
_SECANT_STEPS = 3


class PatternKind(enum.IntEnum):
    DARK_PAIR = 1
    TRIPLE = 2
    BOX = 3
    STICKS = 4
    TWO_REGION_DERIV = 5
    ONE_REGION_DERIV2 = 6


PIXELS_PER_KIND = {
    PatternKind.DARK_PAIR: 2,
    PatternKind.TRIPLE: 3,
    PatternKind.BOX: 4,
    PatternKind.STICKS: 4,
    PatternKind.TWO_REGION_DERIV: 2,
    PatternKind.ONE_REGION_DERIV2: 1,
}


@dataclass(frozen=True, eq=False)
class PixelDerivatives:
    """Directional derivatives at one pixel: depth scalars and per-band radiance."""

    dz: float
    dF: Spectrum
    d2z: float | None = None
    d2F: Spectrum | None = None


@dataclass(frozen=True, eq=False)
class PatternInstance:
    """A tagged pixel group; pixels are (x, y) image coordinates.

    Kinds 5 and 6 additionally carry per-pixel derivatives and the direction
    (``"x"``, ``"y"``, or a unit vector) they were taken along.
    """

    kind: PatternKind
    pixels: tuple
    derivatives: tuple | None = None
    direction: object | None = None

    def __post_init__(self):
        kind = PatternKind(self.kind)
        object.__setattr__(self, "kind", kind)
        pixels = tuple((int(x), int(y)) for x, y in self.pixels)
        object.__setattr__(self, "pixels", pixels)
        want = PIXELS_PER_KIND[kind]
        if len(pixels) != want:
            raise PatternShapeError(
                f"{kind.name} needs {want} pixels, got {len(pixels)}"
            )
        if self.derivatives is not None:
            derivs = tuple(self.derivatives)
            object.__setattr__(self, "derivatives", derivs)
            if len(derivs) != len(pixels):
                raise PatternShapeError("one derivative record per pixel required")
            if kind is PatternKind.ONE_REGION_DERIV2:
                d = derivs[0]
                if d.d2z is None or d.d2F is None:
                    raise PatternShapeError(
                        "ONE_REGION_DERIV2 requires second derivatives"
                    )

    def needs_derivatives(self) -> bool:
        return self.kind in (PatternKind.TWO_REGION_DERIV, PatternKind.ONE_REGION_DERIV2)


@dataclass(frozen=True, eq=False)
class MediumEstimate:
    """Per-band (c, B) estimate with diagnostics.

    Degenerate bands hold 0.0 in both spectra and are flagged in
    ``degenerate``; they are never interpolated. ``b_spread`` and
    ``c_spread`` are the max pairwise relative discrepancies of the redundant
    closed forms evaluated per band (0 where a kind has a single form).
    """

    grid: SpectralGrid
    c_hat: Spectrum
    B_hat: Spectrum
    degenerate: np.ndarray
    b_spread: np.ndarray
    c_spread: np.ndarray
    phi_iterations: np.ndarray
    source: str = ""

    def n_degenerate(self) -> int:
        return int(np.count_nonzero(self.degenerate))


# -- the saturation ratio and its inverse -----------------------------------


def _one_minus_exp(a: float) -> float:
    """1 - exp(a), exact near a = 0, -inf once exp(a) overflows."""
    if a > 700.0:
        return -math.inf
    return -math.expm1(a)


def _check_phi_depths(z1: float, z2: float, eps_z: float):
    if abs(z1 - z2) < eps_z:
        raise DegenerateDepthsError(f"|z1 - z2| = {abs(z1 - z2):.3g} < {eps_z:.3g}")
    if abs(z1) < eps_z or abs(z2) < eps_z:
        raise DegenerateDepthsError("z1 and z2 must be nonzero")


def phi(c: float, z1: float, z2: float, eps_z: float = DEFAULT_EPS_Z) -> float:
    """Saturation ratio (1 - exp(-c*z1)) / (1 - exp(-c*z2)) for c > 0.

    Depth arguments may be negative (triples use depth differences); the
    function is continuous and strictly monotone in c whenever z1 != z2.
    """
    if not c > 0:
        raise InvalidRangeError(f"c must be > 0, got {c}")
    _check_phi_depths(z1, z2, eps_z)
    num = _one_minus_exp(-c * z1)
    den = _one_minus_exp(-c * z2)
    if num == -math.inf and den == -math.inf:
        # both saturated: ratio tends to exp(c*(z2 - z1))
        try:
            return math.exp(c * (z2 - z1))
        except OverflowError:
            return math.inf
    return num / den


def _phi_inverse_impl(
    ratio: float,
    z1: float,
    z2: float,
    c_max: float,
    eps_z: float,
) -> tuple:
    _check_phi_depths(z1, z2, eps_z)
    if not math.isfinite(ratio):
        raise OutOfRangeError(f"ratio must be finite, got {ratio}")
    if c_max <= _PHI_LO:
        raise InvalidRangeError(f"c_max must exceed {_PHI_LO}")
    limit0 = z1 / z2  # c -> 0+ limit of phi
    lo, hi = _PHI_LO, float(c_max)
    p_lo = phi(lo, z1, z2, eps_z)
    p_hi = phi(hi, z1, z2, eps_z)
    increasing = p_hi > p_lo
    evals = 2
    # the bracket floor shrinks geometrically when the root lies below it
    while (ratio < p_lo) if increasing else (ratio > p_lo):
        lo *= 0.125
        if lo < 1e-250:
            raise OutOfRangeError(
                f"ratio {ratio!r} is at or beyond the c -> 0 limit {limit0!r}"
            )
        p_lo = phi(lo, z1, z2, eps_z)
        evals += 1
    if increasing:
        if ratio <= limit0 or ratio > p_hi:
            raise OutOfRangeError(
                f"ratio {ratio!r} outside attainable interval ({limit0!r}, {p_hi!r}]"
            )
    else:
        if ratio >= limit0 or ratio < p_hi:
            raise OutOfRangeError(
                f"ratio {ratio!r} outside attainable interval [{p_hi!r}, {limit0!r})"
            )
    a, b = lo, hi
    fa = p_lo - ratio
    fb = p_hi - ratio
    if fa == 0.0:
        return a, evals
    if fb == 0.0:
        return b, evals
    while b - a > _BISECT_TOL:
        m = 0.5 * (a + b)
        if m <= a or m >= b:  # interval no longer splittable in float64
            break
        fm = phi(m, z1, z2, eps_z) - ratio
        evals += 1
        if fm == 0.0:
            return m, evals
        if (fm < 0.0) == (fa < 0.0):
            a, fa = m, fm
        else:
            b, fb = m, fm
    x0, f0, x1, f1 = a, fa, b, fb
    for _ in range(_SECANT_STEPS):
        if f1 == f0:
            break
        x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
        if not (a <= x2 <= b) or not math.isfinite(x2):
            break
        f2 = phi(x2, z1, z2, eps_z) - ratio
        evals += 1
        x0, f0, x1, f1 = x1, f1, x2, f2
        if f2 == 0.0:
            break
    return (x1 if abs(f1) <= abs(f0) else x0), evals


def phi_inverse(
    ratio: float,
    z1: float,
    z2: float,
    c_max: float = DEFAULT_C_MAX,
    eps_z: float = DEFAULT_EPS_Z,
) -> float:
    """Solve phi(c; z1, z2) = ratio for c in (0, c_max].

    Bracketed bisection to 1e-13 absolute followed by secant polish;
    deterministic. Ratios outside the attainable open interval raise
    OutOfRangeError rather than clamping.
    """
    c, _ = _phi_inverse_impl(float(ratio), float(z1), float(z2), c_max, eps_z)
    return c


# -- per-band closed forms ----------------------------------------------------


def _pair_backscatter(Fa: float, Fb: float, za: float, zb: float, c: float) -> float:
    """B from two equal-inherent-radiance pixels:
    (exp(c*za)*Fa - exp(c*zb)*Fb) / (exp(c*za) - exp(c*zb)), evaluated after
    dividing through by the larger exponential so nothing overflows."""
    if za >= zb:
        u = math.exp(-c * (za - zb))
        den = _one_minus_exp(-c * (za - zb))
        return (Fa - u * Fb) / den
    u = math.exp(-c * (zb - za))
    den = _one_minus_exp(-c * (zb - za))
    return (Fb - u * Fa) / den


def _rel_spread(values) -> float:
    vals = [v for v in values if math.isfinite(v)]
    if len(vals) < 2:
        return math.inf if len(vals) < len(list(values)) else 0.0
    lo, hi = min(vals), max(vals)
    scale = max(abs(lo), abs(hi))
    if scale == 0.0:
        return 0.0
    return (hi - lo) / scale


class _BandDegenerate(Exception):
    """Internal: abandons the current band only."""


def _pos_log_ratio(num: float, den: float, eps: float) -> float:
    if abs(den) < eps:
        raise _BandDegenerate
    r = num / den
    if not r > 0 or not math.isfinite(r):
        raise _BandDegenerate
    return r


def solve_pattern(
    p: PatternInstance,
    F: SpectralImage,
    depth: DepthMap,
    c_max: float = DEFAULT_C_MAX,
    eps_z: float = DEFAULT_EPS_Z,
    eps_f: float | None = None,
    source: str = "",
) -> MediumEstimate:
    """Recover (c, B) per band from one pattern instance.

    Depth-structure violations (which are band-independent) raise
    DegenerateDepthsError; per-band failures flag that band and leave the
    rest estimated. For kinds with redundant closed forms, every form is
    evaluated and the max pairwise relative discrepancy recorded.
    """
    grid = F.grid
    xs = [px for px, _ in p.pixels]
    ys = [py for _, py in p.pixels]
    for x, y in p.pixels:
        if not (0 <= x < F.width and 0 <= y < F.height):
            raise PatternShapeError(f"pixel ({x}, {y}) outside {F.width}x{F.height}")
    if (F.height, F.width) != (depth.height, depth.width):
        raise PatternShapeError("image and depth dimensions disagree")
    if p.needs_derivatives() and p.derivatives is None:
        raise PatternShapeError(f"{p.kind.name} requires derivative data")

    Fv = F.cube[ys, xs, :]  # (n_pixels, n_bands)
    z = depth.z[ys, xs]
    if eps_f is None:
        scale = float(np.max(np.abs(Fv))) if Fv.size else 0.0
        eps_f = 1e-12 * max(scale, 1e-300)

    n = grid.n_bands
    c_out = np.zeros(n)
    B_out = np.zeros(n)
    degenerate = np.zeros(n, dtype=bool)
    b_spread = np.zeros(n)
    c_spread = np.zeros(n)
    iters = np.zeros(n, dtype=np.int64)

    kind = p.kind
    if kind in (PatternKind.DARK_PAIR, PatternKind.TWO_REGION_DERIV):
        _check_phi_depths_strict(z[0], z[1], eps_z)
    elif kind is PatternKind.TRIPLE:
        if not (z[0] < z[1] < z[2]):
            raise DegenerateDepthsError("triple requires z1 < z2 < z3")
        if z[1] - z[0] < eps_z or z[2] - z[1] < eps_z:
            raise DegenerateDepthsError("triple depths too close")
    elif kind is PatternKind.BOX:
        if abs(z[0] - z[2]) > eps_z or abs(z[1] - z[3]) > eps_z:
            raise DegenerateDepthsError("box requires z1 = z3 and z2 = z4")
        if abs(z[0] - z[1]) < eps_z:
            raise DegenerateDepthsError("box requires z1 != z2")
    elif kind is PatternKind.STICKS:
        if abs((z[0] - z[1]) - (z[2] - z[3])) > eps_z:
            raise DegenerateDepthsError("sticks require z1 - z2 = z3 - z4")
        if abs(z[0] - z[1]) < eps_z:
            raise DegenerateDepthsError("sticks require z1 - z2 != 0")
    elif kind is PatternKind.ONE_REGION_DERIV2:
        pass

    dzs = d2zs = dFs = d2Fs = None
    if p.needs_derivatives():
        dzs = [d.dz for d in p.derivatives]
        dFs = [d.dF.values for d in p.derivatives]
        if kind is PatternKind.ONE_REGION_DERIV2:
            d2zs = [d.d2z for d in p.derivatives]
            d2Fs = [d.d2F.values for d in p.derivatives]
        for dz in dzs:
            if abs(dz) < eps_z:
                raise DegenerateDepthsError("derivative pattern requires |dz| > eps_z")

    for b in range(n):
        try:
            if kind is PatternKind.DARK_PAIR:
                F1, F2 = Fv[0, b], Fv[1, b]
                ratio = _pos_log_ratio(F1, F2, eps_f)
                c, it = _phi_inverse_impl(ratio, z[0], z[1], c_max, eps_z)
                iters[b] = it
                forms = [
                    F1 / _one_minus_exp(-c * z[0]),
                    F2 / _one_minus_exp(-c * z[1]),
                ]
                B = forms[0]
                b_spread[b] = _rel_spread(forms)
            elif kind is PatternKind.TRIPLE:
                F1, F2, F3 = Fv[0, b], Fv[1, b], Fv[2, b]
                ratio = _pos_log_ratio(F1 - F2, F1 - F3, eps_f)
                # equal-radiance triple gives (F1-F2)/(F1-F3) = phi(c; z2-z1, z3-z1)
                c, it = _phi_inverse_impl(ratio, z[1] - z[0], z[2] - z[0], c_max, eps_z)
                iters[b] = it
                forms = [
                    _pair_backscatter(F1, F2, z[0], z[1], c),
                    _pair_backscatter(F2, F3, z[1], z[2], c),
                    _pair_backscatter(F1, F3, z[0], z[2], c),
                ]
                B = forms[0]
                b_spread[b] = _rel_spread(forms)
            elif kind is PatternKind.BOX:
                F1, F2, F3, F4 = Fv[:4, b]
                ratio = _pos_log_ratio(F1 - F3, F2 - F4, eps_f)
                c = -math.log(ratio) / (z[0] - z[1])
                if not c > 0:
                    raise _BandDegenerate
                forms = [
                    _pair_backscatter(F1, F2, z[0], z[1], c),
                    _pair_backscatter(F3, F4, z[2], z[3], c),
                ]
                B = forms[0]
                b_spread[b] = _rel_spread(forms)
            elif kind is PatternKind.STICKS:
                F1, F2, F3, F4 = Fv[:4, b]
                den = F1 + F4 - F2 - F3
                if abs(den) < eps_f:
                    raise _BandDegenerate
                B = (F1 * F4 - F2 * F3) / den
                r12 = _pos_log_ratio(F1 - B, F2 - B, eps_f)
                r34 = _pos_log_ratio(F3 - B, F4 - B, eps_f)
                c_forms = [
                    -math.log(r12) / (z[0] - z[1]),
                    -math.log(r34) / (z[2] - z[3]),
                ]
                if not c_forms[0] > 0:
                    raise _BandDegenerate
                c = c_forms[0]
                c_spread[b] = _rel_spread(c_forms)
            elif kind is PatternKind.TWO_REGION_DERIV:
                F1, F2 = Fv[0, b], Fv[1, b]
                dF1, dF2 = dFs[0][b], dFs[1][b]
                if abs(dF1) < eps_f or abs(dF2) < eps_f:
                    raise _BandDegenerate
                ratio = _pos_log_ratio(dF1 * dzs[1], dF2 * dzs[0], eps_f)
                c = -math.log(ratio) / (z[0] - z[1])
                if not c > 0:
                    raise _BandDegenerate
                forms = [
                    F1 + dF1 / (c * dzs[0]),
                    F2 + dF2 / (c * dzs[1]),
                ]
                B = forms[0]
                b_spread[b] = _rel_spread(forms)
            else:  # ONE_REGION_DERIV2
                F1 = Fv[0, b]
                dF1, d2F1 = dFs[0][b], d2Fs[0][b]
                if abs(dF1) < eps_f:
                    raise _BandDegenerate
                c = d2zs[0] / dzs[0] ** 2 - (d2F1 / dF1) / dzs[0]
                if not c > 0 or not math.isfinite(c):
                    raise _BandDegenerate
                B = F1 + dF1 / (c * dzs[0])

            if not (math.isfinite(c) and math.isfinite(B)):
                raise _BandDegenerate
            c_out[b] = c
            B_out[b] = B
        except (_BandDegenerate, OutOfRangeError):
            degenerate[b] = True
            c_out[b] = 0.0
            B_out[b] = 0.0

    return MediumEstimate(
        grid=grid,
        c_hat=Spectrum(grid, c_out),
        B_hat=Spectrum(grid, B_out),
        degenerate=degenerate,
        b_spread=b_spread,
        c_spread=c_spread,
        phi_iterations=iters,
        source=source or f"pattern:{kind.name}",
    )


def _check_phi_depths_strict(z1: float, z2: float, eps_z: float):
    if abs(z1 - z2) < eps_z:
        raise DegenerateDepthsError(f"depths {z1} and {z2} coincide within {eps_z:.3g}")


# -- verification against ground truth ---------------------------------------


@dataclass(frozen=True)
class Tolerances:
    eps_z: float = DEFAULT_EPS_Z
    eps_l: float = 1e-9
    eps_f: float = 1e-12


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    passed: bool
    slack: float


@dataclass(frozen=True)
class PatternReport:
    kind: PatternKind
    checks: tuple

    @property
    def ok(self) -> bool:
        return all(ch.passed for ch in self.checks)

    def failed(self):
        return [ch for ch in self.checks if not ch.passed]


def _eq(name, a, b, eps):
    d = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
    return ConstraintCheck(name, d <= eps, d)


def _ne(name, a, b, eps):
    d = float(np.min(np.abs(np.asarray(a) - np.asarray(b))))
    return ConstraintCheck(name, d > eps, d)


def verify_pattern(
    p: PatternInstance,
    L: SpectralImage,
    depth: DepthMap,
    tol: Tolerances = Tolerances(),
) -> PatternReport:
    """Check a pattern's defining constraints against ground-truth radiance.

    Pure report: one named check per constraint with the measured slack
    (absolute difference for equalities, minimum gap for inequalities).
    """
    xs = [px for px, _ in p.pixels]
    ys = [py for _, py in p.pixels]
    Lv = L.cube[ys, xs, :]
    z = depth.z[ys, xs]
    checks: list = []
    kind = p.kind
    if kind is PatternKind.DARK_PAIR:
        checks.append(_eq("L1 == 0", Lv[0], 0.0, tol.eps_l))
        checks.append(_eq("L2 == 0", Lv[1], 0.0, tol.eps_l))
        checks.append(_ne("z1 != z2", z[0], z[1], tol.eps_z))
    elif kind is PatternKind.TRIPLE:
        checks.append(_eq("L1 == L2", Lv[0], Lv[1], tol.eps_l))
        checks.append(_eq("L2 == L3", Lv[1], Lv[2], tol.eps_l))
        checks.append(ConstraintCheck("z1 < z2", z[1] - z[0] > tol.eps_z, float(z[1] - z[0])))
        checks.append(ConstraintCheck("z2 < z3", z[2] - z[1] > tol.eps_z, float(z[2] - z[1])))
    elif kind is PatternKind.BOX:
        checks.append(_eq("L1 == L2", Lv[0], Lv[1], tol.eps_l))
        checks.append(_eq("L3 == L4", Lv[2], Lv[3], tol.eps_l))
        checks.append(_ne("L1 != L3", Lv[0], Lv[2], tol.eps_f))
        checks.append(_eq("z1 == z3", z[0], z[2], tol.eps_z))
        checks.append(_eq("z2 == z4", z[1], z[3], tol.eps_z))
        checks.append(_ne("z1 != z2", z[0], z[1], tol.eps_z))
    elif kind is PatternKind.STICKS:
        checks.append(_eq("L1 == L2", Lv[0], Lv[1], tol.eps_l))
        checks.append(_eq("L3 == L4", Lv[2], Lv[3], tol.eps_l))
        checks.append(_ne("L1 != L3", Lv[0], Lv[2], tol.eps_f))
        checks.append(_eq("z1 - z2 == z3 - z4", z[0] - z[1], z[2] - z[3], tol.eps_z))
        checks.append(_ne("z1 != z2", z[0], z[1], tol.eps_z))
    elif kind is PatternKind.TWO_REGION_DERIV:
        checks.append(_eq("L1 == L2", Lv[0], Lv[1], tol.eps_l))
        checks.append(_ne("z1 != z2", z[0], z[1], tol.eps_z))
        checks.extend(_deriv_checks(p, L, depth, tol))
    else:  # ONE_REGION_DERIV2
        checks.extend(_deriv_checks(p, L, depth, tol))
    return PatternReport(kind, tuple(checks))


def _deriv_checks(p, L, depth, tol):
    from .recovery import differentiate  # local import; recovery depends only on medium

    checks = []
    if p.derivatives is not None:
        for i, d in enumerate(p.derivatives):
            checks.append(
                ConstraintCheck(f"dz{i + 1} != 0", abs(d.dz) > tol.eps_z, abs(d.dz))
            )
    if p.direction is not None:
        field = differentiate(L, depth, p.direction)
        for i, (x, y) in enumerate(p.pixels):
            dL = field.dF[y, x, :]
            checks.append(_eq(f"dL{i + 1} == 0", dL, 0.0, tol.eps_l))
    return checks


# -- cross-pattern consistency ------------------------------------------------


@dataclass(frozen=True)
class ConsistencyReport:
    n_estimates: int
    bands_compared: int
    c_discrepancy: np.ndarray
    B_discrepancy: np.ndarray
    threshold: float

    @property
    def max_c_discrepancy(self) -> float:
        return float(np.max(self.c_discrepancy)) if self.bands_compared else math.nan

    @property
    def max_B_discrepancy(self) -> float:
        return float(np.max(self.B_discrepancy)) if self.bands_compared else math.nan

    @property
    def passed(self) -> bool:
        if self.bands_compared == 0:
            return False
        return (
            self.max_c_discrepancy <= self.threshold
            and self.max_B_discrepancy <= self.threshold
        )


def consistency_check(estimates, threshold: float = 1e-8) -> ConsistencyReport:
    """Max pairwise relative discrepancy of c and B across estimates, per band.

    Bands degenerate in any estimate are excluded from the comparison.
    """
    estimates = list(estimates)
    if len(estimates) < 2:
        raise InvalidRangeError("consistency check needs at least two estimates")
    grid = estimates[0].grid
    for e in estimates[1:]:
        if e.grid != grid:
            raise GridMismatchError("estimates live on different grids")
    ok = ~np.any([e.degenerate for e in estimates], axis=0)
    cs = np.stack([e.c_hat.values for e in estimates])  # (n_est, n_bands)
    Bs = np.stack([e.B_hat.values for e in estimates])

    def spread(mat):
        lo, hi = mat.min(axis=0), mat.max(axis=0)
        scale = np.maximum(np.abs(lo), np.abs(hi))
        out = np.zeros(mat.shape[1])
        nz = scale > 0
        out[nz] = (hi[nz] - lo[nz]) / scale[nz]
        out[~ok] = 0.0
        return out

    return ConsistencyReport(
        n_estimates=len(estimates),
        bands_compared=int(np.count_nonzero(ok)),
        c_discrepancy=spread(cs),
        B_discrepancy=spread(Bs),
        threshold=threshold,
    )
