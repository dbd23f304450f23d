"""Synthetic spectral scenes with exact ground truth.

A scene is a rectangle tiling of materials and depth models under a global
illuminant and medium. Rendering produces the inherent cube, the apparent
cube through the forward model, the depth map, and materialized pattern
instances whose constraints hold exactly by construction (checked at render
time). Materials are piecewise linear in wavelength, so trapezoidal
quadrature is exact on them; depth ramps are affine in pixel coordinates, so
central differences of depth are exact.

Medium presets are plausible-magnitude test fixtures, not measured water
types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CoverageGapError,
    InvalidDepthError,
    InvalidRangeError,
    InvalidSceneError,
)
from .medium import DepthMap, MediumParams, SpectralImage, forward_model
from .patterns import (
    PatternInstance,
    PatternKind,
    PixelDerivatives,
    verify_pattern,
)
from .recovery import _unit_direction
from .spectral import Spectrum, SpectralGrid, make_grid


@dataclass(frozen=True, eq=False)
class Material:
    """A named reflectance, dimensionless in [0, 1] per band."""

    name: str
    reflectance: Spectrum

    def __post_init__(self):
        v = self.reflectance.values
        if np.any(v < 0) or np.any(v > 1):
            raise InvalidRangeError(f"reflectance of {self.name!r} must lie in [0, 1]")


def material_from_knots(name: str, knots, grid: SpectralGrid) -> Material:
    """Piecewise-linear reflectance through up to 6 (wavelength, value) knots."""
    knots = sorted((float(w), float(v)) for w, v in knots)
    if not 1 <= len(knots) <= 6:
        raise InvalidRangeError("need between 1 and 6 knots")
    wl = grid.wavelengths
    xs = [w for w, _ in knots]
    vs = [v for _, v in knots]
    return Material(name, Spectrum(grid, np.interp(wl, xs, vs)))


@dataclass(frozen=True)
class ConstantDepth:
    z0: float

    def evaluate(self, xx: np.ndarray, yy: np.ndarray) -> np.ndarray:
        return np.full_like(xx, self.z0, dtype=np.float64)

    @property
    def is_ramp(self) -> bool:
        return False


@dataclass(frozen=True)
class RampDepth:
    """Affine depth z0 + gx*x + gy*y in absolute pixel coordinates."""

    z0: float
    gx: float
    gy: float = 0.0

    def evaluate(self, xx: np.ndarray, yy: np.ndarray) -> np.ndarray:
        return self.z0 + self.gx * xx.astype(np.float64) + self.gy * yy.astype(np.float64)

    @property
    def is_ramp(self) -> bool:
        return True


@dataclass(frozen=True, eq=False)
class Region:
    """Axis-aligned rectangle [x0, x0+width) x [y0, y0+height) with one material."""

    x0: int
    y0: int
    width: int
    height: int
    material: Material
    depth: object

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidRangeError("region must be at least 1x1")


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    model: str  # "additive" | "relative"
    sigma: float
    seed: int

    def __post_init__(self):
        if self.model not in ("additive", "relative"):
            raise InvalidRangeError(f"unknown noise model {self.model!r}")
        if self.sigma < 0:
            raise InvalidRangeError("sigma must be >= 0")


@dataclass(frozen=True, eq=False)
class PatternDecl:
    """Declaration of an embedded pattern; derivatives are resolved at render."""

    kind: PatternKind
    pixels: tuple
    direction: str = "x"


@dataclass(frozen=True, eq=False)
class SceneSpec:
    name: str
    width: int
    height: int
    grid: SpectralGrid
    illuminant: Spectrum
    regions: tuple
    medium: MediumParams
    noise: NoiseSpec | None = None
    patterns: tuple = ()

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidRangeError("scene must be at least 1x1")
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "patterns", tuple(self.patterns))


@dataclass(frozen=True, eq=False)
class RenderResult:
    L: SpectralImage
    F: SpectralImage
    depth: DepthMap
    truth: MediumParams
    patterns: tuple
    noise_clamped: int


def add_noise(F: SpectralImage, model: str, sigma: float, seed: int):
    """Measurement noise on an apparent cube; returns (image, clamp_count).

    additive: F + sigma*xi, relative: F*(1 + sigma*xi), with xi standard
    normal from a counter-based generator keyed on the seed, so the field is
    reproducible and independent of evaluation order. Negative results clamp
    to zero and are counted.
    """
    if sigma < 0:
        raise InvalidRangeError("sigma must be >= 0")
    if sigma == 0:
        return SpectralImage(F.grid, F.cube, F.kind), 0
    rng = np.random.Generator(np.random.Philox(key=seed))
    xi = rng.standard_normal(F.cube.shape)
    if model == "additive":
        out = F.cube + sigma * xi
    elif model == "relative":
        out = F.cube * (1.0 + sigma * xi)
    else:
        raise InvalidRangeError(f"unknown noise model {model!r}")
    clamped = int(np.count_nonzero(out < 0))
    if clamped:
        out = np.maximum(out, 0.0)
    return SpectralImage(F.grid, out, F.kind), clamped


def render(spec: SceneSpec, seed_override: int | None = None) -> RenderResult:
    """Render a scene: inherent cube, apparent cube, depth, truth, patterns.

    Pure function of (spec, seed); re-rendering is bitwise identical. Region
    coverage and embedded-pattern constraints are validated here.
    """
    H, W = spec.height, spec.width
    K = spec.grid.n_bands
    coverage = np.zeros((H, W), dtype=np.int32)
    region_map = np.full((H, W), -1, dtype=np.int32)
    Lc = np.zeros((H, W, K))
    z = np.zeros((H, W))
    for idx, r in enumerate(spec.regions):
        if r.x0 < 0 or r.y0 < 0 or r.x0 + r.width > W or r.y0 + r.height > H:
            raise CoverageGapError(f"region {idx} exceeds the {W}x{H} image")
        sl = np.s_[r.y0 : r.y0 + r.height, r.x0 : r.x0 + r.width]
        coverage[sl] += 1
        region_map[sl] = idx
        Lc[sl] = (spec.illuminant.values * r.material.reflectance.values)[None, None, :]
        yy, xx = np.mgrid[r.y0 : r.y0 + r.height, r.x0 : r.x0 + r.width]
        z[sl] = r.depth.evaluate(xx, yy)
    n_gap = int(np.count_nonzero(coverage == 0))
    n_over = int(np.count_nonzero(coverage > 1))
    if n_gap or n_over:
        raise CoverageGapError(
            f"{n_gap} pixels uncovered, {n_over} covered more than once"
        )
    if not np.all(np.isfinite(z)) or np.any(z <= 0):
        raise InvalidDepthError("depth model produces non-positive depth")

    L = SpectralImage(spec.grid, Lc, "inherent")
    depth = DepthMap(z)
    F = forward_model(L, depth, spec.medium)
    clamped = 0
    if spec.noise is not None and spec.noise.sigma > 0:
        seed = spec.noise.seed if seed_override is None else seed_override
        F, clamped = add_noise(F, spec.noise.model, spec.noise.sigma, seed)

    instances = tuple(
        _materialize_pattern(d, L, depth, spec.medium, region_map, spec.regions)
        for d in spec.patterns
    )
    for inst in instances:
        report = verify_pattern(inst, L, depth)
        if not report.ok:
            bad = ", ".join(f"{c.name} (slack {c.slack:.3g})" for c in report.failed())
            raise InvalidSceneError(
                f"scene {spec.name!r}: embedded {inst.kind.name} violates: {bad}"
            )
    return RenderResult(L, F, depth, spec.medium, instances, clamped)


def _materialize_pattern(decl, L, depth, medium, region_map, regions) -> PatternInstance:
    kind = PatternKind(decl.kind)
    if kind not in (PatternKind.TWO_REGION_DERIV, PatternKind.ONE_REGION_DERIV2):
        return PatternInstance(kind, tuple(decl.pixels))
    dx, dy = _unit_direction(decl.direction)
    derivs = []
    c = medium.c.values
    B = medium.B.values
    for x, y in decl.pixels:
        model = regions[region_map[y, x]].depth
        if not model.is_ramp:
            raise InvalidSceneError(
                f"pattern {kind.name} pixel ({x}, {y}) sits on constant depth"
            )
        g = model.gx * dx + model.gy * dy
        if g == 0.0:
            raise InvalidSceneError(
                f"pattern {kind.name} pixel ({x}, {y}) has zero depth derivative"
            )
        zp = depth.z[y, x]
        lp = L.cube[y, x, :]
        att = np.exp(-c * zp)
        # analytic derivatives of F = B + (L - B) e^{-c z} along the ramp
        dF = -c * (lp - B) * att * g
        if kind is PatternKind.ONE_REGION_DERIV2:
            d2F = c * c * (lp - B) * att * g * g
            derivs.append(
                PixelDerivatives(
                    dz=g,
                    dF=Spectrum(L.grid, dF),
                    d2z=0.0,
                    d2F=Spectrum(L.grid, d2F),
                )
            )
        else:
            derivs.append(PixelDerivatives(dz=g, dF=Spectrum(L.grid, dF)))
    return PatternInstance(kind, tuple(decl.pixels), tuple(derivs), decl.direction)


# -- presets -------------------------------------------------------------------


def medium_preset(name: str, grid: SpectralGrid) -> MediumParams:
    """Named (c, B) fixtures: attenuation rises with wavelength, backscatter
    rises toward short wavelengths. Magnitudes are plausible for attenuating
    water but are test fixtures, not physical claims."""
    x = (grid.wavelengths - grid.lambda_min) / (grid.lambda_max - grid.lambda_min)
    if name == "clear":
        c = 0.05 + 0.15 * x
        B = 0.12 - 0.07 * x
    elif name == "coastal":
        c = 0.2 + 0.8 * x
        B = 0.25 - 0.15 * x
    elif name == "turbid":
        c = 1.0 + 2.0 * x
        B = 0.5 - 0.3 * x
    else:
        raise InvalidRangeError(f"unknown medium preset {name!r}")
    return MediumParams(grid, Spectrum(grid, c), Spectrum(grid, B))


def _std_materials(grid):
    return {
        "dark": Material("dark", Spectrum.constant(grid, 0.0)),
        "sand": material_from_knots(
            "sand", [(400, 0.30), (550, 0.42), (700, 0.48)], grid
        ),
        "rock": material_from_knots("rock", [(400, 0.28), (700, 0.33)], grid),
        "panel-a": material_from_knots(
            "panel-a", [(400, 0.55), (560, 0.48), (700, 0.60)], grid
        ),
        "panel-b": material_from_knots(
            "panel-b", [(400, 0.18), (520, 0.25), (700, 0.22)], grid
        ),
        "bright-sand": Material("bright-sand", Spectrum.constant(grid, 0.9)),
    }


def _tile_with_insets(width, height, bg_material, bg_depth, insets):
    """Rectangle partition of the image: arrangement cells of the inset edges,
    each owned by the first containing inset or the background."""
    xs = sorted({0, width, *(r.x0 for r in insets), *(r.x0 + r.width for r in insets)})
    ys = sorted({0, height, *(r.y0 for r in insets), *(r.y0 + r.height for r in insets)})
    regions = []
    for y0, y1 in zip(ys, ys[1:]):
        for x0, x1 in zip(xs, xs[1:]):
            owner = None
            for r in insets:
                if r.x0 <= x0 and x1 <= r.x0 + r.width and r.y0 <= y0 and y1 <= r.y0 + r.height:
                    owner = r
                    break
            if owner is None:
                regions.append(Region(x0, y0, x1 - x0, y1 - y0, bg_material, bg_depth))
            else:
                regions.append(
                    Region(x0, y0, x1 - x0, y1 - y0, owner.material, owner.depth)
                )
    return tuple(regions)


def _inset(x0, y0, material, z0, size=6):
    return Region(x0, y0, size, size, material, ConstantDepth(z0))


def _scene_dark_pair() -> SceneSpec:
    grid = make_grid(400, 700, 12)
    mats = _std_materials(grid)
    insets = [
        _inset(4, 4, mats["dark"], 1.0),
        _inset(20, 10, mats["dark"], 2.2),
    ]
    regions = _tile_with_insets(64, 48, mats["sand"], ConstantDepth(1.0), insets)
    return SceneSpec(
        name="dark-pair",
        width=64,
        height=48,
        grid=grid,
        illuminant=Spectrum.constant(grid, 1.0),
        regions=regions,
        medium=medium_preset("coastal", grid),
        patterns=(PatternDecl(PatternKind.DARK_PAIR, ((7, 7), (23, 13))),),
    )


def _scene_triple() -> SceneSpec:
    grid = make_grid(400, 700, 12)
    mats = _std_materials(grid)
    insets = [
        _inset(12, 8, mats["sand"], 1.8),
        _inset(36, 24, mats["sand"], 2.6),
    ]
    regions = _tile_with_insets(64, 48, mats["sand"], ConstantDepth(1.0), insets)
    return SceneSpec(
        name="triple",
        width=64,
        height=48,
        grid=grid,
        illuminant=Spectrum.constant(grid, 1.0),
        regions=regions,
        medium=medium_preset("coastal", grid),
        patterns=(PatternDecl(PatternKind.TRIPLE, ((4, 4), (15, 11), (39, 27))),),
    )


def _scene_box() -> SceneSpec:
    grid = make_grid(400, 700, 12)
    mats = _std_materials(grid)
    insets = [
        _inset(4, 4, mats["panel-a"], 1.2),
        _inset(20, 4, mats["panel-a"], 2.4),
        _inset(36, 4, mats["panel-b"], 1.2),
        _inset(52, 4, mats["panel-b"], 2.4),
    ]
    regions = _tile_with_insets(64, 48, mats["sand"], ConstantDepth(1.0), insets)
    return SceneSpec(
        name="box",
        width=64,
        height=48,
        grid=grid,
        illuminant=Spectrum.constant(grid, 1.0),
        regions=regions,
        medium=medium_preset("coastal", grid),
        patterns=(
            PatternDecl(PatternKind.BOX, ((7, 7), (23, 7), (39, 7), (55, 7))),
        ),
    )


def _scene_sticks() -> SceneSpec:
    grid = make_grid(400, 700, 12)
    mats = _std_materials(grid)
    insets = [
        _inset(4, 4, mats["panel-a"], 1.2),
        _inset(20, 4, mats["panel-a"], 2.2),
        _inset(36, 4, mats["panel-b"], 2.0),
        _inset(52, 4, mats["panel-b"], 3.0),
    ]
    regions = _tile_with_insets(64, 48, mats["sand"], ConstantDepth(1.0), insets)
    return SceneSpec(
        name="sticks",
        width=64,
        height=48,
        grid=grid,
        illuminant=Spectrum.constant(grid, 1.0),
        regions=regions,
        medium=medium_preset("coastal", grid),
        patterns=(
            PatternDecl(PatternKind.STICKS, ((7, 7), (23, 7), (39, 7), (55, 7))),
        ),
    )


def _scene_two_ramps() -> SceneSpec:
    grid = make_grid(400, 700, 12)
    mats = _std_materials(grid)
    regions = (
        Region(0, 0, 32, 48, mats["sand"], RampDepth(1.0, 0.05)),
        Region(32, 0, 32, 48, mats["sand"], RampDepth(3.0, -0.02)),
    )
    return SceneSpec(
        name="two-ramps",
        width=64,
        height=48,
        grid=grid,
        illuminant=Spectrum.constant(grid, 1.0),
        regions=regions,
        medium=medium_preset("coastal", grid),
        patterns=(
            PatternDecl(
                PatternKind.TWO_REGION_DERIV, ((10, 24), (48, 24)), direction="x"
            ),
        ),
    )


def _scene_one_ramp() -> SceneSpec:
    grid = make_grid(400, 700, 12)
    mats = _std_materials(grid)
    regions = (Region(0, 0, 64, 48, mats["sand"], RampDepth(1.0, 0.04, 0.002)),)
    return SceneSpec(
        name="one-ramp",
        width=64,
        height=48,
        grid=grid,
        illuminant=Spectrum.constant(grid, 1.0),
        regions=regions,
        medium=medium_preset("coastal", grid),
        patterns=(
            PatternDecl(
                PatternKind.ONE_REGION_DERIV2, ((32, 24),), direction="x"
            ),
        ),
    )


def _scene_slant_majority() -> SceneSpec:
    grid = make_grid(400, 700, 6)
    mats = _std_materials(grid)
    x = (grid.wavelengths - grid.lambda_min) / (grid.lambda_max - grid.lambda_min)
    # gradient and attenuation keep the interior-stencil slope bias
    # (c*gx)^4/30 under 5e-10 while the depth range preserves noise SNR
    medium = MediumParams(
        grid,
        Spectrum(grid, 0.14 + 0.04 * x),
        Spectrum(grid, 0.08 - 0.05 * x),
    )
    regions = (
        Region(0, 0, 96, 96, mats["bright-sand"], RampDepth(0.8, 0.06, 0.0037)),
        Region(96, 0, 32, 96, mats["rock"], ConstantDepth(2.0)),
    )
    return SceneSpec(
        name="slant-majority",
        width=128,
        height=96,
        grid=grid,
        illuminant=Spectrum.constant(grid, 1.0),
        regions=regions,
        medium=medium,
        patterns=(
            PatternDecl(PatternKind.TRIPLE, ((10, 10), (40, 10), (70, 10))),
        ),
    )


def _scene_consistency() -> SceneSpec:
    grid = make_grid(400, 700, 12)
    mats = _std_materials(grid)
    insets = [
        _inset(4, 4, mats["dark"], 1.4),
        _inset(20, 4, mats["dark"], 2.4),
        _inset(36, 4, mats["sand"], 1.8),
        _inset(52, 4, mats["sand"], 2.7),
        _inset(4, 40, mats["panel-a"], 1.2),
        _inset(20, 40, mats["panel-a"], 2.2),
        _inset(36, 40, mats["panel-b"], 1.2),
        _inset(52, 40, mats["panel-b"], 2.2),
    ]
    regions = _tile_with_insets(96, 64, mats["sand"], ConstantDepth(1.0), insets)
    return SceneSpec(
        name="consistency",
        width=96,
        height=64,
        grid=grid,
        illuminant=Spectrum.constant(grid, 1.0),
        regions=regions,
        medium=medium_preset("coastal", grid),
        patterns=(
            PatternDecl(PatternKind.DARK_PAIR, ((7, 7), (23, 7))),
            PatternDecl(PatternKind.TRIPLE, ((70, 20), (39, 7), (55, 7))),
            PatternDecl(PatternKind.BOX, ((7, 43), (23, 43), (39, 43), (55, 43))),
        ),
    )


_BUILTIN_BUILDERS = {
    "dark-pair": _scene_dark_pair,
    "triple": _scene_triple,
    "box": _scene_box,
    "sticks": _scene_sticks,
    "two-ramps": _scene_two_ramps,
    "one-ramp": _scene_one_ramp,
    "slant-majority": _scene_slant_majority,
    "consistency": _scene_consistency,
}

BUILTIN_SCENE_NAMES = tuple(_BUILTIN_BUILDERS)


def builtin_scene(name: str) -> SceneSpec:
    try:
        return _BUILTIN_BUILDERS[name]()
    except KeyError:
        raise InvalidRangeError(
            f"unknown scene {name!r}; available: {', '.join(BUILTIN_SCENE_NAMES)}"
        ) from None


def builtin_scenes() -> list:
    """All built-in scenes: one per pattern kind, the slanted-plane majority
    scene, and the multi-pattern consistency scene."""
    return [b() for b in _BUILTIN_BUILDERS.values()]
