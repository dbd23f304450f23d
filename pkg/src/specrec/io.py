"""File formats.

SPECCUBE/1 cubes are a short ASCII header terminated by an END line, then a
raw little-endian float32 payload, band-sequential (whole band image, row
major, band after band), optionally followed by one row-major depth plane.
All other formats are line-oriented ASCII key-value text; floats are written
with repr() so write/read round-trips are exact in float64. Cube payloads
are float32 on disk while computation stays float64, so comparisons that
cross disk carry ~6e-8 relative quantization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import CameraModel
from .errors import (
    GridMismatchError,
    InvalidRangeError,
    MissingDepthError,
    ParseError,
)
from .medium import DepthMap, MediumParams, SpectralImage
from .patterns import (
    MediumEstimate,
    PatternInstance,
    PatternKind,
    PixelDerivatives,
)
from .scene import (
    ConstantDepth,
    Material,
    NoiseSpec,
    PatternDecl,
    RampDepth,
    Region,
    SceneSpec,
    material_from_knots,
    medium_preset,
)
from .spectral import Spectrum, SpectralGrid, make_grid

CUBE_MAGIC = "SPECCUBE/1"
MEDIUM_MAGIC = "MEDIUM/1"
PATTERNS_MAGIC = "PATTERNS/1"
SCENE_MAGIC = "SCENE/1"
REPORT_MAGIC = "RECOVERY-REPORT/1"

CUBE_KINDS = ("inherent", "apparent", "channels", "map")


def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt_vec(v) -> str:
    return " ".join(_fmt(x) for x in np.asarray(v, dtype=np.float64).ravel())


# -- spectral cubes -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CubeFile:
    """In-memory view of one cube file (values already widened to float64)."""

    width: int
    height: int
    n_bands: int
    lambda_min: float
    lambda_max: float
    kind: str
    values: np.ndarray  # (H, W, K)
    depth: np.ndarray | None  # (H, W) or None

    @property
    def grid(self) -> SpectralGrid:
        return make_grid(self.lambda_min, self.lambda_max, self.n_bands)

    def to_image(self) -> SpectralImage:
        if self.kind not in ("inherent", "apparent"):
            raise InvalidRangeError(f"cube kind {self.kind!r} is not a radiance image")
        return SpectralImage(self.grid, self.values, self.kind)

    def to_depth(self) -> DepthMap:
        if self.depth is None:
            raise MissingDepthError("cube file has no depth plane")
        return DepthMap(self.depth)


def write_cube(path, values, lambda_min, lambda_max, kind, depth=None):
    """Write a SPECCUBE/1 file; values (H, W, K) and optional depth (H, W)."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 3:
        raise InvalidRangeError(f"cube values must be 3-D, got shape {values.shape}")
    if kind not in CUBE_KINDS:
        raise InvalidRangeError(f"kind must be one of {CUBE_KINDS}")
    h, w, k = values.shape
    header = [
        CUBE_MAGIC,
        f"width {w}",
        f"height {h}",
        f"n_bands {k}",
        f"lambda_min {_fmt(lambda_min)}",
        f"lambda_max {_fmt(lambda_max)}",
        f"kind {kind}",
        f"depth {1 if depth is not None else 0}",
        "END",
        "",
    ]
    payload = np.ascontiguousarray(
        np.moveaxis(values, 2, 0), dtype="<f4"
    ).tobytes()
    if depth is not None:
        depth = np.asarray(depth, dtype=np.float64)
        if depth.shape != (h, w):
            raise InvalidRangeError(
                f"depth plane must be {h}x{w}, got {depth.shape}"
            )
        payload += np.ascontiguousarray(depth, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write("\n".join(header).encode("ascii"))
        f.write(payload)


def write_image_cube(path, image: SpectralImage, depth: DepthMap | None = None):
    write_cube(
        path,
        image.cube,
        image.grid.lambda_min,
        image.grid.lambda_max,
        image.kind,
        depth.z if depth is not None else None,
    )


def read_cube(path) -> CubeFile:
    with open(path, "rb") as f:
        blob = f.read()
    marker = b"\nEND\n"
    pos = blob.find(marker)
    if pos < 0 or not blob.startswith(CUBE_MAGIC.encode("ascii")):
        raise ParseError("not a SPECCUBE/1 file", path=path, line=1)
    fields = {}
    for lineno, line in enumerate(blob[:pos].decode("ascii").splitlines()[1:], start=2):
        try:
            key, value = line.split(maxsplit=1)
        except ValueError:
            raise ParseError(f"malformed header line {line!r}", path=path, line=lineno)
        fields[key] = value
    try:
        w = int(fields["width"])
        h = int(fields["height"])
        k = int(fields["n_bands"])
        lmin = float(fields["lambda_min"])
        lmax = float(fields["lambda_max"])
        kind = fields["kind"]
        has_depth = int(fields["depth"]) != 0
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad or missing header field: {exc}", path=path)
    if kind not in CUBE_KINDS:
        raise ParseError(f"unknown cube kind {kind!r}", path=path)
    payload = blob[pos + len(marker):]
    n_cube = k * h * w
    n_expected = 4 * (n_cube + (h * w if has_depth else 0))
    if len(payload) != n_expected:
        raise ParseError(
            f"payload is {len(payload)} bytes, header implies {n_expected}",
            path=path,
        )
    flat = np.frombuffer(payload, dtype="<f4")
    values = np.moveaxis(
        flat[:n_cube].reshape(k, h, w).astype(np.float64), 0, 2
    )
    depth = (
        flat[n_cube:].reshape(h, w).astype(np.float64) if has_depth else None
    )
    return CubeFile(w, h, k, lmin, lmax, kind, values, depth)


# -- medium files ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MediumFile:
    grid: SpectralGrid
    c: np.ndarray
    B: np.ndarray
    degenerate: np.ndarray

    def to_medium_params(self) -> MediumParams:
        if np.any(self.degenerate):
            raise InvalidRangeError(
                f"medium file has {int(self.degenerate.sum())} degenerate bands"
            )
        return MediumParams(
            self.grid, Spectrum(self.grid, self.c), Spectrum(self.grid, self.B)
        )


def write_medium(path, grid: SpectralGrid, c, B, degenerate=None):
    lines = [
        MEDIUM_MAGIC,
        f"n_bands {grid.n_bands}",
        f"lambda_min {_fmt(grid.lambda_min)}",
        f"lambda_max {_fmt(grid.lambda_max)}",
        f"c {_fmt_vec(c)}",
        f"B {_fmt_vec(B)}",
    ]
    if degenerate is not None and np.any(degenerate):
        flags = " ".join(str(int(bool(d))) for d in degenerate)
        lines.append(f"degenerate {flags}")
    lines.append("")
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines))


def write_medium_params(path, m: MediumParams):
    write_medium(path, m.grid, m.c.values, m.B.values)


def read_medium(path) -> MediumFile:
    fields = {}
    with open(path, "r", encoding="ascii") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != MEDIUM_MAGIC:
        raise ParseError(f"not a {MEDIUM_MAGIC} file", path=path, line=1)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            key, value = line.split(maxsplit=1)
        except ValueError:
            raise ParseError(f"malformed line {line!r}", path=path, line=lineno)
        fields[key] = (value, lineno)
    try:
        n = int(fields["n_bands"][0])
        grid = make_grid(float(fields["lambda_min"][0]), float(fields["lambda_max"][0]), n)
        c = np.array([float(t) for t in fields["c"][0].split()])
        B = np.array([float(t) for t in fields["B"][0].split()])
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad or missing field: {exc}", path=path)
    if len(c) != n or len(B) != n:
        raise ParseError(f"expected {n} values for c and B", path=path)
    if "degenerate" in fields:
        flags = np.array([t != "0" for t in fields["degenerate"][0].split()])
        if len(flags) != n:
            raise ParseError(f"expected {n} degenerate flags", path=path)
    else:
        flags = np.zeros(n, dtype=bool)
    return MediumFile(grid, c, B, flags)


# -- pattern files ----------------------------------------------------------------

_KIND_NAMES = {k.name.lower(): k for k in PatternKind}


def write_patterns(path, grid: SpectralGrid, instances):
    lines = [
        PATTERNS_MAGIC,
        f"grid {_fmt(grid.lambda_min)} {_fmt(grid.lambda_max)} {grid.n_bands}",
    ]
    for inst in instances:
        lines.append("pattern")
        lines.append(f"kind {int(inst.kind)}")
        if inst.direction is not None:
            d = inst.direction
            lines.append(
                f"direction {d}" if isinstance(d, str) else f"direction {_fmt(d[0])} {_fmt(d[1])}"
            )
        for x, y in inst.pixels:
            lines.append(f"pixel {x} {y}")
        if inst.derivatives is not None:
            for i, dv in enumerate(inst.derivatives):
                lines.append(f"dz {i} {_fmt(dv.dz)}")
                lines.append(f"dF {i} {_fmt_vec(dv.dF.values)}")
                if dv.d2z is not None:
                    lines.append(f"d2z {i} {_fmt(dv.d2z)}")
                if dv.d2F is not None:
                    lines.append(f"d2F {i} {_fmt_vec(dv.d2F.values)}")
        lines.append("end")
    lines.append("")
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines))


def read_patterns(path):
    """Parse a PATTERNS/1 file; returns (grid, list of PatternInstance)."""
    with open(path, "r", encoding="ascii") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != PATTERNS_MAGIC:
        raise ParseError(f"not a {PATTERNS_MAGIC} file", path=path, line=1)
    grid = None
    instances = []
    block = None
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        key = tok[0]
        try:
            if key == "grid":
                grid = make_grid(float(tok[1]), float(tok[2]), int(tok[3]))
            elif key == "pattern":
                block = {"kind": None, "pixels": [], "direction": None, "deriv": {}}
            elif block is None:
                raise ParseError(f"{key!r} outside a pattern block", path=path, line=lineno)
            elif key == "kind":
                t = tok[1].lower()
                block["kind"] = _KIND_NAMES[t] if t in _KIND_NAMES else PatternKind(int(t))
            elif key == "pixel":
                block["pixels"].append((int(tok[1]), int(tok[2])))
            elif key == "direction":
                block["direction"] = (
                    tok[1] if len(tok) == 2 else (float(tok[1]), float(tok[2]))
                )
            elif key in ("dz", "d2z"):
                block["deriv"].setdefault(int(tok[1]), {})[key] = float(tok[2])
            elif key in ("dF", "d2F"):
                if grid is None:
                    raise ParseError("grid line must precede derivatives", path=path, line=lineno)
                vals = np.array([float(t) for t in tok[2:]])
                block["deriv"].setdefault(int(tok[1]), {})[key] = Spectrum(grid, vals)
            elif key == "end":
                instances.append(_close_pattern_block(block, path, lineno))
                block = None
            else:
                raise ParseError(f"unknown key {key!r}", path=path, line=lineno)
        except ParseError:
            raise
        except Exception as exc:
            raise ParseError(f"cannot parse {line!r}: {exc}", path=path, line=lineno)
    if block is not None:
        raise ParseError("unterminated pattern block", path=path, line=len(lines))
    if grid is None:
        raise ParseError("missing grid line", path=path)
    return grid, instances


def _close_pattern_block(block, path, lineno):
    if block["kind"] is None:
        raise ParseError("pattern block missing kind", path=path, line=lineno)
    derivs = None
    if block["deriv"]:
        derivs = []
        for i in range(len(block["pixels"])):
            d = block["deriv"].get(i)
            if d is None or "dz" not in d or "dF" not in d:
                raise ParseError(
                    f"pixel {i} missing dz/dF derivative data", path=path, line=lineno
                )
            derivs.append(
                PixelDerivatives(
                    dz=d["dz"], dF=d["dF"], d2z=d.get("d2z"), d2F=d.get("d2F")
                )
            )
        derivs = tuple(derivs)
    return PatternInstance(
        block["kind"], tuple(block["pixels"]), derivs, block["direction"]
    )


# -- scene files -------------------------------------------------------------------


def read_scene(path) -> SceneSpec:
    """Parse a SCENE/1 file. See docs/example.scene for the annotated schema."""
    with open(path, "r", encoding="ascii") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != SCENE_MAGIC:
        raise ParseError(f"not a {SCENE_MAGIC} file", path=path, line=1)
    name = "scene"
    size = None
    grid = None
    illuminant_decl = None
    medium_decl = None
    medium_c = medium_B = None
    materials = {}
    regions = []
    noise = None
    patterns = []

    def need_grid(lineno):
        if grid is None:
            raise ParseError("grid line must come first", path=path, line=lineno)
        return grid

    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        key = tok[0]
        try:
            if key == "name":
                name = " ".join(tok[1:])
            elif key == "size":
                size = (int(tok[1]), int(tok[2]))
            elif key == "grid":
                grid = make_grid(float(tok[1]), float(tok[2]), int(tok[3]))
            elif key == "illuminant":
                if tok[1] == "flat":
                    illuminant_decl = Spectrum.constant(need_grid(lineno), float(tok[2]))
                elif tok[1] == "values":
                    illuminant_decl = Spectrum(
                        need_grid(lineno), np.array([float(t) for t in tok[2:]])
                    )
                else:
                    raise ParseError(f"unknown illuminant form {tok[1]!r}", path=path, line=lineno)
            elif key == "medium":
                if tok[1] == "preset":
                    medium_decl = medium_preset(tok[2], need_grid(lineno))
                elif tok[1] == "custom":
                    medium_decl = "custom"
                else:
                    raise ParseError(f"unknown medium form {tok[1]!r}", path=path, line=lineno)
            elif key == "medium_c":
                medium_c = np.array([float(t) for t in tok[1:]])
            elif key == "medium_B":
                medium_B = np.array([float(t) for t in tok[1:]])
            elif key == "material":
                g = need_grid(lineno)
                mname = tok[1]
                if tok[2] == "constant":
                    materials[mname] = Material(mname, Spectrum.constant(g, float(tok[3])))
                elif tok[2] == "knots":
                    knots = []
                    for t in tok[3:]:
                        w, v = t.split(":")
                        knots.append((float(w), float(v)))
                    materials[mname] = material_from_knots(mname, knots, g)
                elif tok[2] == "values":
                    materials[mname] = Material(
                        mname, Spectrum(g, np.array([float(t) for t in tok[3:]]))
                    )
                else:
                    raise ParseError(f"unknown material form {tok[2]!r}", path=path, line=lineno)
            elif key == "region":
                x0, y0, w, h = (int(t) for t in tok[1:5])
                mat = materials.get(tok[5])
                if mat is None:
                    raise ParseError(f"unknown material {tok[5]!r}", path=path, line=lineno)
                if tok[6] == "constant":
                    model = ConstantDepth(float(tok[7]))
                elif tok[6] == "ramp":
                    gy = float(tok[9]) if len(tok) > 9 else 0.0
                    model = RampDepth(float(tok[7]), float(tok[8]), gy)
                else:
                    raise ParseError(f"unknown depth model {tok[6]!r}", path=path, line=lineno)
                regions.append(Region(x0, y0, w, h, mat, model))
            elif key == "noise":
                noise = NoiseSpec(tok[1], float(tok[2]), int(tok[3]))
            elif key == "pattern":
                kname = tok[1].lower()
                kind = _KIND_NAMES[kname] if kname in _KIND_NAMES else PatternKind(int(tok[1]))
                pixels = []
                direction = "x"
                i = 2
                while i < len(tok):
                    if tok[i] == "direction":
                        direction = tok[i + 1]
                        i += 2
                    else:
                        x, y = tok[i].strip("()").split(",")
                        pixels.append((int(x), int(y)))
                        i += 1
                patterns.append(PatternDecl(kind, tuple(pixels), direction))
            else:
                raise ParseError(f"unknown key {key!r}", path=path, line=lineno)
        except ParseError:
            raise
        except Exception as exc:
            raise ParseError(f"cannot parse {line!r}: {exc}", path=path, line=lineno)

    if size is None or grid is None:
        raise ParseError("scene needs size and grid lines", path=path)
    if illuminant_decl is None:
        illuminant_decl = Spectrum.constant(grid, 1.0)
    if medium_decl == "custom":
        if medium_c is None or medium_B is None:
            raise ParseError("custom medium needs medium_c and medium_B", path=path)
        medium_decl = MediumParams(grid, Spectrum(grid, medium_c), Spectrum(grid, medium_B))
    if medium_decl is None:
        raise ParseError("scene needs a medium line", path=path)
    return SceneSpec(
        name=name,
        width=size[0],
        height=size[1],
        grid=grid,
        illuminant=illuminant_decl,
        regions=tuple(regions),
        medium=medium_decl,
        noise=noise,
        patterns=tuple(patterns),
    )


def write_scene(path, spec: SceneSpec):
    """Serialize a scene; materials are written as sampled values."""
    g = spec.grid
    lines = [
        SCENE_MAGIC,
        f"name {spec.name}",
        f"size {spec.width} {spec.height}",
        f"grid {_fmt(g.lambda_min)} {_fmt(g.lambda_max)} {g.n_bands}",
        f"illuminant values {_fmt_vec(spec.illuminant.values)}",
        "medium custom",
        f"medium_c {_fmt_vec(spec.medium.c.values)}",
        f"medium_B {_fmt_vec(spec.medium.B.values)}",
    ]
    seen = {}
    for r in spec.regions:
        if r.material.name not in seen:
            seen[r.material.name] = r.material
            lines.append(
                f"material {r.material.name} values {_fmt_vec(r.material.reflectance.values)}"
            )
    for r in spec.regions:
        if isinstance(r.depth, ConstantDepth):
            model = f"constant {_fmt(r.depth.z0)}"
        else:
            model = f"ramp {_fmt(r.depth.z0)} {_fmt(r.depth.gx)} {_fmt(r.depth.gy)}"
        lines.append(
            f"region {r.x0} {r.y0} {r.width} {r.height} {r.material.name} {model}"
        )
    if spec.noise is not None:
        lines.append(f"noise {spec.noise.model} {_fmt(spec.noise.sigma)} {spec.noise.seed}")
    for p in spec.patterns:
        px = " ".join(f"({x},{y})" for x, y in p.pixels)
        kind = PatternKind(p.kind).name.lower()
        if p.direction and p.direction != "x":
            lines.append(f"pattern {kind} {px} direction {p.direction}")
        else:
            lines.append(f"pattern {kind} {px}")
    lines.append("")
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines))


# -- sensitivity files --------------------------------------------------------------


def read_sensitivities(path, cond_bound=None) -> CameraModel:
    """Header line: n_channels n_bands lambda_min lambda_max; then one row of
    n_bands values per channel."""
    with open(path, "r", encoding="ascii") as f:
        lines = [ln for ln in f.read().splitlines()]
    rows = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise ParseError("empty sensitivity file", path=path, line=1)
    head = rows[0].split()
    if len(head) != 4:
        raise ParseError(
            "header must be: n_channels n_bands lambda_min lambda_max", path=path, line=1
        )
    try:
        n_ch, n_bands = int(head[0]), int(head[1])
        grid = make_grid(float(head[2]), float(head[3]), n_bands)
    except (ValueError, InvalidRangeError) as exc:
        raise ParseError(f"bad header: {exc}", path=path, line=1)
    if len(rows) - 1 != n_ch:
        raise ParseError(f"expected {n_ch} channel rows, got {len(rows) - 1}", path=path)
    sens = []
    for i, row in enumerate(rows[1:], start=2):
        vals = [float(t) for t in row.split()]
        if len(vals) != n_bands:
            raise ParseError(f"expected {n_bands} values per row", path=path, line=i)
        sens.append(Spectrum(grid, np.array(vals)))
    kwargs = {} if cond_bound is None else {"cond_bound": cond_bound}
    return CameraModel(grid, tuple(sens), **kwargs)


def write_sensitivities(path, cam: CameraModel):
    g = cam.grid
    lines = [f"{cam.n_channels} {g.n_bands} {_fmt(g.lambda_min)} {_fmt(g.lambda_max)}"]
    for s in cam.sensitivities:
        lines.append(_fmt_vec(s.values))
    lines.append("")
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines))


# -- recovery reports ----------------------------------------------------------------


def format_medium_estimate(est: MediumEstimate, index: int):
    lines = [f"estimate {index}", f"source {est.source}"]
    for b in range(est.grid.n_bands):
        lines.append(
            f"band {b}"
            f" c {_fmt(est.c_hat.values[b])}"
            f" B {_fmt(est.B_hat.values[b])}"
            f" degenerate {int(est.degenerate[b])}"
            f" b_spread {_fmt(est.b_spread[b])}"
            f" c_spread {_fmt(est.c_spread[b])}"
            f" phi_iters {int(est.phi_iterations[b])}"
        )
    return lines


def format_recovery_fit(fit) -> list:
    lines = [f"estimate 0", f"source recovery-set direction {fit.direction}"]
    for b in range(fit.grid.n_bands):
        if fit.degenerate[b]:
            lines.append(f"band {b} degenerate 1 failure {fit.failures[b]!r}")
            continue
        lines.append(
            f"band {b}"
            f" c {_fmt(fit.c_hat[b])}"
            f" B {_fmt(fit.B_hat[b])}"
            f" degenerate 0"
            f" slope {_fmt(fit.slope[b])}"
            f" intercept {_fmt(fit.intercept[b])}"
            f" support {int(fit.support[b])}"
            f" residual_scale {_fmt(fit.residual_scale[b])}"
            f" min_f_gap {_fmt(fit.min_f_gap[b])}"
            f" tol {_fmt(fit.tol[b])}"
        )
    return lines


def write_report(path, lines):
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join([REPORT_MAGIC, *lines, ""]))


def parse_report(path) -> dict:
    """Light parser for report files: returns {'header': {...}, 'blocks': [...]}.

    Each block is a dict with 'lines' (list of token lists). Enough structure
    for tests and scripting without committing to a serialization library.
    """
    with open(path, "r", encoding="ascii") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != REPORT_MAGIC:
        raise ParseError(f"not a {REPORT_MAGIC} file", path=path, line=1)
    header = {}
    blocks = []
    current = None
    for raw in lines[1:]:
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        tok = raw.split()
        if current is None and tok[0] in ("estimate", "consistency", "truth-errors"):
            current = {"type": tok[0], "lines": []}
            blocks.append(current)
            if len(tok) > 1:
                current["index"] = tok[1]
            continue
        if tok[0] == "end":
            current = None
            continue
        if tok[0] in ("estimate", "consistency", "truth-errors"):
            current = {"type": tok[0], "lines": []}
            blocks.append(current)
            continue
        if current is None:
            header[tok[0]] = " ".join(tok[1:])
        else:
            current["lines"].append(tok)
    return {"header": header, "blocks": blocks}


def report_band_values(report: dict, estimate_index: int = 0, field: str = "c"):
    """Extract a per-band field from the Nth estimate block of a parsed report."""
    est_blocks = [b for b in report["blocks"] if b["type"] == "estimate"]
    block = est_blocks[estimate_index]
    out = {}
    for tok in block["lines"]:
        if tok[0] != "band":
            continue
        band = int(tok[1])
        kv = dict(zip(tok[2::2], tok[3::2]))
        if field in kv:
            out[band] = float(kv[field])
    return out


# -- previews ---------------------------------------------------------------------


def write_pgm(path, values: np.ndarray):
    """8-bit binary portable graymap, normalized by the global max."""
    v = np.asarray(values, dtype=np.float64)
    vmax = float(v.max()) if v.size and v.max() > 0 else 1.0
    img = np.clip(np.round(255.0 * v / vmax), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())
