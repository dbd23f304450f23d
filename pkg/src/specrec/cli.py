"""Command-line interface.

Subcommands: render, estimate, recover, project, demo, scenes. Exit status
is a stable contract: 0 success, 1 usage or parse error, 2 numerical failure
(degeneracy, no consensus, guard trips). All commands are deterministic
given identical inputs, seeds, and thread counts.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import __version__
from . import io as sio
from .camera import best_approx, gaussian_rgb_camera, null_perturbation, project
from .errors import (
    AllBandsDegenerateError,
    NumericalError,
    OverflowGuardError,
    SpecrecError,
    UnknownDemoError,
    UsageError,
)
from .medium import DEFAULT_CZ_GUARD, MediumParams, forward_model, invert_model
from .patterns import (
    DEFAULT_C_MAX,
    DEFAULT_EPS_Z,
    consistency_check,
    solve_pattern,
)
from .recovery import fit_recovery_set, necessity_estimator
from .scene import BUILTIN_SCENE_NAMES, builtin_scene, render
from .spectral import Spectrum, inner_product, make_grid, norm


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are exit status 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common_flags(p):
    p.add_argument("--tol-z", type=float, default=DEFAULT_EPS_Z,
                   help="depth equality/degeneracy tolerance in meters")
    p.add_argument("--tol-f", type=float, default=None,
                   help="radiance denominator tolerance (default: 1e-12 * dynamic range)")
    p.add_argument("--c-max", type=float, default=DEFAULT_C_MAX,
                   help="ceiling of the attenuation search bracket, 1/m")
    p.add_argument("--seed", type=int, default=None,
                   help="seed override for noise / hypothesis sampling")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for per-band work (results are identical)")
    p.add_argument("--preview", action="store_true",
                   help="also write per-band grayscale .pgm previews")


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="specrec", description=__doc__)
    top.add_argument("--version", action="version", version=f"specrec {__version__}")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", parents=[], help="render a scene to cube files")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scene", help="SCENE/1 file")
    src.add_argument("--builtin", help=f"built-in scene: {', '.join(BUILTIN_SCENE_NAMES)}")
    p.add_argument("--out", required=True, help="output path prefix")
    _common_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("scenes", help="list built-in scenes")
    p.add_argument("--dump", nargs=2, metavar=("NAME", "FILE"),
                   help="write a built-in scene as a SCENE/1 file")
    p.set_defaults(func=cmd_scenes)

    p = sub.add_parser("estimate", help="estimate medium parameters from a cube")
    p.add_argument("cube", help="apparent cube with depth plane")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--patterns", help="PATTERNS/1 file of pattern instances")
    mode.add_argument("--recovery-set", action="store_true",
                      help="majority consensus over the whole image")
    p.add_argument("--direction", choices=("x", "y"), default="x")
    p.add_argument("--report", help="write the recovery report here (default: stdout)")
    p.add_argument("--out-medium", help="write the estimated medium here")
    p.add_argument("--truth-medium", help="MEDIUM/1 file for error reporting")
    p.add_argument("--truth-inherent", help="inherent cube for recovered-L error stats")
    _common_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("recover", help="invert the image formation model")
    p.add_argument("cube", help="apparent cube with depth plane")
    p.add_argument("--medium", required=True, help="MEDIUM/1 file")
    p.add_argument("--out", required=True, help="output inherent cube")
    p.add_argument("--guard", type=float, default=DEFAULT_CZ_GUARD,
                   help="c*z ceiling before a pixel trips the overflow guard")
    p.add_argument("--max-guard-frac", type=float, default=0.0,
                   help="tolerated fraction of guard-tripping pixels (zero-filled, warned)")
    _common_flags(p)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("project", help="project a cube through camera sensitivities")
    p.add_argument("cube")
    p.add_argument("--sensitivities", required=True)
    p.add_argument("--out", required=True, help="output channel-intensity cube")
    p.add_argument("--best-approx", action="store_true",
                   help="also write <out>.reconstructed.cube and <out>.residual.cube")
    p.add_argument("--cond-bound", type=float, default=None)
    _common_flags(p)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("demo", help="run an executable narrative")
    p.add_argument("name", help="ill-posed-camera | ill-posed-medium | necessity")
    _common_flags(p)
    p.set_defaults(func=cmd_demo)
    return top


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse --help/--version
        return 0 if not exc.code else 1


def _write_previews(prefix, values):
    for b in range(values.shape[2]):
        sio.write_pgm(f"{prefix}.band{b:02d}.pgm", values[:, :, b])


def cmd_render(args) -> int:
    if args.builtin:
        spec = builtin_scene(args.builtin)
    else:
        spec = sio.read_scene(args.scene)
    result = render(spec, seed_override=args.seed)
    out = args.out
    sio.write_image_cube(f"{out}.apparent.cube", result.F, result.depth)
    sio.write_image_cube(f"{out}.inherent.cube", result.L)
    sio.write_medium_params(f"{out}.medium", result.truth)
    sio.write_patterns(f"{out}.patterns", spec.grid, result.patterns)
    print(f"scene {spec.name} size {spec.width}x{spec.height} bands {spec.grid.n_bands}")
    for i, inst in enumerate(result.patterns):
        px = " ".join(f"({x},{y})" for x, y in inst.pixels)
        print(f"pattern {i} kind {int(inst.kind)} {inst.kind.name} pixels {px}")
    if result.noise_clamped:
        print(f"noise clamped {result.noise_clamped} negative samples to 0")
    for suffix in (".apparent.cube", ".inherent.cube", ".medium", ".patterns"):
        print(f"wrote {out}{suffix}")
    if args.preview:
        _write_previews(out, result.F.cube)
    return 0


def cmd_scenes(args) -> int:
    if args.dump:
        name, path = args.dump
        sio.write_scene(path, builtin_scene(name))
        print(f"wrote {path}")
        return 0
    for name in BUILTIN_SCENE_NAMES:
        spec = builtin_scene(name)
        kinds = ",".join(str(int(p.kind)) for p in spec.patterns) or "-"
        print(
            f"{name:16s} {spec.width}x{spec.height} bands {spec.grid.n_bands:2d}"
            f" patterns {kinds}"
        )
    return 0


def _truth_error_lines(grid, c_hat, B_hat, degenerate, truth, L_hat=None, L_truth=None):
    lines = ["truth-errors"]
    for b in range(grid.n_bands):
        if degenerate[b]:
            lines.append(f"band {b} degenerate 1")
            continue
        ce = float(abs(c_hat[b] - truth.c.values[b]) / abs(truth.c.values[b]))
        be = float(abs(B_hat[b] - truth.B.values[b]) / max(abs(truth.B.values[b]), 1e-300))
        lines.append(f"band {b} c_rel_err {ce!r} B_rel_err {be!r}")
    if L_hat is not None and L_truth is not None:
        scale = np.maximum(np.abs(L_truth), 1e-3 * max(float(np.max(np.abs(L_truth))), 1e-300))
        rel = np.abs(L_hat - L_truth) / scale
        lines.append(f"L_err_max {float(np.max(rel))!r}")
        lines.append(f"L_err_median {float(np.median(rel))!r}")
        lines.append(f"L_err_p95 {float(np.percentile(rel, 95))!r}")
    lines.append("end")
    return lines


def _config_lines(args, mode):
    seed = 0 if args.seed is None else args.seed
    return [
        f"generator specrec {__version__}",
        f"mode {mode}",
        f"config eps_z {args.tol_z!r}",
        f"config eps_f {'auto' if args.tol_f is None else repr(args.tol_f)}",
        f"config c_max {args.c_max!r}",
        f"config seed {seed}",
        f"config threads {args.threads}",
    ]


def cmd_estimate(args) -> int:
    cube = sio.read_cube(args.cube)
    F = cube.to_image()
    depth = cube.to_depth()
    truth = sio.read_medium(args.truth_medium).to_medium_params() if args.truth_medium else None
    L_truth = sio.read_cube(args.truth_inherent).values if args.truth_inherent else None
    seed = 0 if args.seed is None else args.seed

    lines = _config_lines(args, "patterns" if args.patterns else "recovery-set")
    lines.append(f"source {args.cube}")
    estimates = []
    if args.patterns:
        grid, instances = sio.read_patterns(args.patterns)
        if grid != F.grid:
            raise UsageError(f"patterns grid {grid} does not match cube grid {F.grid}")
        for i, inst in enumerate(instances):
            est = solve_pattern(
                inst, F, depth,
                c_max=args.c_max, eps_z=args.tol_z, eps_f=args.tol_f,
                source=f"pattern {i} kind {int(inst.kind)} {inst.kind.name}",
            )
            estimates.append(est)
            lines.extend(sio.format_medium_estimate(est, i))
            lines.append("end")
        if not estimates:
            raise UsageError("patterns file contains no patterns")
        if all(e.degenerate.all() for e in estimates):
            raise AllBandsDegenerateError("every band of every pattern is degenerate")
        for e in estimates:
            if e.n_degenerate():
                print(
                    f"warning: {e.source}: {e.n_degenerate()} degenerate bands",
                    file=sys.stderr,
                )
        if len(estimates) >= 2:
            rep = consistency_check(estimates)
            lines.extend([
                "consistency",
                f"n_estimates {rep.n_estimates}",
                f"bands_compared {rep.bands_compared}",
                f"max_c_discrepancy {rep.max_c_discrepancy!r}",
                f"max_B_discrepancy {rep.max_B_discrepancy!r}",
                f"threshold {rep.threshold!r}",
                f"pass {int(rep.passed)}",
                "end",
            ])
        first = estimates[0]
        c_hat, B_hat = first.c_hat.values, first.B_hat.values
        degenerate = first.degenerate
    else:
        fit = fit_recovery_set(
            F, depth, args.direction,
            eps_z=args.tol_z, seed=seed, threads=max(1, args.threads),
        )
        if fit.degenerate.all():
            raise AllBandsDegenerateError(
                "recovery-set consensus failed on every band: "
                + "; ".join(f for f in fit.failures if f)
            )
        for b in range(F.grid.n_bands):
            if fit.degenerate[b]:
                print(f"warning: band {b}: {fit.failures[b]}", file=sys.stderr)
        lines.extend(sio.format_recovery_fit(fit))
        lines.append("end")
        c_hat, B_hat = fit.c_hat, fit.B_hat
        degenerate = fit.degenerate

    if truth is not None:
        L_hat = None
        if L_truth is not None and not degenerate.any():
            est_medium = MediumParams(
                F.grid, Spectrum(F.grid, c_hat), Spectrum(F.grid, B_hat)
            )
            L_hat = invert_model(F, depth, est_medium).cube
        lines.extend(
            _truth_error_lines(F.grid, c_hat, B_hat, degenerate, truth, L_hat, L_truth)
        )

    if args.report:
        sio.write_report(args.report, lines)
        print(f"wrote {args.report}")
    else:
        print("\n".join([sio.REPORT_MAGIC, *lines]))
    if args.out_medium:
        sio.write_medium(args.out_medium, F.grid, c_hat, B_hat, degenerate)
        print(f"wrote {args.out_medium}")
    return 0


def cmd_recover(args) -> int:
    cube = sio.read_cube(args.cube)
    F = cube.to_image()
    depth = cube.to_depth()
    medium = sio.read_medium(args.medium).to_medium_params()
    cz = medium.c.values[None, None, :] * depth.z[:, :, None]
    tripped = cz > args.guard
    bad_pixels = np.any(tripped, axis=2)
    frac = float(np.count_nonzero(bad_pixels)) / bad_pixels.size
    if frac > args.max_guard_frac:
        raise OverflowGuardError(
            f"{np.count_nonzero(bad_pixels)} pixels ({frac:.2%}) exceed c*z guard "
            f"{args.guard:g} (tolerated fraction {args.max_guard_frac:g})"
        )
    if frac > 0:
        print(
            f"warning: {np.count_nonzero(bad_pixels)} pixels exceed the c*z guard; "
            "their bands are written as 0",
            file=sys.stderr,
        )
        e = np.exp(np.where(tripped, 0.0, cz))
        L = e * F.cube + (1.0 - e) * medium.B.values[None, None, :]
        L[tripped] = 0.0
        sio.write_cube(args.out, L, F.grid.lambda_min, F.grid.lambda_max, "inherent")
    else:
        L_img = invert_model(F, depth, medium, cz_guard=args.guard)
        sio.write_image_cube(args.out, L_img)
        L = L_img.cube
    print(f"wrote {args.out}")
    if args.preview:
        _write_previews(args.out, L)
    return 0


def cmd_project(args) -> int:
    cube = sio.read_cube(args.cube)
    cam = sio.read_sensitivities(args.sensitivities, cond_bound=args.cond_bound)
    if cam.grid != cube.grid:
        raise UsageError(
            f"sensitivity grid {cam.grid} does not match cube grid {cube.grid}"
        )
    h, w, k = cube.values.shape
    weights = cam.grid.trap_weights
    sens = np.stack([s.values for s in cam.sensitivities])  # (J, K)
    flat = cube.values.reshape(-1, k)
    P = flat @ (sens * weights).T  # (N, J)
    sio.write_cube(
        args.out, P.reshape(h, w, cam.n_channels),
        cube.lambda_min, cube.lambda_max, "channels",
    )
    print(f"wrote {args.out}")
    if args.best_approx:
        cam._check_conditioning()
        coeffs = np.linalg.solve(cam.gram, P.T).T  # (N, J)
        recon = coeffs @ sens  # (N, K)
        sio.write_cube(
            f"{args.out}.reconstructed.cube", recon.reshape(h, w, k),
            cube.lambda_min, cube.lambda_max, cube.kind,
        )
        resid = flat - recon
        rnorm = np.sqrt((resid * resid) @ weights).reshape(h, w, 1)
        sio.write_cube(
            f"{args.out}.residual.cube", rnorm,
            cube.lambda_min, cube.lambda_max, "map",
        )
        print(f"wrote {args.out}.reconstructed.cube")
        print(f"wrote {args.out}.residual.cube")
    if args.preview:
        _write_previews(args.out, P.reshape(h, w, cam.n_channels))
    return 0


def cmd_demo(args) -> int:
    seed = 7 if args.seed is None else args.seed
    if args.name == "ill-posed-camera":
        grid = make_grid()
        cam = gaussian_rgb_camera(grid)
        dF = null_perturbation(cam, seed)
        base = Spectrum(grid, 0.5 + 0.4 * np.sin(grid.wavelengths / 40.0) ** 2)
        P0 = project(base, cam)
        P1 = project(base + dF, cam)
        dP = np.max(np.abs(P1 - P0))
        print(f"||dF||_L2 = {norm(dF)!r}")
        print(f"max |P(F+dF) - P(F)| over channels = {float(dP)!r}")
        ok = norm(dF) > 0 and dP < 1e-10
        print("PASS: perturbation is invisible to the camera" if ok else "FAIL")
        return 0 if ok else 2
    if args.name == "ill-posed-medium":
        spec = builtin_scene("dark-pair")
        result = render(spec)
        rng = np.random.default_rng(seed)
        grid = spec.grid
        c2 = Spectrum(grid, result.truth.c.values * rng.uniform(1.2, 1.8, grid.n_bands))
        B2 = Spectrum(grid, result.truth.B.values * rng.uniform(0.3, 0.9, grid.n_bands))
        alt = MediumParams(grid, c2, B2)
        L2 = invert_model(result.F, result.depth, alt)
        F2 = forward_model(L2, result.depth, alt)
        dF = float(np.max(np.abs(F2.cube - result.F.cube)))
        print(f"truth medium: c[0] = {float(result.truth.c.values[0])!r} B[0] = {float(result.truth.B.values[0])!r}")
        print(f"alternative : c[0] = {float(c2.values[0])!r} B[0] = {float(B2.values[0])!r}")
        print(f"max |F' - F| = {dF!r} (two distinct (c, B, L) triples, identical image)")
        ok = dF < 1e-12
        print("PASS: model is ambiguous without cross-pixel constraints" if ok else "FAIL")
        return 0 if ok else 2
    if args.name == "necessity":
        grid = make_grid(400, 700, 5)
        c_true, B_true = math.log(2.0), 0.5
        medium = MediumParams(
            grid, Spectrum.constant(grid, c_true), Spectrum.constant(grid, B_true)
        )
        from .medium import DepthMap, SpectralImage

        L = np.zeros((1, 2, grid.n_bands))
        L[0, 0, :] = 1.0
        Li = SpectralImage(grid, L, "inherent")
        depth = DepthMap(np.full((1, 2), 1.0))
        F = forward_model(Li, depth, medium)
        c_hat, B_hat = necessity_estimator(F, Li, depth, (0, 0), (1, 0), band=0)
        print(f"known (L, z) at two equal-depth pixels; F1 = {float(F.cube[0,0,0])!r} F2 = {float(F.cube[0,1,0])!r}")
        print(f"recovered c = {float(c_hat)!r} (truth {c_true!r})")
        print(f"recovered B = {float(B_hat)!r} (truth {B_true!r})")
        ok = abs(c_hat - c_true) < 1e-10 * c_true and abs(B_hat - B_true) < 1e-10
        print("PASS: estimating L forces estimating the medium" if ok else "FAIL")
        return 0 if ok else 2
    raise UnknownDemoError(
        f"unknown demo {args.name!r}; try ill-posed-camera, ill-posed-medium, necessity"
    )


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
