"""Main CLI entry point for via reconstruction and inspection."""

import argparse
from collections.abc import Sequence
import contextlib
import os
from pathlib import Path
import sys
import tempfile

from pydantic import ValidationError

from via_inspector.config import JobConfig, LightConfig, load_scene
from via_inspector.depth_integration import integrate
from via_inspector.errors import InputError, InvalidParameter, NumericalError
from via_inspector.formats import (
    emit_metrics,
    emit_summary,
    emit_trials,
    encode_depth_map,
    encode_pgm,
    load_depth_map,
    load_image_stack,
    read_summary,
)
from via_inspector.illumination import ObjectiveSpec, SubstrateSpec, light_height_range
from via_inspector.leveling import LevelingParams, default_leveling_params, level_depth, metrology_leveling_params
from via_inspector.logger import logger, set_level
from via_inspector.metrology import ViaMeasurement, compare_to_reference, measure_vias, trial_statistics
from via_inspector.photometric_stereo import estimate_normals, normals_to_gradients, smooth_normals
from via_inspector.rasters import DepthMap, ImageStack, LightSet
from via_inspector.settings import InspectionSettings
from via_inspector.synthetic import analytic_depth, render_scene


EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2

Outputs = dict[Path, bytes]


class _ArgumentParser(argparse.ArgumentParser):
    """Argument parser reporting usage errors as input errors instead of exiting."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise InvalidParameter(message)


def reconstruct_depth(
    stack: ImageStack,
    lights: LightSet,
    shadow_threshold: float | None = None,
    refit_shadows: bool | None = None,
    normal_sigma: float | None = None,
) -> DepthMap:
    """
    Run normal estimation, slope conversion and Poisson integration on one acquisition.

    ``refit_shadows`` and ``normal_sigma`` default to the inspection settings;
    a positive ``normal_sigma`` smooths the normals before integration.
    """
    settings = InspectionSettings()
    refit_shadows = settings.refit_shadows if refit_shadows is None else refit_shadows
    normal_sigma = settings.normal_sigma if normal_sigma is None else normal_sigma
    field = estimate_normals(stack, lights, shadow_threshold, refit_shadows=refit_shadows)
    field = smooth_normals(field, normal_sigma)
    return integrate(normals_to_gradients(field), stack.pixel_pitch)


def run_job(job: JobConfig) -> Outputs:
    """
    Run reconstruct, level, inspect and optionally compare for a job.

    Every closed via outline is measured; with a reference list the
    measurements are compared in reading order.

    Parameters
    ----------
    job : JobConfig
        Validated job description.

    Returns
    -------
    dict of Path to bytes
        Every output file of the job, not yet written.

    """
    lights = job.light_set()
    stack = load_image_stack(job.images, job.pixel_pitch)
    depth = reconstruct_depth(stack, lights, job.shadow_threshold, job.refit_shadows, job.normal_sigma)
    outputs: Outputs = {job.depth_out: encode_depth_map(depth)}

    if not job.skip_leveling:
        depth = level_depth(depth, job.leveling or metrology_leveling_params(depth))
        if job.leveled_out is not None:
            outputs[job.leveled_out] = encode_depth_map(depth)

    measurements = measure_vias(depth, job.slice_count, id_prefix=job.via_prefix)
    outputs[job.metrics_out] = emit_metrics(measurements).encode()
    if job.summary_out is not None:
        outputs[job.summary_out] = emit_summary(measurements).encode()
    if job.reference is not None and job.report_out is not None:
        report = compare_to_reference(measurements, job.reference)
        outputs[job.report_out] = emit_metrics(report).encode()
    return outputs


def _render(args: argparse.Namespace) -> Outputs:
    scene = load_scene(args.scene)
    if args.noise is not None:
        scene = scene.model_copy(update={"noise_sigma": args.noise})
    if scene.noise_sigma < 0.0:
        raise InvalidParameter(f"noise must be >= 0, got {scene.noise_sigma}")
    lights = LightConfig.from_json(args.lights).to_light_set()
    stack = render_scene(scene, lights, seed=args.seed)

    out_dir = Path(args.out_dir)
    outputs: Outputs = {
        out_dir / f"frame_{index:02d}.pgm": encode_pgm(frame) for index, frame in enumerate(stack.frames)
    }
    outputs[out_dir / "truth.fdm1"] = encode_depth_map(analytic_depth(scene))
    outputs[out_dir / "lights.json"] = LightConfig.from_light_set(lights).model_dump_json(indent=2).encode()
    logger.info(f"Rendered {stack.count} frames of scene '{scene.name}' into {out_dir}")
    return outputs


def _check_normal_sigma(normal_sigma: float) -> None:
    if normal_sigma < 0.0:
        raise InvalidParameter(f"normal sigma must be >= 0, got {normal_sigma}")


def _reconstruct(args: argparse.Namespace) -> Outputs:
    _check_normal_sigma(args.normal_sigma)
    lights = LightConfig.from_json(args.lights).to_light_set()
    stack = load_image_stack(args.images, args.pitch)
    depth = reconstruct_depth(stack, lights, args.shadow_threshold, args.refit_shadows, args.normal_sigma)
    return {Path(args.out): encode_depth_map(depth)}


def _level(args: argparse.Namespace) -> Outputs:
    depth = load_depth_map(args.input)
    defaults = metrology_leveling_params(depth) if args.preset == "metrology" else default_leveling_params(depth)
    params = LevelingParams(
        spatial_sigma=defaults.spatial_sigma if args.spatial_sigma is None else args.spatial_sigma,
        depth_sigma=defaults.depth_sigma if args.depth_sigma is None else args.depth_sigma,
        window_radius=args.window_radius,
        mean_region=args.mean_region,
    )
    return {Path(args.out): encode_depth_map(level_depth(depth, params))}


def _inspect(args: argparse.Namespace) -> Outputs:
    measurements = measure_vias(load_depth_map(args.input), args.slices, id_prefix=args.via_prefix)
    outputs: Outputs = {Path(args.out): emit_metrics(measurements).encode()}
    if args.summary:
        outputs[Path(args.summary)] = emit_summary(measurements).encode()
    return outputs


def _compare(args: argparse.Namespace) -> Outputs:
    reference = read_summary(args.reference)
    measured = [
        ViaMeasurement(depth=value.depth, diameter=value.diameter, via_id=value.via_id or str(index))
        for index, value in enumerate(read_summary(args.input), start=1)
    ]
    return {Path(args.out): emit_metrics(compare_to_reference(measured, reference)).encode()}


def _trials(args: argparse.Namespace) -> Outputs:
    if args.seeds < 1:
        raise InvalidParameter(f"seeds must be >= 1, got {args.seeds}")
    _check_normal_sigma(args.normal_sigma)
    scene = load_scene(args.scene)
    if args.noise is not None:
        scene = scene.model_copy(update={"noise_sigma": args.noise})
    if scene.noise_sigma < 0.0:
        raise InvalidParameter(f"noise must be >= 0, got {scene.noise_sigma}")
    lights = LightConfig.from_json(args.lights).to_light_set()

    trials = []
    for seed in range(args.first_seed, args.first_seed + args.seeds):
        depth = reconstruct_depth(
            render_scene(scene, lights, seed=seed), lights, normal_sigma=args.normal_sigma
        )
        depth = level_depth(depth, metrology_leveling_params(depth))
        trials.append(measure_vias(depth, args.slices))
    logger.info(f"Measured scene '{scene.name}' over {args.seeds} noise seeds")
    return {Path(args.out): emit_trials(trial_statistics(trials)).encode()}


def _lightcheck(args: argparse.Namespace) -> Outputs:
    span = light_height_range(
        ObjectiveSpec(numerical_aperture=args.na, immersion_index=args.immersion_index),
        SubstrateSpec(refractive_index=args.n_substrate, exit_index=args.n_exit),
        args.offset_mm,
    )
    print("EMPTY" if span.is_empty else f"{span.h_min:.6g} {span.h_max:.6g}")
    return {}


def _pipeline(args: argparse.Namespace) -> Outputs:
    return run_job(JobConfig.from_json(args.job))


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with one subparser per workflow step."""
    settings = InspectionSettings()
    parser = _ArgumentParser(prog="via_inspector", description="Photometric stereo via inspection CLI")
    parser.add_argument("--verbose", action="store_true", help="Log debug messages")
    subparsers = parser.add_subparsers(dest="command", required=True)

    render = subparsers.add_parser("render", help="Render a synthetic scene under a light layout")
    render.add_argument("scene", type=Path, help="Scene JSON file")
    render.add_argument("--lights", type=Path, required=True, help="Light layout JSON file")
    render.add_argument("--out-dir", type=Path, required=True, help="Directory receiving frames and ground truth")
    render.add_argument("--noise", type=float, help="Intensity noise standard deviation (overrides the scene)")
    render.add_argument("--seed", type=int, default=0, help="Noise seed")
    render.set_defaults(handler=_render)

    reconstruct = subparsers.add_parser("reconstruct", help="Reconstruct a depth map from PGM frames")
    reconstruct.add_argument("--lights", type=Path, required=True, help="Light layout JSON file")
    reconstruct.add_argument("--pitch", type=float, required=True, help="Micrometers per pixel")
    reconstruct.add_argument("--out", type=Path, required=True, help="Output FDM1 depth map")
    reconstruct.add_argument("--shadow-threshold", type=float, default=settings.shadow_threshold)
    reconstruct.add_argument(
        "--refit-shadows",
        action=argparse.BooleanOptionalAction,
        default=settings.refit_shadows,
        help="Drop samples with non-positive fitted shading and solve again",
    )
    reconstruct.add_argument(
        "--normal-sigma", type=float, default=settings.normal_sigma, help="Normal smoothing sigma in pixels, 0 disables"
    )
    reconstruct.add_argument("images", nargs="+", type=Path, help="P5 frames in light order")
    reconstruct.set_defaults(handler=_reconstruct)

    level = subparsers.add_parser("level", help="Level a depth map")
    level.add_argument("--in", dest="input", type=Path, required=True, help="Input FDM1 depth map")
    level.add_argument("--out", type=Path, required=True, help="Output FDM1 depth map")
    level.add_argument("--spatial-sigma", type=float, help="Spatial Gaussian sigma in pixels")
    level.add_argument("--depth-sigma", type=float, help="Depth weight sigma in micrometers")
    level.add_argument("--window-radius", type=int, help="Window half-size in pixels")
    level.add_argument("--mean-region", choices=["full", "surface"], default="full")
    level.add_argument(
        "--preset",
        choices=["metrology", "smooth"],
        default="metrology",
        help="Defaults for unset sigmas: 1 px and the full peak-to-valley, or 2 px and 10 %% of it",
    )
    level.set_defaults(handler=_level)

    inspect = subparsers.add_parser("inspect", help="Measure depth, diameter and roundness profile")
    inspect.add_argument("--slices", type=int, default=settings.slice_count, help="Number of profile slices")
    inspect.add_argument("--in", dest="input", type=Path, required=True, help="Input FDM1 depth map")
    inspect.add_argument("--out", type=Path, required=True, help="Output profile CSV")
    inspect.add_argument("--summary", type=Path, help="Output depth/diameter summary CSV")
    inspect.add_argument("--via-prefix", default="", help="Prefix of the via identifiers 1, 2, ... in reading order")
    inspect.set_defaults(handler=_inspect)

    compare = subparsers.add_parser("compare", help="Compare measured depth and diameter with references")
    compare.add_argument("--reference", type=Path, required=True, help="Reference summary CSV")
    compare.add_argument("--in", dest="input", type=Path, required=True, help="Measured summary CSV")
    compare.add_argument("--out", type=Path, required=True, help="Output comparison CSV")
    compare.set_defaults(handler=_compare)

    trials = subparsers.add_parser("trials", help="Measure a synthetic scene over several noise seeds")
    trials.add_argument("scene", type=Path, help="Scene JSON file")
    trials.add_argument("--lights", type=Path, required=True, help="Light layout JSON file")
    trials.add_argument("--seeds", type=int, required=True, help="Number of noise seeds")
    trials.add_argument("--first-seed", type=int, default=0, help="First noise seed")
    trials.add_argument("--noise", type=float, help="Intensity noise standard deviation (overrides the scene)")
    trials.add_argument("--normal-sigma", type=float, default=1.0, help="Normal smoothing sigma in pixels")
    trials.add_argument("--slices", type=int, default=settings.slice_count, help="Number of profile slices")
    trials.add_argument("--out", type=Path, required=True, help="Output statistics CSV")
    trials.set_defaults(handler=_trials)

    lightcheck = subparsers.add_parser("lightcheck", help="Print the admissible light height range")
    lightcheck.add_argument("--na", type=float, required=True, help="Objective numerical aperture")
    lightcheck.add_argument("--n-substrate", type=float, required=True, help="Substrate refractive index")
    lightcheck.add_argument("--offset-mm", type=float, required=True, help="Lateral light offset in millimeters")
    lightcheck.add_argument("--immersion-index", type=float, default=1.0, help="Objective immersion index")
    lightcheck.add_argument("--n-exit", type=float, default=1.0, help="Index of the medium behind the substrate")
    lightcheck.set_defaults(handler=_lightcheck)

    pipeline = subparsers.add_parser("pipeline", help="Run a JSON job: reconstruct, level, inspect, compare")
    pipeline.add_argument("--job", type=Path, required=True, help="Job JSON file")
    pipeline.set_defaults(handler=_pipeline)

    return parser


def _write_outputs(outputs: Outputs) -> None:
    """Write every output or none: payloads are staged beside their targets and renamed once all are written."""
    for path in outputs:
        if path.is_dir():
            raise IsADirectoryError(f"output path {path} is a directory")

    created: list[Path] = []
    staged: dict[Path, Path] = {}
    placed: list[Path] = []
    try:
        for path, payload in outputs.items():
            for parent in reversed(path.parents):
                if not parent.exists():
                    parent.mkdir()
                    created.append(parent)
            handle, name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
            staged[path] = Path(name)
            with os.fdopen(handle, "wb") as stream:
                stream.write(payload)
        for path, temporary in staged.items():
            existed = path.exists()
            os.replace(temporary, path)
            if not existed:
                placed.append(path)
    except OSError:
        for temporary in staged.values():
            temporary.unlink(missing_ok=True)
        for path in placed:
            path.unlink(missing_ok=True)
        for parent in reversed(created):
            with contextlib.suppress(OSError):
                parent.rmdir()
        raise

    for path, payload in outputs.items():
        logger.debug(f"Wrote {path} ({len(payload)} bytes)")


def run_cli(argv: Sequence[str] | None = None) -> int:
    """
    Parse arguments, run one subcommand and return its exit code.

    Every output is computed before the first file is written, and the files
    are renamed into place only after all of them were written, so a failing
    command leaves no new file behind.

    Returns
    -------
    int
        0 on success, 1 on input errors, 2 on numerical failures.

    """
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            set_level("DEBUG")
        outputs = args.handler(args)
        _write_outputs(outputs)
    except NumericalError as exc:
        logger.error(f"❌ {type(exc).__name__}: {exc}")
        return EXIT_NUMERICAL
    except (InputError, ValidationError, OSError) as exc:
        logger.error(f"❌ {type(exc).__name__}: {exc}")
        return EXIT_INPUT
    return EXIT_OK


def main() -> None:
    """Run the CLI and exit with its status code."""
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
