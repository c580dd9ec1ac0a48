"""
Command-line interface.

Verbs:
    odometry         frame-to-frame tracking over a TUM or synthetic sequence
    angle-sweep      failure rate per inter-frame rotation angle
    lambda-sweep     ATE/RPE for several regularization weights
    iteration-bench  mean ICP iterations for the three registration presets
    simulate-imu     perturb a ground-truth file with the IMU noise model
    evaluate         ATE/RPE of an estimated trajectory against ground truth
    synth            export a synthetic sequence in the TUM layout

Every verb is a pure function of its config, input files and --seed, so
reruns write byte-identical files. Wall-clock columns only appear with
--with-timing.

Exit codes: 0 ok, 2 config error, 3 data error, 4 tracking loss.
"""

import functools
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import click

from app.config import OUTPUT_DIR, WORKERS, setup_logging
from app.errors import (
    EXIT_CONFIG_ERROR,
    EXIT_DATA_ERROR,
    EXIT_TRACKING_LOSS,
    ConfigError,
    DataError,
    TrackingError,
)
from app.models import (
    IcpMode,
    ImuMode,
    ImuNoiseModel,
    IntrinsicsConfig,
    OrbitMotion,
    RunConfig,
    SourceKind,
)

logger = logging.getLogger(__name__)

DEFAULT_ANGLES = "5,10,15,20,25,30,35,40,45,50,55,60"
DEFAULT_LAMBDAS = "0.05,0.2,1,2,5"


def _float_list(ctx, param, value: Optional[str]) -> Optional[List[float]]:
    if value is None:
        return None
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}")


def handle_errors(func):
    """Map toolkit errors to exit codes"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ConfigError as e:
            logger.error("Configuration error: %s", e)
            sys.exit(EXIT_CONFIG_ERROR)
        except DataError as e:
            logger.error("Data error: %s", e)
            sys.exit(EXIT_DATA_ERROR)
        except TrackingError as e:
            logger.error("Tracking failed: %s", e)
            sys.exit(EXIT_TRACKING_LOSS)
    return wrapper


def build_run_config(
    config_path: Optional[str],
    seed: Optional[int],
    output: Optional[str],
    scene: Optional[str] = None,
    tum: Optional[str] = None,
    frames: Optional[int] = None,
    imu: Optional[str] = None,
    mode: Optional[str] = None,
    lam: Optional[float] = None,
) -> RunConfig:
    """Load --config (or defaults) and apply flag overrides on top"""
    cfg = RunConfig.from_file(config_path) if config_path else RunConfig()

    source = cfg.source
    if tum:
        source = source.model_copy(update={"kind": SourceKind.TUM, "path": tum})
    if scene:
        source = source.model_copy(update={"kind": SourceKind.SYNTHETIC, "scene": scene})
    if frames is not None:
        if source.kind == SourceKind.SYNTHETIC:
            source = source.model_copy(update={"motion": source.motion.model_copy(update={"frames": frames})})
        source = source.model_copy(update={"max_frames": frames})

    icp = cfg.icp
    if mode:
        icp = icp.with_updates(mode=IcpMode(mode))
    if lam is not None:
        icp = icp.with_updates(lam=lam)

    imu_cfg = cfg.imu
    if imu:
        imu_cfg = imu_cfg.model_copy(update={"mode": ImuMode(imu)})

    updates = {"source": source, "icp": icp, "imu": imu_cfg}
    if seed is not None:
        updates["seed"] = seed
        updates["imu"] = imu_cfg.model_copy(update={"model": imu_cfg.model.model_copy(update={"seed": seed})})
    if output:
        updates["output_dir"] = output

    # re-validate the merged config
    return RunConfig.from_dict(json.loads(cfg.model_copy(update=updates).to_json()), source="flags")


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


@click.group()
@click.option("--log-file", default=None, help="Also log to LOG_DIR/<name>.log")
@click.option("--log-level", default=None, help="Override LOG_LEVEL")
def cli(log_file: Optional[str], log_level: Optional[str]):
    """Orientation-seeded point-to-plane ICP toolkit."""
    setup_logging(log_file, log_level)


run_options = [
    click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                 help="RunConfig JSON file; flags override it"),
    click.option("--seed", type=int, default=None, help="Seed for all randomness (default: config seed, 0)"),
    click.option("--output", type=click.Path(file_okay=False), default=None,
                 help=f"Output directory (default: config output_dir, '{OUTPUT_DIR}')"),
]


def with_run_options(func):
    for option in reversed(run_options):
        func = option(func)
    return func


@cli.command()
@with_run_options
@click.option("--scene", default=None, help="Synthetic scene name (default: corner)")
@click.option("--tum", type=click.Path(file_okay=False), default=None, help="TUM sequence directory")
@click.option("--frames", type=int, default=None, help="Limit / set the number of frames")
@click.option("--imu", type=click.Choice([m.value for m in ImuMode]), default=None,
              help="Orientation seeding (default: ground_truth)")
@click.option("--mode", type=click.Choice([m.value for m in IcpMode]), default=None,
              help="Iteration control (default: fixed_cadence)")
@click.option("--lambda", "lam", type=float, default=None, help="Rotation regularization weight (default: 5)")
@click.option("--with-timing", is_flag=True, help="Add wall-clock ms/frame to the summary")
@handle_errors
def odometry(config_path, seed, output, scene, tum, frames, imu, mode, lam, with_timing):
    """Track a sequence frame to frame and write trajectory, trace and summary."""
    from app.odometry import get_runner

    cfg = build_run_config(config_path, seed, output, scene, tum, frames, imu, mode, lam)
    result = get_runner().run(cfg)
    paths = result.write_outputs(cfg.output_dir, with_timing)

    click.echo(json.dumps(result.summary(with_timing), indent=2))
    click.echo(f"Wrote {paths['trajectory']}")
    if result.tracking_losses:
        logger.warning("%d tracking loss(es); poses were held", result.tracking_losses)
        sys.exit(EXIT_TRACKING_LOSS)


@cli.command("angle-sweep")
@click.option("--scene", default="corner", show_default=True)
@click.option("--angles", callback=_float_list, default=DEFAULT_ANGLES, show_default=True,
              help="Rotation angles in degrees, comma-separated")
@click.option("--trials", type=int, default=20, show_default=True, help="Trials per angle")
@click.option("--axis", callback=_float_list, default=None, help="Fixed rotation axis x,y,z (default: random)")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=WORKERS, show_default=True)
@click.option("--output", type=click.Path(file_okay=False), default=OUTPUT_DIR, show_default=True)
@handle_errors
def angle_sweep(scene, angles, trials, axis, seed, workers, output):
    """Failure rate of unseeded vs rotation-seeded registration per angle."""
    from app.bench.runner import get_runner

    if any(not 0 < a < 90 for a in angles):
        raise ConfigError("angles must lie in (0, 90) degrees")
    if trials < 1:
        raise ConfigError("--trials must be >= 1")
    if axis is not None and len(axis) != 3:
        raise ConfigError("--axis needs three components")

    report = get_runner().angle_sweep(scene, angles, trials, seed=seed, workers=workers, axis=axis)
    path = _write(Path(output) / "angle_sweep.csv", report.csv_text())
    click.echo(report.csv_text(), nl=False)
    click.echo(f"Wrote {path}")


@cli.command("lambda-sweep")
@with_run_options
@click.option("--lambdas", callback=_float_list, default=DEFAULT_LAMBDAS, show_default=True)
@click.option("--imu", type=click.Choice([ImuMode.GROUND_TRUTH.value, ImuMode.NOISY.value]), default=None,
              help="Orientation seeding (default: config, ground_truth)")
@click.option("--frames", type=int, default=None)
@handle_errors
def lambda_sweep(config_path, seed, output, lambdas, imu, frames):
    """ATE/RPE per regularization weight against an unregularized baseline."""
    from app.odometry import run_lambda_sweep

    cfg = build_run_config(config_path, seed, output, frames=frames, imu=imu)
    if cfg.imu.mode == ImuMode.OFF:
        raise ConfigError("lambda-sweep needs orientation seeding (imu mode ground_truth or noisy)")
    if any(lam < 0 for lam in lambdas):
        raise ConfigError("lambdas must be >= 0")

    report, _ = run_lambda_sweep(cfg, lambdas)
    out = Path(cfg.output_dir)
    report.to_csv(out / "lambda_sweep.csv")
    _write(out / "lambda_sweep.txt", report.render_text())
    click.echo(report.render_text(), nl=False)


@cli.command("iteration-bench")
@with_run_options
@click.option("--frames", type=int, default=None)
@click.option("--with-timing", is_flag=True, help="Add ms/frame columns")
@handle_errors
def iteration_bench(config_path, seed, output, frames, with_timing):
    """Mean iterations per frame: baseline fixed, seeded fixed, seeded median."""
    from app.bench.runner import get_runner

    cfg = build_run_config(config_path, seed, output, frames=frames)
    report = get_runner().iteration_bench(cfg)
    text = report.csv_text(with_timing)
    _write(Path(cfg.output_dir) / "iteration_bench.csv", text)
    click.echo(text, nl=False)


@cli.command("simulate-imu")
@click.argument("groundtruth", type=click.Path(exists=True, dir_okay=False))
@click.argument("out", type=click.Path(dir_okay=False))
@click.option("--model", "model_path", type=click.Path(dir_okay=False), default=None,
              help="ImuNoiseModel JSON file; flags override it")
@click.option("--amp-x", type=float, default=None, help="Degrees (default 3)")
@click.option("--amp-y", type=float, default=None, help="Degrees (default 3)")
@click.option("--amp-z", type=float, default=None, help="Degrees (default 10)")
@click.option("--phase-seed", type=int, default=None, help="Seed for unset phases (default 0)")
@click.option("--harmonics", type=int, default=None, help="Error frequency multiplier (default 1)")
@click.option("--seed", type=int, default=None, help="Seed for the optional random term (default 0)")
@handle_errors
def simulate_imu(groundtruth, out, model_path, amp_x, amp_y, amp_z, phase_seed, harmonics, seed):
    """Write GROUNDTRUTH with orientations perturbed by the IMU noise model."""
    from app.dataset import load_trajectory
    from app.imu import stream_from_trajectory, write_orientation_file

    model = ImuNoiseModel.from_file(model_path) if model_path else ImuNoiseModel()
    overrides = {
        key: value for key, value in {
            "amp_x": amp_x, "amp_y": amp_y, "amp_z": amp_z,
            "phase_seed": phase_seed, "harmonics": harmonics, "seed": seed,
        }.items() if value is not None
    }
    if overrides:
        model = ImuNoiseModel.from_dict({**model.model_dump(), **overrides}, source="flags")

    truth = load_trajectory(groundtruth)
    samples = stream_from_trajectory(truth, model)
    path = write_orientation_file(samples, truth, out)
    flagged = sum(s.gimbal_adjacent for s in samples)
    if flagged:
        logger.warning("%d orientation(s) near pitch +-90 deg", flagged)
    click.echo(f"Wrote {len(samples)} orientations to {path}")


@cli.command()
@click.argument("estimate", type=click.Path(exists=True, dir_okay=False))
@click.argument("groundtruth", type=click.Path(exists=True, dir_okay=False))
@click.option("--delta", type=float, default=1, show_default=True, help="RPE interval")
@click.option("--unit", type=click.Choice(["frames", "seconds"]), default="frames", show_default=True)
@click.option("--max-dt", type=float, default=0.02, show_default=True, help="Timestamp matching tolerance (s)")
@click.option("--svg", type=click.Path(dir_okay=False), default=None, help="Write a top-view trajectory plot")
@handle_errors
def evaluate(estimate, groundtruth, delta, unit, max_dt, svg):
    """ATE and RPE (RMSE, meters) of ESTIMATE against GROUNDTRUTH."""
    from app.dataset import load_trajectory
    from app.evaluation import ate, render_trajectory_svg, rpe
    from app.report_helpers import format_meters

    est = load_trajectory(estimate)
    truth = load_trajectory(groundtruth)
    try:
        ate_report = ate(est, truth, max_dt)
        rpe_report = rpe(est, truth, delta, unit, max_dt)
    except ValueError as e:
        raise ConfigError(str(e))

    click.echo(f"matched_poses {len(ate_report.matches)}")
    click.echo(f"ate_rmse_m {format_meters(ate_report.rmse)}")
    click.echo(f"ate_mean_m {format_meters(ate_report.mean)}")
    click.echo(f"ate_max_m {format_meters(ate_report.max)}")
    click.echo(f"rpe_rmse_m {format_meters(rpe_report.rmse)}")
    if svg:
        render_trajectory_svg(est, truth, svg, max_dt, title=Path(estimate).name)
        click.echo(f"Wrote {svg}")


@cli.command()
@click.argument("out", type=click.Path(file_okay=False))
@click.option("--scene", default="corner", show_default=True)
@click.option("--frames", type=int, default=30, show_default=True)
@click.option("--step-deg", type=float, default=1.5, show_default=True, help="Yaw per frame")
@click.option("--wobble-deg", type=float, default=2.0, show_default=True, help="Pitch wobble amplitude")
@click.option("--width", type=int, default=160, show_default=True)
@click.option("--height", type=int, default=120, show_default=True)
@handle_errors
def synth(out, scene, frames, step_deg, wobble_deg, width, height):
    """Ray cast an orbit over a scene and write it as a TUM sequence."""
    from app.bench.registry import get_scene
    from app.dataset import orbit_motion, synth_sequence, write_tum_sequence

    if frames < 2:
        raise ConfigError("--frames must be >= 2")
    motion = OrbitMotion(frames=frames, step_deg=step_deg, wobble_deg=wobble_deg)
    # focal length keeps the Kinect field of view at any resolution
    scale = width / 640.0
    intrinsics = IntrinsicsConfig(
        width=width, height=height, fx=525.0 * scale, fy=525.0 * scale,
        cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
    ).build()

    timestamps, poses = orbit_motion(motion)
    sequence = synth_sequence(get_scene(scene), poses, intrinsics, timestamps)
    root = write_tum_sequence(sequence, out)
    click.echo(f"Wrote {len(sequence)} frames to {root}")


def main():
    cli()


if __name__ == "__main__":
    main()
