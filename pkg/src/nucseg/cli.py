"""Command-line interface.

Exit codes: 0 on success, 1 for validation failures (bad inputs, inconsistent
datasets, bad flags), 2 for I/O errors.
"""

import csv
import sys

import click
import numpy as np

from . import io, pipeline
from .augment import COLLISION_POLICIES, JitterParams
from .config import load_config
from .costloss import COST_RULES, build_cost_matrix
from .errors import NucsegError
from .instances import N_CLASSES, REPORT_CLASS_IDS, REPORT_ORDER, SHORT_NAMES
from .postprocess import PostprocessParams, ProbabilityMaps, postprocess
from .stain import estimate_stain_profile
from .targets import HoVerMaps


@click.group()
def cli():
    """Nuclei segmentation toolkit: targets, post-processing, evaluation."""


def _resolved(config_path, flag_values, section_cls, section_name):
    """Merge explicit CLI flags over config-file values over defaults."""
    base = {}
    if config_path is not None:
        base = vars(load_config(config_path)[section_name]).copy()
    merged = {**vars(section_cls()), **base}
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    return section_cls(**merged)


def _config_workers(config_path, workers):
    if workers is not None:
        return workers
    if config_path is not None:
        return load_config(config_path)["workers"]
    return 1


@cli.command()
@click.option("--in-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--workers", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def targets(in_dir, out_dir, workers, config_path):
    """Write NP and offset-map training targets for a mask directory."""
    stems = pipeline.run_targets(
        in_dir, out_dir, workers=_config_workers(config_path, workers)
    )
    click.echo(f"wrote targets for {len(stems)} masks to {out_dir}")


@cli.command("postprocess")
@click.option("--np", "np_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--hover", "hover_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--nc", "nc_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out-instances", required=True, type=click.Path(dir_okay=False))
@click.option("--out-classes", required=True, type=click.Path(dir_okay=False))
@click.option("--np-threshold", type=float, default=None)
@click.option("--marker-threshold", type=float, default=None)
@click.option("--min-area", "min_instance_area", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def postprocess_cmd(
    np_path, hover_path, nc_path, out_instances, out_classes,
    np_threshold, marker_threshold, min_instance_area, config_path,
):
    """Convert network output grids into a classified instance segmentation."""
    params = _resolved(
        config_path,
        {
            "np_threshold": np_threshold,
            "marker_threshold": marker_threshold,
            "min_instance_area": min_instance_area,
        },
        PostprocessParams,
        "postprocess",
    )
    (np_prob,) = io.read_f32_grids(np_path)
    hover = io.read_hover_file(hover_path)
    nc_grids = io.read_f32_grids(nc_path)
    if len(nc_grids) != N_CLASSES + 1:
        raise NucsegError(
            f"--nc must hold {N_CLASSES + 1} channels, got {len(nc_grids)}"
        )
    pred = ProbabilityMaps(
        np_prob=np_prob,
        hover=HoVerMaps(h=hover.h, v=hover.v),
        nc_prob=np.stack(nc_grids, axis=-1),
    )
    inst, cls = postprocess(pred, params)
    io.write_instance_png(out_instances, inst)
    io.write_class_png(out_classes, cls)
    click.echo(f"{int(inst.max())} instances -> {out_instances}")


@cli.command()
@click.option("--pred-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--gt-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_json", required=True, type=click.Path(dir_okay=False))
@click.option("--csv", "out_csv", type=click.Path(dir_okay=False), default=None)
@click.option("--figures/--no-figures", default=True, help="Render report figures next to --out.")
@click.option("--manifest", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--workers", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def evaluate(pred_dir, gt_dir, out_json, out_csv, figures, manifest, workers, config_path):
    """Evaluate predictions against ground truth (per-class PQ, mPQ+, r2)."""
    from pathlib import Path

    figures_dir = Path(out_json).parent / "figures" if figures else None
    report = pipeline.run_evaluate(
        pred_dir,
        gt_dir,
        out_json=out_json,
        out_csv=out_csv,
        figures_dir=figures_dir,
        workers=_config_workers(config_path, workers),
        manifest=manifest,
    )
    click.echo(f"mPQ+ = {report.mpq_plus:.5f}  overall r2 = {report.overall_r2:.5f}")


@cli.command()
@click.option("--in-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--count", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--max-translation", type=int, default=None)
@click.option("--max-rotation", type=float, default=None)
@click.option("--collision", "collision_policy", type=click.Choice(COLLISION_POLICIES), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def augment(in_dir, out_dir, count, seed, max_translation, max_rotation,
            collision_policy, config_path):
    """Generate jittered pseudo ground-truth mask pairs."""
    params = _resolved(
        config_path,
        {
            "max_translation": max_translation,
            "max_rotation": max_rotation,
            "seed": seed,
            "collision_policy": collision_policy,
        },
        JitterParams,
        "jitter",
    )
    written = pipeline.run_augment(in_dir, out_dir, count, params)
    click.echo(f"wrote {len(written)} pseudo mask pairs to {out_dir}")


@cli.command()
@click.option("--template", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--in-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
def normalize(template, in_dir, out_dir):
    """Restain every image in a directory into the template's style."""
    outcomes = pipeline.run_normalize(template, in_dir, out_dir)
    passed = [stem for stem, status in outcomes if status == "passed-through"]
    click.echo(f"normalized {len(outcomes) - len(passed)} of {len(outcomes)} images")
    for stem in passed:
        click.echo(f"passed through blank tile: {stem}", err=True)


@cli.command("estimate-profile")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def estimate_profile(in_path, out_path):
    """Estimate a stain profile from a template tile."""
    profile = estimate_stain_profile(io.read_rgb_png(in_path))
    io.save_stain_profile(out_path, profile)
    click.echo(f"wrote stain profile to {out_path}")


@cli.command("cost-matrix")
@click.option(
    "--counts",
    required=True,
    help=f"Per-class instance counts, comma-separated in {','.join(REPORT_ORDER)} order.",
)
@click.option("--rule", type=click.Choice(sorted(COST_RULES)), default="max-ratio", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def cost_matrix(counts, rule, out_path):
    """Build the misclassification cost matrix from class counts.

    The CSV holds one row per predicted class and one column per true class,
    in class-id order (neu, epi, lym, pla, eos, con).
    """
    try:
        report_order_counts = [int(token) for token in counts.split(",")]
    except ValueError as exc:
        raise NucsegError(f"--counts must be integers: {exc}") from exc
    if len(report_order_counts) != N_CLASSES:
        raise NucsegError(f"--counts needs {N_CLASSES} values, got {len(report_order_counts)}")
    by_class_id = [0] * N_CLASSES
    for value, cid in zip(report_order_counts, REPORT_CLASS_IDS):
        by_class_id[cid - 1] = value
    matrix = build_cost_matrix(by_class_id, rule=rule)
    with open(out_path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["predicted\\true", *SHORT_NAMES])
        for j in range(N_CLASSES):
            writer.writerow([SHORT_NAMES[j], *[repr(v) for v in matrix[j].tolist()]])
    click.echo(f"wrote {N_CLASSES}x{N_CLASSES} cost matrix to {out_path}")


@cli.command()
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--scenes", type=int, default=8, show_default=True)
@click.option("--workers", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def demo(out_dir, seed, scenes, workers, config_path):
    """Synthetic end-to-end round trip producing a full artifact bundle."""
    summary = pipeline.run_demo(
        out_dir, seed=seed, scenes=scenes,
        workers=_config_workers(config_path, workers),
    )
    click.echo(
        f"demo: {summary['scenes']} scenes, mPQ+ = {summary['mpq_plus']:.5f}, "
        f"overall r2 = {summary['overall_r2']}"
    )


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.exceptions.Abort:
        sys.exit(1)
    except NucsegError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except OSError as exc:
        click.echo(f"i/o error: {exc}", err=True)
        sys.exit(2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
