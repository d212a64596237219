"""Dataset-level orchestration behind the command-line interface.

Datasets are directories holding ``instances/<stem>.png`` (16-bit label maps)
and ``classes/<stem>.png`` (8-bit class maps); files are paired by stem.
Images may be processed by a worker pool, but every aggregation runs over
results sorted by stem, so reports are byte-identical for any worker count.
"""

import json
import shutil
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .augment import JitterParams, generate_pseudo_dataset
from .errors import NucsegError, StainEstimationError
from .instances import N_CLASSES
from .metrics import per_class_match_stats, counts_from, report_from_parts
from .plotting import save_instance_overlay, save_pq_figure, save_r2_figure
from .postprocess import PostprocessParams, postprocess
from .stain import normalize_to_template
from .synthetic import blob_scene, oracle_predictions
from .targets import compute_hover_maps, compute_np_target


def _map_ordered(fn, items, workers: int):
    """Apply fn over items, preserving order; optionally in a process pool."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def dataset_stems(root) -> list:
    root = Path(root)
    inst_dir = root / "instances"
    if not inst_dir.is_dir():
        raise NucsegError(f"{root} has no instances/ directory")
    return sorted(p.stem for p in inst_dir.glob("*.png"))


def read_pair(root, stem):
    root = Path(root)
    labels = io.read_instance_png(root / "instances" / f"{stem}.png")
    class_path = root / "classes" / f"{stem}.png"
    if not class_path.exists():
        raise NucsegError(f"missing class map for stem {stem!r} in {root}")
    return labels, io.read_class_png(class_path)


def write_pair(root, stem, labels, classes) -> None:
    root = Path(root)
    (root / "instances").mkdir(parents=True, exist_ok=True)
    (root / "classes").mkdir(parents=True, exist_ok=True)
    io.write_instance_png(root / "instances" / f"{stem}.png", labels)
    io.write_class_png(root / "classes" / f"{stem}.png", classes)


# ---------------------------------------------------------------- targets


def _targets_one(args):
    mask_path, out_dir = args
    labels = io.read_instance_png(mask_path)
    stem = Path(mask_path).stem
    io.write_class_png(Path(out_dir) / f"{stem}.np.png", compute_np_target(labels))
    io.write_hover_file(Path(out_dir) / f"{stem}.hover.bin", compute_hover_maps(labels))
    return stem


def run_targets(in_dir, out_dir, workers: int = 1) -> list:
    """Write NP and offset-map targets for every mask in a directory.

    ``in_dir`` may be a flat directory of 16-bit instance PNGs or a dataset
    root with an ``instances/`` subdirectory.  Returns the processed stems;
    an empty input directory is a no-op with a warning.
    """
    in_dir = Path(in_dir)
    mask_dir = in_dir / "instances" if (in_dir / "instances").is_dir() else in_dir
    masks = sorted(mask_dir.glob("*.png"))
    if not masks:
        warnings.warn(f"no masks found under {in_dir}", stacklevel=2)
        return []
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return _map_ordered(_targets_one, [(str(p), str(out_dir)) for p in masks], workers)


# ---------------------------------------------------------------- evaluate


def _evaluate_one(args):
    pred_root, gt_root, stem = args
    pred_inst, pred_cls = read_pair(pred_root, stem)
    gt_inst, gt_cls = read_pair(gt_root, stem)
    stats = per_class_match_stats(pred_inst, pred_cls, gt_inst, gt_cls)
    return stats, counts_from(pred_inst, pred_cls), counts_from(gt_inst, gt_cls)


def run_evaluate(
    pred_dir,
    gt_dir,
    out_json,
    out_csv=None,
    figures_dir=None,
    workers: int = 1,
    manifest=None,
):
    """Evaluate a prediction dataset against ground truth and write reports.

    Predictions and ground truth are paired by stem unless ``manifest`` (a
    JSON list of {pred, gt} dataset-root pairs per image) overrides the
    layout.  Writes the JSON report, optionally a CSV twin, and per-class
    figures next to them unless ``figures_dir`` is None.
    """
    if manifest is not None:
        entries = json.loads(Path(manifest).read_text(encoding="utf-8"))
        jobs = [(e["pred"], e["gt"], e["stem"]) for e in entries]
        jobs.sort(key=lambda job: job[2])
    else:
        pred_stems = dataset_stems(pred_dir)
        gt_stems = dataset_stems(gt_dir)
        if pred_stems != gt_stems:
            missing = sorted(set(pred_stems) ^ set(gt_stems))
            raise NucsegError(f"prediction/ground-truth stems do not pair up: {missing}")
        if not gt_stems:
            raise NucsegError("no images to evaluate")
        jobs = [(str(pred_dir), str(gt_dir), stem) for stem in gt_stems]

    results = _map_ordered(_evaluate_one, jobs, workers)
    totals = np.zeros((N_CLASSES, 4), dtype=np.float64)
    for stats, _, _ in results:
        totals += stats
    pred_counts = np.stack([r[1] for r in results], axis=0)
    gt_counts = np.stack([r[2] for r in results], axis=0)
    report = report_from_parts(totals, pred_counts, gt_counts)

    out_json = Path(out_json)
    out_json.parent.mkdir(parents=True, exist_ok=True)
    io.write_report_json(out_json, report)
    if out_csv is not None:
        io.write_report_csv(out_csv, report)
    if figures_dir is not None:
        figures_dir = Path(figures_dir)
        figures_dir.mkdir(parents=True, exist_ok=True)
        save_pq_figure(report, figures_dir / "pq_per_class.png")
        save_r2_figure(pred_counts, gt_counts, report, figures_dir / "r2_counts.png")
    return report


# ---------------------------------------------------------------- augment


def run_augment(in_dir, out_dir, count: int, params: JitterParams) -> list:
    """Generate ``count`` jittered pseudo mask pairs from a source dataset."""
    stems = dataset_stems(in_dir)
    if not stems:
        raise NucsegError(f"no source masks under {in_dir}")
    sources = [read_pair(in_dir, stem) for stem in stems]
    written = []
    for index, (labels, classes) in enumerate(
        generate_pseudo_dataset(sources, count, params)
    ):
        stem = f"pseudo_{index:05d}"
        write_pair(out_dir, stem, labels, classes)
        written.append(stem)
    return written


# ---------------------------------------------------------------- normalize


def run_normalize(template_path, in_dir, out_dir) -> list:
    """Restain every PNG in a directory into the template's style.

    Blank tiles are refused by the estimator and passed through unchanged;
    the returned list holds (stem, "normalized" | "passed-through").
    """
    template = io.load_stain_profile(template_path)
    in_dir = Path(in_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outcomes = []
    for path in sorted(in_dir.glob("*.png")):
        try:
            io.write_rgb_png(out_dir / path.name, normalize_to_template(
                io.read_rgb_png(path), template
            ))
            outcomes.append((path.stem, "normalized"))
        except StainEstimationError:
            shutil.copyfile(path, out_dir / path.name)
            outcomes.append((path.stem, "passed-through"))
    return outcomes


# ---------------------------------------------------------------- demo


def _demo_one(args):
    out_root, seed, index, height, width, params = args
    out_root = Path(out_root)
    stem = f"scene_{index:05d}"
    labels, classes = blob_scene(seed, index=index, height=height, width=width)
    write_pair(out_root / "gt", stem, labels, classes)

    target_dir = out_root / "targets"
    io.write_class_png(target_dir / f"{stem}.np.png", compute_np_target(labels))
    io.write_hover_file(target_dir / f"{stem}.hover.bin", compute_hover_maps(labels))

    pred_inst, pred_cls = postprocess(oracle_predictions(labels, classes), params)
    write_pair(out_root / "pred", stem, pred_inst, pred_cls)
    return stem


def run_demo(
    out_dir,
    seed: int = 0,
    scenes: int = 8,
    workers: int = 1,
    height: int = 192,
    width: int = 192,
    params: PostprocessParams | None = None,
) -> dict:
    """End-to-end synthetic round trip: scenes -> targets -> oracle
    predictions -> post-processing -> evaluation.

    Writes the whole artifact bundle (ground truth, targets, predictions,
    reports, figures) under ``out_dir`` and returns the summary dict.
    """
    if params is None:
        params = PostprocessParams()
    out_root = Path(out_dir)
    for sub in ("gt/instances", "gt/classes", "targets", "pred/instances", "pred/classes"):
        (out_root / sub).mkdir(parents=True, exist_ok=True)

    jobs = [(str(out_root), seed, index, height, width, params) for index in range(scenes)]
    stems = _map_ordered(_demo_one, jobs, workers)

    report = run_evaluate(
        out_root / "pred",
        out_root / "gt",
        out_json=out_root / "report.json",
        out_csv=out_root / "report.csv",
        figures_dir=out_root / "figures",
        workers=workers,
    )
    first = stems[0]
    save_instance_overlay(
        io.read_instance_png(out_root / "gt" / "instances" / f"{first}.png"),
        io.read_instance_png(out_root / "pred" / "instances" / f"{first}.png"),
        out_root / "figures" / f"{first}.png",
    )

    summary = {
        "schema_version": 1,
        "seed": seed,
        "scenes": scenes,
        "mpq_plus": report.mpq_plus,
        "overall_r2": report.overall_r2 if np.isfinite(report.overall_r2) else None,
        "empty_pq_classes": list(report.empty_pq_classes),
    }
    (out_root / "summary.json").write_text(
        json.dumps(summary, indent=2) + "\n", encoding="ascii"
    )
    return summary
