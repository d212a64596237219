"""Instance segmentation and counting metrics.

Matching follows the standard panoptic-quality rule: a predicted and a ground
truth instance are a true-positive pair iff their IoU exceeds 0.5, which makes
the matching unique.  Multi-class PQ aggregates per-class matching statistics
(tp, fp, fn, iou sums) over the whole dataset before the final division, and
cell-count regression quality is the per-class coefficient of determination.
Intersections and unions are kept in exact integer arithmetic until the final
division so results are platform-independent.
"""

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ShapeMismatchError
from .instances import (
    N_CLASSES,
    REPORT_CLASS_IDS,
    REPORT_ORDER,
    as_class_map,
    as_instance_map,
    extract_instances,
)


@dataclass(frozen=True)
class MatchResult:
    """Unique IoU > 0.5 matching between two instance maps."""

    tp_pairs: tuple  # (pred_label, gt_label, iou), ordered by gt label
    fp_labels: tuple  # predicted labels with no match
    fn_labels: tuple  # ground-truth labels with no match


class PQScore(NamedTuple):
    dq: float
    sq: float
    pq: float


class MPQResult(NamedTuple):
    per_class_pq: tuple
    mpq_plus: float
    empty_classes: tuple  # class ids with no instances anywhere, scored 1.0


class R2Result(NamedTuple):
    per_class_r2: tuple
    overall: float
    degenerate_classes: tuple  # constant gt column with nonzero residuals


def match_instances(pred, gt) -> MatchResult:
    """Match predicted against ground-truth instances at IoU > 0.5."""
    pred = as_instance_map(pred)
    gt = as_instance_map(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"prediction {pred.shape} vs ground truth {gt.shape}")

    pred_labels, pred_areas = np.unique(pred[pred > 0], return_counts=True)
    gt_labels, gt_areas = np.unique(gt[gt > 0], return_counts=True)
    pred_area = dict(zip(pred_labels.tolist(), pred_areas.tolist()))
    gt_area = dict(zip(gt_labels.tolist(), gt_areas.tolist()))

    both = (pred > 0) & (gt > 0)
    overlap_codes = gt[both].astype(np.int64) << 32 | pred[both].astype(np.int64)
    codes, inters = np.unique(overlap_codes, return_counts=True)

    tp_pairs = []
    matched_pred = set()
    matched_gt = set()
    for code, inter in zip(codes.tolist(), inters.tolist()):
        g, p = code >> 32, code & 0xFFFFFFFF
        union = gt_area[g] + pred_area[p] - inter
        if 2 * inter > union:  # IoU > 0.5 in exact integer arithmetic
            tp_pairs.append((p, g, inter / union))
            matched_pred.add(p)
            matched_gt.add(g)
    tp_pairs.sort(key=lambda t: t[1])

    fp = tuple(int(p) for p in pred_labels if int(p) not in matched_pred)
    fn = tuple(int(g) for g in gt_labels if int(g) not in matched_gt)
    return MatchResult(tp_pairs=tuple(tp_pairs), fp_labels=fp, fn_labels=fn)


def pq_from_stats(tp: int, fp: int, fn: int, iou_sum: float) -> PQScore:
    """PQ from accumulated matching statistics.

    With no instances at all (tp = fp = fn = 0) the score is defined as 1.0
    so absent classes stay neutral in an aggregate; callers flag this case.
    """
    if tp == 0 and fp == 0 and fn == 0:
        return PQScore(dq=1.0, sq=1.0, pq=1.0)
    dq = tp / (tp + 0.5 * fp + 0.5 * fn)
    sq = iou_sum / tp if tp else 0.0
    return PQScore(dq=dq, sq=sq, pq=dq * sq)


def pq(match: MatchResult) -> PQScore:
    """Detection quality, segmentation quality and their product."""
    iou_sum = float(sum(iou for _, _, iou in match.tp_pairs))
    return pq_from_stats(
        tp=len(match.tp_pairs),
        fp=len(match.fp_labels),
        fn=len(match.fn_labels),
        iou_sum=iou_sum,
    )


def _instance_classes(labels, classes) -> dict:
    return {rec.label: rec.class_id for rec in extract_instances(labels, classes)}


def _restrict_to_class(labels, label_classes, class_id) -> np.ndarray:
    keep = [label for label, cid in label_classes.items() if cid == class_id]
    return np.where(np.isin(labels, keep), labels, 0)


def per_class_match_stats(pred_inst, pred_cls, gt_inst, gt_cls) -> np.ndarray:
    """One image's per-class matching statistics.

    Returns an (N_CLASSES, 4) array of [tp, fp, fn, iou_sum] rows, computed by
    restricting both maps to each class (instance class = majority pixel
    class) and matching the restricted maps.
    """
    pred_inst = as_instance_map(pred_inst)
    gt_inst = as_instance_map(gt_inst)
    pred_classes = _instance_classes(pred_inst, as_class_map(pred_cls))
    gt_classes = _instance_classes(gt_inst, as_class_map(gt_cls))
    stats = np.zeros((N_CLASSES, 4), dtype=np.float64)
    for class_id in range(1, N_CLASSES + 1):
        match = match_instances(
            _restrict_to_class(pred_inst, pred_classes, class_id),
            _restrict_to_class(gt_inst, gt_classes, class_id),
        )
        stats[class_id - 1] = (
            len(match.tp_pairs),
            len(match.fp_labels),
            len(match.fn_labels),
            sum(iou for _, _, iou in match.tp_pairs),
        )
    return stats


def mpq_from_totals(totals) -> MPQResult:
    """Per-class PQ and their mean from summed (tp, fp, fn, iou_sum) rows."""
    totals = np.asarray(totals, dtype=np.float64)
    per_class = []
    empty = []
    for class_id in range(1, N_CLASSES + 1):
        tp, fp, fn, iou_sum = totals[class_id - 1]
        if tp == 0 and fp == 0 and fn == 0:
            empty.append(class_id)
        per_class.append(pq_from_stats(int(tp), int(fp), int(fn), iou_sum).pq)
    return MPQResult(
        per_class_pq=tuple(per_class),
        mpq_plus=float(np.mean(per_class)),
        empty_classes=tuple(empty),
    )


def mpq_plus(pairs: Iterable) -> MPQResult:
    """Dataset-level multi-class PQ.

    ``pairs`` yields ((pred_inst, pred_cls), (gt_inst, gt_cls)) per image.
    Per-class statistics are summed over all images before the PQ division,
    and the aggregate is the unweighted mean over the classes.  Classes with
    no instance anywhere contribute a neutral 1.0 and are reported in
    ``empty_classes``.
    """
    totals = np.zeros((N_CLASSES, 4), dtype=np.float64)
    for (pred_inst, pred_cls), (gt_inst, gt_cls) in pairs:
        totals += per_class_match_stats(pred_inst, pred_cls, gt_inst, gt_cls)
    return mpq_from_totals(totals)


def counts_from(labels, classes) -> np.ndarray:
    """Instance counts per class for one image, indexed by class id - 1."""
    records = extract_instances(labels, classes)
    counts = np.zeros(N_CLASSES, dtype=np.int64)
    for rec in records:
        counts[rec.class_id - 1] += 1
    return counts


def r_squared(pred_counts, gt_counts) -> R2Result:
    """Coefficient of determination of predicted vs true per-image counts.

    Both arguments are (n_images, N_CLASSES) integer tables in the same image
    order.  Sums of squares are formed in exact integer arithmetic; division
    happens last.  A constant ground-truth column has zero total variance:
    such a class scores 1.0 when the residuals are zero, otherwise -inf and
    the class id is reported in ``degenerate_classes``.  The overall value is
    the mean of the finite per-class values (NaN if none are finite).
    """
    pred = np.asarray(pred_counts, dtype=np.int64)
    gt = np.asarray(gt_counts, dtype=np.int64)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != N_CLASSES:
        raise ShapeMismatchError(
            f"count tables must both be (n_images, {N_CLASSES}); "
            f"got {pred.shape} and {gt.shape}"
        )
    n = pred.shape[0]
    per_class = []
    degenerate = []
    for k in range(N_CLASSES):
        ss_res = int(((pred[:, k] - gt[:, k]) ** 2).sum())
        # n * sum((g - mean)^2) = n * sum(g^2) - (sum(g))^2, exactly
        ss_tot_scaled = n * int((gt[:, k] ** 2).sum()) - int(gt[:, k].sum()) ** 2
        if ss_tot_scaled == 0:
            if ss_res == 0:
                per_class.append(1.0)
            else:
                per_class.append(float("-inf"))
                degenerate.append(k + 1)
        else:
            per_class.append(1.0 - (n * ss_res) / ss_tot_scaled)
    finite = [value for value in per_class if np.isfinite(value)]
    overall = float(np.mean(finite)) if finite else float("nan")
    return R2Result(
        per_class_r2=tuple(per_class),
        overall=overall,
        degenerate_classes=tuple(degenerate),
    )


@dataclass(frozen=True)
class MetricsReport:
    """Aggregated segmentation and counting quality for one dataset."""

    per_class_pq: tuple
    mpq_plus: float
    per_class_r2: tuple
    overall_r2: float
    empty_pq_classes: tuple = ()
    degenerate_r2_classes: tuple = ()

    def report_columns(self) -> tuple:
        """Short class column labels in report order."""
        return REPORT_ORDER

    def pq_row(self) -> list:
        """mPQ+ followed by per-class PQ in report column order."""
        return [self.mpq_plus] + [
            self.per_class_pq[cid - 1] for cid in REPORT_CLASS_IDS
        ]

    def r2_row(self) -> list:
        """Overall r2 followed by per-class r2 in report column order."""
        return [self.overall_r2] + [
            self.per_class_r2[cid - 1] for cid in REPORT_CLASS_IDS
        ]


def report_from_parts(totals, pred_counts, gt_counts) -> MetricsReport:
    """Assemble the full report from summed stats and per-image count tables."""
    mpq = mpq_from_totals(totals)
    r2 = r_squared(pred_counts, gt_counts)
    return MetricsReport(
        per_class_pq=mpq.per_class_pq,
        mpq_plus=mpq.mpq_plus,
        per_class_r2=r2.per_class_r2,
        overall_r2=r2.overall,
        empty_pq_classes=mpq.empty_classes,
        degenerate_r2_classes=r2.degenerate_classes,
    )


def evaluate_dataset(pairs) -> MetricsReport:
    """Compute the full metrics report over ((pred pair), (gt pair)) images.

    ``pairs`` must be a sequence (it is iterated twice: once for matching
    statistics, once for counts).
    """
    totals = np.zeros((N_CLASSES, 4), dtype=np.float64)
    for (pred_inst, pred_cls), (gt_inst, gt_cls) in pairs:
        totals += per_class_match_stats(pred_inst, pred_cls, gt_inst, gt_cls)
    if pairs:
        pred_counts = np.stack([counts_from(pi, pc) for (pi, pc), _ in pairs], axis=0)
        gt_counts = np.stack([counts_from(gi, gc) for _, (gi, gc) in pairs], axis=0)
    else:
        pred_counts = np.zeros((0, N_CLASSES), dtype=np.int64)
        gt_counts = np.zeros((0, N_CLASSES), dtype=np.int64)
    return report_from_parts(totals, pred_counts, gt_counts)
