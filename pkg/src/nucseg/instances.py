"""Instance label images: validation, canonicalization and per-instance summaries.

An instance map is a 2D integer array where 0 is background and each positive
value identifies one nucleus.  A class map is a 2D integer array over the same
grid assigning 0 (background) or a class id in 1..N_CLASSES to every pixel.
All other modules exchange these two arrays, so the conventions are fixed
here: components are 4-connected and canonical label ids are contiguous 1..K
ordered by each instance's first pixel in row-major order.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

from .errors import PairConsistencyError, ShapeMismatchError

# Class taxonomy, ids 1..6.  Index 0 is background.
CLASS_NAMES = (
    "neutrophil",
    "epithelial",
    "lymphocyte",
    "plasma",
    "eosinophil",
    "connective",
)
N_CLASSES = len(CLASS_NAMES)

# Short column labels in the order evaluation reports use them.
REPORT_ORDER = ("pla", "neu", "epi", "lym", "eos", "con")
SHORT_NAMES = ("neu", "epi", "lym", "pla", "eos", "con")
# class id (1-based) for each report column
REPORT_CLASS_IDS = tuple(SHORT_NAMES.index(s) + 1 for s in REPORT_ORDER)

# 4-connectivity structuring element used everywhere components are taken.
FOUR_CONNECTED = ndi.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class InstanceRecord:
    """Summary of one instance: id, majority class, centroid, bbox, area."""

    label: int
    class_id: int
    centroid: tuple[float, float]  # (row, col)
    bbox: tuple[int, int, int, int]  # (r0, c0, r1, c1) inclusive
    area: int


def as_instance_map(labels) -> np.ndarray:
    """Validate and return a 2D non-negative int32 label image."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"instance map must be 2D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"instance map must be integer, got dtype {arr.dtype}")
    if arr.size and arr.min() < 0:
        raise ValueError("instance map contains negative labels")
    return arr.astype(np.int32, copy=False)


def as_class_map(classes) -> np.ndarray:
    arr = np.asarray(classes)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"class map must be 2D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"class map must be integer, got dtype {arr.dtype}")
    if arr.size and (arr.min() < 0 or arr.max() > N_CLASSES):
        raise ValueError(f"class ids must lie in 0..{N_CLASSES}")
    return arr.astype(np.int32, copy=False)


def canonicalize(labels) -> np.ndarray:
    """Relabel an instance map into canonical form.

    Every 4-connected component of every input label becomes its own
    instance, and ids are renumbered to 1..K in order of each component's
    first pixel in row-major scan order.  Idempotent, and the foreground
    support is never changed.
    """
    labels = as_instance_map(labels)
    out = np.zeros(labels.shape, dtype=np.int32)
    components = []  # (first row-major flat index, boolean mask)
    for value in np.unique(labels):
        if value == 0:
            continue
        mask = labels == value
        rows, cols = np.nonzero(mask)
        r0, r1 = rows.min(), rows.max() + 1
        c0, c1 = cols.min(), cols.max() + 1
        crop = mask[r0:r1, c0:c1]
        lab, n = ndi.label(crop, structure=FOUR_CONNECTED)
        for k in range(1, n + 1):
            comp = np.zeros(labels.shape, dtype=bool)
            comp[r0:r1, c0:c1] = lab == k
            first = int(np.flatnonzero(comp.ravel())[0])
            components.append((first, comp))
    components.sort(key=lambda item: item[0])
    for new_id, (_, comp) in enumerate(components, start=1):
        out[comp] = new_id
    return out


def validate_pair(labels, classes) -> list[dict]:
    """List every pixel violating instance/class paired consistency.

    A violation is a foreground instance pixel with class 0
    (``instance-without-class``) or a background pixel with a nonzero class
    (``class-without-instance``).  Returns one ``{row, col, kind}`` dict per
    violating pixel in row-major order; an empty list means the pair is
    consistent.
    """
    labels = as_instance_map(labels)
    classes = as_class_map(classes)
    if labels.shape != classes.shape:
        raise ShapeMismatchError(
            f"instance map {labels.shape} and class map {classes.shape} differ"
        )
    violations = []
    bad = ((labels > 0) & (classes == 0)) | ((labels == 0) & (classes > 0))
    for row, col in np.argwhere(bad):
        kind = (
            "instance-without-class"
            if labels[row, col] > 0
            else "class-without-instance"
        )
        violations.append({"row": int(row), "col": int(col), "kind": kind})
    return violations


def extract_instances(labels, classes) -> list[InstanceRecord]:
    """Summarize every instance of a canonical map.

    The class of an instance is the majority class over its pixels, ties
    broken toward the lowest class id.  Raises PairConsistencyError if any
    instance pixel carries class 0.
    """
    labels = as_instance_map(labels)
    classes = as_class_map(classes)
    if labels.shape != classes.shape:
        raise ShapeMismatchError(
            f"instance map {labels.shape} and class map {classes.shape} differ"
        )
    records = []
    for label in np.unique(labels):
        if label == 0:
            continue
        rows, cols = np.nonzero(labels == label)
        pixel_classes = classes[rows, cols]
        if np.any(pixel_classes == 0):
            raise PairConsistencyError(
                f"instance {int(label)} has pixels with class 0"
            )
        hist = np.bincount(pixel_classes, minlength=N_CLASSES + 1)
        class_id = int(np.argmax(hist))  # argmax returns the lowest id on ties
        records.append(
            InstanceRecord(
                label=int(label),
                class_id=class_id,
                centroid=(float(rows.mean()), float(cols.mean())),
                bbox=(int(rows.min()), int(cols.min()), int(rows.max()), int(cols.max())),
                area=int(rows.size),
            )
        )
    return records
