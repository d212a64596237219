"""Pseudo ground-truth masks by per-instance geometric jitter.

Every instance is independently shifted by a small integer translation and
rotated by a small angle about its own centroid, keeping its class.  The
randomness comes from Philox counter-based streams keyed by
(seed, item index, instance label), so each instance owns a substream and
adding or reordering instances never perturbs the draws of the others.
"""

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .instances import as_class_map, as_instance_map, extract_instances

COLLISION_POLICIES = ("reject-retry", "keep-earlier")
MAX_RETRIES = 10

MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class JitterParams:
    """Jitter magnitudes, RNG seed and overlap handling."""

    max_translation: int = 3
    max_rotation: float = 3.0
    seed: int = 0
    collision_policy: str = "reject-retry"

    def __post_init__(self):
        if self.max_translation < 0:
            raise ValueError("max_translation must be >= 0")
        if self.max_rotation < 0:
            raise ValueError("max_rotation must be >= 0")
        if self.collision_policy not in COLLISION_POLICIES:
            raise ValueError(
                f"collision_policy must be one of {COLLISION_POLICIES}"
            )


def _instance_rng(seed: int, item_index: int, label: int) -> np.random.Generator:
    """Philox substream for one instance of one generated item."""
    seq = np.random.SeedSequence([seed & MASK64, item_index, label])
    return np.random.Generator(np.random.Philox(seq))


def _transform_pixels(rows, cols, dx, dy, angle_deg, shape):
    """Nearest-neighbor rasterization of a rotated, translated pixel set.

    Rotation is about the instance centroid; the translation (dx columns,
    dy rows) is an exact integer shift.  Pixels mapped off the canvas are
    clipped.  Returns (rows, cols) of the transformed set.
    """
    height, width = shape
    if angle_deg == 0.0:
        new_rows = rows + dy
        new_cols = cols + dx
        keep = (
            (new_rows >= 0) & (new_rows < height)
            & (new_cols >= 0) & (new_cols < width)
        )
        return new_rows[keep], new_cols[keep]

    center_r = rows.mean()
    center_c = cols.mean()
    theta = np.deg2rad(angle_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)

    # membership mask of the source pixels, cropped to their bbox
    r0, r1 = rows.min(), rows.max()
    c0, c1 = cols.min(), cols.max()
    src = np.zeros((r1 - r0 + 1, c1 - c0 + 1), dtype=bool)
    src[rows - r0, cols - c0] = True

    # output search window: source bbox grown by the rotation slack + shift
    slack = int(np.ceil(np.hypot(r1 - r0 + 1, c1 - c0 + 1))) + 1
    out_r0 = max(r0 + dy - slack, 0)
    out_r1 = min(r1 + dy + slack, height - 1)
    out_c0 = max(c0 + dx - slack, 0)
    out_c1 = min(c1 + dx + slack, width - 1)
    if out_r1 < out_r0 or out_c1 < out_c0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)

    grid_r, grid_c = np.meshgrid(
        np.arange(out_r0, out_r1 + 1), np.arange(out_c0, out_c1 + 1), indexing="ij"
    )
    # invert: undo the translation, rotate back about the source centroid
    rel_r = grid_r - dy - center_r
    rel_c = grid_c - dx - center_c
    src_r = np.rint(cos_t * rel_r + sin_t * rel_c + center_r).astype(np.int64)
    src_c = np.rint(-sin_t * rel_r + cos_t * rel_c + center_c).astype(np.int64)

    inside = (
        (src_r >= r0) & (src_r <= r1) & (src_c >= c0) & (src_c <= c1)
    )
    inside[inside] &= src[src_r[inside] - r0, src_c[inside] - c0]
    return grid_r[inside], grid_c[inside]


def jitter_instances(labels, classes, params: JitterParams, item_index: int = 0):
    """Jitter every instance of a mask pair independently.

    Instances are placed in ascending label order.  Under ``reject-retry`` a
    transform that would overlap an already placed instance is resampled up
    to 10 times before falling back to the identity placement; under
    ``keep-earlier`` the first draw is kept and colliding pixels stay with
    the earlier instance.  Identity fallbacks likewise drop any pixels an
    earlier instance already claimed.

    Returns a new (instance map, class map) pair with the original labels
    and one uniform class per instance (the input instance's majority class).
    """
    labels = as_instance_map(labels)
    classes = as_class_map(classes)
    records = extract_instances(labels, classes)

    out_labels = np.zeros_like(labels)
    out_classes = np.zeros_like(classes)

    for rec in records:
        rng = _instance_rng(params.seed, item_index, rec.label)
        rows, cols = np.nonzero(labels == rec.label)

        def draw():
            dx = int(rng.integers(-params.max_translation, params.max_translation + 1))
            dy = int(rng.integers(-params.max_translation, params.max_translation + 1))
            angle = float(rng.uniform(-params.max_rotation, params.max_rotation))
            return dx, dy, angle

        placed = None
        if params.collision_policy == "reject-retry":
            for _ in range(MAX_RETRIES):
                new_rows, new_cols = _transform_pixels(
                    rows, cols, *draw(), labels.shape
                )
                if new_rows.size and not np.any(out_labels[new_rows, new_cols]):
                    placed = (new_rows, new_cols)
                    break
        else:  # keep-earlier
            new_rows, new_cols = _transform_pixels(rows, cols, *draw(), labels.shape)
            free = out_labels[new_rows, new_cols] == 0
            if np.any(free):
                placed = (new_rows[free], new_cols[free])

        if placed is None:
            # identity fallback; keep whatever cells are still unclaimed
            free = out_labels[rows, cols] == 0
            placed = (rows[free], cols[free])

        out_labels[placed] = rec.label
        out_classes[placed] = rec.class_id

    return out_labels, out_classes


def generate_pseudo_dataset(sources, count: int, params: JitterParams) -> Iterator:
    """Yield ``count`` jittered mask pairs by cycling over the sources.

    Item i jitters ``sources[i % len(sources)]`` with per-item substreams
    derived from (params.seed, i), so the whole dataset is a pure function of
    the sources and the seed.
    """
    sources = list(sources)
    if not sources:
        raise ValueError("source set must not be empty")
    if count < 0:
        raise ValueError("count must be >= 0")

    def items():
        for i in range(count):
            labels, classes = sources[i % len(sources)]
            yield jitter_instances(labels, classes, params, item_index=i)

    return items()
