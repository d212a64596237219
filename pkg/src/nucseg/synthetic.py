"""Synthetic blob scenes and oracle predictions for round-trip checks.

Scenes are elliptical "nuclei" placed without touching (at least one
background pixel between any two instances) with random classes.  Oracle
predictions rebuild the network-output tensors a perfect model would emit for
a ground-truth mask pair, which makes the full post-processing chain testable
end to end without any trained model.
"""

import numpy as np
from scipy import ndimage as ndi

from .instances import N_CLASSES, canonicalize
from .postprocess import ProbabilityMaps
from .targets import compute_hover_maps, compute_np_target

EIGHT_CONNECTED = ndi.generate_binary_structure(2, 2)


def _scene_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence([seed & ((1 << 64) - 1), index]))
    )


def _ellipse_mask(shape, center, axes, theta) -> np.ndarray:
    rows, cols = np.mgrid[0 : shape[0], 0 : shape[1]]
    rel_r = rows - center[0]
    rel_c = cols - center[1]
    u = np.cos(theta) * rel_r + np.sin(theta) * rel_c
    w = -np.sin(theta) * rel_r + np.cos(theta) * rel_c
    return (u / axes[0]) ** 2 + (w / axes[1]) ** 2 <= 1.0


def blob_scene(
    seed: int,
    index: int = 0,
    height: int = 256,
    width: int = 256,
    min_instances: int = 5,
    max_instances: int = 30,
    radius_range=(6.0, 12.0),
):
    """Generate one scene of non-touching elliptical instances.

    Returns a canonical (instance map, class map) pair.  Instances are kept
    8-separated (no touching even diagonally) by rejection sampling; if the
    canvas fills up early the scene simply holds fewer instances, never fewer
    than ``min_instances`` on default-sized canvases.
    """
    rng = _scene_rng(seed, index)
    target = int(rng.integers(min_instances, max_instances + 1))
    labels = np.zeros((height, width), dtype=np.int32)
    classes = np.zeros((height, width), dtype=np.int32)
    margin = int(np.ceil(radius_range[1])) + 1

    placed = 0
    attempts = 0
    occupied = np.zeros((height, width), dtype=bool)
    while placed < target and attempts < 60 * target:
        attempts += 1
        center = (
            float(rng.uniform(margin, height - margin)),
            float(rng.uniform(margin, width - margin)),
        )
        axes = rng.uniform(radius_range[0], radius_range[1], size=2)
        theta = float(rng.uniform(0.0, np.pi))
        class_id = int(rng.integers(1, N_CLASSES + 1))
        mask = _ellipse_mask((height, width), center, axes, theta)
        grown = ndi.binary_dilation(mask, structure=EIGHT_CONNECTED)
        if np.any(grown & occupied):
            continue
        placed += 1
        labels[mask] = placed
        classes[mask] = class_id
        occupied |= mask
    return canonicalize(labels), classes


def touching_pair(
    seed: int, index: int = 0, height: int = 64, width: int = 96
):
    """Two instances sharing a junction, giving opposing offset signs there.

    The second ellipse is painted over the first with a one-pixel horizontal
    overlap, so the pair touches along a roughly vertical junction where the
    horizontal offset map flips from +1 to -1.
    """
    rng = _scene_rng(seed, index)
    a1, a2 = rng.uniform(8.0, 12.0, size=2)  # horizontal semi-axes
    b1, b2 = rng.uniform(8.0, 12.0, size=2)  # vertical semi-axes
    row = height / 2 + float(rng.uniform(-3, 3))
    col1 = width / 2 - a1
    col2 = col1 + a1 + a2 - 1.0  # overlap by ~1px so the pair touches
    labels = np.zeros((height, width), dtype=np.int32)
    classes = np.zeros((height, width), dtype=np.int32)
    first = _ellipse_mask((height, width), (row, col1), (b1, a1), 0.0)
    second = _ellipse_mask((height, width), (row, col2), (b2, a2), 0.0)
    labels[first] = 1
    classes[first] = int(rng.integers(1, N_CLASSES + 1))
    labels[second] = 2
    classes[second] = int(rng.integers(1, N_CLASSES + 1))
    return canonicalize(labels), classes


def one_hot_class_probabilities(classes) -> np.ndarray:
    """Per-pixel one-hot distribution over background + N classes."""
    classes = np.asarray(classes)
    nc = np.zeros(classes.shape + (N_CLASSES + 1,), dtype=np.float64)
    for channel in range(N_CLASSES + 1):
        nc[classes == channel, channel] = 1.0
    return nc


def oracle_predictions(labels, classes) -> ProbabilityMaps:
    """The probability maps a perfect model would output for this pair."""
    return ProbabilityMaps(
        np_prob=compute_np_target(labels).astype(np.float64),
        hover=compute_hover_maps(labels),
        nc_prob=one_hot_class_probabilities(classes),
    )
