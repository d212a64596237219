"""Shared fixture helpers: random label/class maps for fuzzing."""

import numpy as np
import pytest

from nucseg.instances import N_CLASSES, canonicalize


def make_rng(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def random_label_map(rng, height=32, width=32, n_blobs=5):
    """Random elliptical blobs painted over each other, then canonicalized.

    Overlaps are allowed (later blobs win), so this exercises odd shapes,
    holes and split components.
    """
    labels = np.zeros((height, width), dtype=np.int32)
    for blob in range(1, n_blobs + 1):
        cy = rng.uniform(0, height)
        cx = rng.uniform(0, width)
        ry = rng.uniform(1.5, height / 4)
        rx = rng.uniform(1.5, width / 4)
        rows, cols = np.mgrid[0:height, 0:width]
        mask = ((rows - cy) / ry) ** 2 + ((cols - cx) / rx) ** 2 <= 1.0
        labels[mask] = blob
    return canonicalize(labels)


def random_class_map(rng, labels):
    """Consistent class map: one random class per instance."""
    classes = np.zeros_like(labels)
    for label in np.unique(labels):
        if label:
            classes[labels == label] = int(rng.integers(1, N_CLASSES + 1))
    return classes


@pytest.fixture
def rng():
    return make_rng(20240814)
