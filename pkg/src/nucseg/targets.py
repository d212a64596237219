"""Regression and segmentation targets derived from a ground-truth instance map.

The horizontal/vertical ("hover") maps hold, for every foreground pixel, the
signed offset of that pixel from its instance's centroid, normalized per
instance so values span [-1, 1].  Sign flips between touching instances are
what the post-processing stage later turns into separation ridges.
"""

from typing import NamedTuple

import numpy as np

from .instances import as_instance_map


class HoVerMaps(NamedTuple):
    """Paired horizontal (column) and vertical (row) offset maps, float32."""

    h: np.ndarray
    v: np.ndarray


def compute_np_target(labels) -> np.ndarray:
    """Binary nuclear-pixel target: 1 wherever the instance label is nonzero."""
    labels = as_instance_map(labels)
    return (labels > 0).astype(np.uint8)


def compute_hover_maps(labels) -> HoVerMaps:
    """Compute per-instance normalized centroid-offset maps.

    For each instance, h(p) is the column offset of p from the instance
    centroid (mean pixel coordinate) divided by the maximum absolute column
    offset within that instance; v(p) is the same along rows.  A degenerate
    axis (all pixels in one column/row) yields 0 along that axis, and
    background stays 0 everywhere.
    """
    labels = as_instance_map(labels)
    h = np.zeros(labels.shape, dtype=np.float32)
    v = np.zeros(labels.shape, dtype=np.float32)
    for label in np.unique(labels):
        if label == 0:
            continue
        rows, cols = np.nonzero(labels == label)
        row_off = rows - rows.mean()
        col_off = cols - cols.mean()
        col_den = np.abs(col_off).max()
        row_den = np.abs(row_off).max()
        if col_den > 0:
            h[rows, cols] = (col_off / col_den).astype(np.float32)
        if row_den > 0:
            v[rows, cols] = (row_off / row_den).astype(np.float32)
    return HoVerMaps(h=h, v=v)
