"""Turn network outputs into a classified instance segmentation.

The chain follows the usual marker-controlled watershed recipe for
horizontal/vertical offset maps: gradient magnitude of the offset maps forms
an energy landscape whose ridges sit where offsets flip sign (instance
boundaries), markers are the confident foreground minus those ridges, and a
deterministic Meyer-style flood grows the markers back out to the full
foreground.  Flood order is fully specified as (energy, insertion index) so
identical inputs give bit-identical outputs on every platform.
"""

import heapq
from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

from .errors import MarkerOutsideMaskError, ShapeMismatchError
from .instances import FOUR_CONNECTED, N_CLASSES, as_instance_map, canonicalize
from .targets import HoVerMaps

# Neighbor visit order for flooding: up, left, right, down.
NEIGHBOR_OFFSETS = ((-1, 0), (0, -1), (0, 1), (1, 0))


@dataclass(frozen=True)
class PostprocessParams:
    """Tunable thresholds of the post-processing chain."""

    np_threshold: float = 0.5
    marker_threshold: float = 0.4
    min_instance_area: int = 10

    def __post_init__(self):
        if not 0.0 < self.np_threshold < 1.0:
            raise ValueError("np_threshold must lie in (0, 1)")
        if not 0.0 < self.marker_threshold < 1.0:
            raise ValueError("marker_threshold must lie in (0, 1)")
        if self.min_instance_area < 1:
            raise ValueError("min_instance_area must be >= 1")


@dataclass
class ProbabilityMaps:
    """Network outputs: foreground probability, offset maps, class distribution.

    ``nc_prob`` has shape (H, W, N_CLASSES + 1) with channel 0 the background;
    every pixel's channel vector must be a distribution (non-negative, summing
    to 1 within 1e-5).  Predicted offset maps are clamped into [-1, 1] on
    construction.
    """

    np_prob: np.ndarray
    hover: HoVerMaps
    nc_prob: np.ndarray

    def __post_init__(self):
        self.np_prob = np.asarray(self.np_prob, dtype=np.float64)
        self.nc_prob = np.asarray(self.nc_prob, dtype=np.float64)
        h = np.clip(np.asarray(self.hover[0], dtype=np.float32), -1.0, 1.0)
        v = np.clip(np.asarray(self.hover[1], dtype=np.float32), -1.0, 1.0)
        self.hover = HoVerMaps(h=h, v=v)
        shape = self.np_prob.shape
        if self.np_prob.ndim != 2:
            raise ShapeMismatchError("np_prob must be 2D")
        if h.shape != shape or v.shape != shape:
            raise ShapeMismatchError("hover maps must match np_prob shape")
        if self.nc_prob.shape != shape + (N_CLASSES + 1,):
            raise ShapeMismatchError(
                f"nc_prob must have shape {shape + (N_CLASSES + 1,)}, "
                f"got {self.nc_prob.shape}"
            )
        if self.np_prob.size:
            if self.np_prob.min() < 0.0 or self.np_prob.max() > 1.0:
                raise ValueError("np_prob values must lie in [0, 1]")
            if self.nc_prob.min() < 0.0:
                raise ValueError("nc_prob entries must be non-negative")
            sums = self.nc_prob.sum(axis=-1)
            if np.abs(sums - 1.0).max() > 1e-5:
                raise ValueError("nc_prob pixels must sum to 1 within 1e-5")


def _rescale01(grad):
    """Min-max rescale to [0, 1]; a constant image rescales to all zeros."""
    lo = grad.min()
    hi = grad.max()
    if hi <= lo:
        return np.zeros_like(grad)
    return (grad - lo) / (hi - lo)


def hover_energy(hover) -> np.ndarray:
    """Boundary energy from offset maps.

    Applies a 3x3 Sobel derivative (edge-replicated padding) across columns
    of h and across rows of v, min-max rescales each absolute gradient image
    to [0, 1], and combines them by pixelwise maximum.  Ridges of high energy
    appear where the offsets flip sign, i.e. between touching instances.
    """
    h = np.asarray(hover[0], dtype=np.float64)
    v = np.asarray(hover[1], dtype=np.float64)
    if h.shape != v.shape or h.ndim != 2:
        raise ShapeMismatchError("hover maps must be 2D arrays of equal shape")
    grad_h = np.abs(ndi.sobel(h, axis=1, mode="nearest"))
    grad_v = np.abs(ndi.sobel(v, axis=0, mode="nearest"))
    return np.maximum(_rescale01(grad_h), _rescale01(grad_v))


def extract_markers(np_prob, energy, params: PostprocessParams) -> np.ndarray:
    """Watershed seeds: confident foreground minus high-energy ridges.

    Markers are the 4-connected components of
    {np_prob > np_threshold} minus {energy > marker_threshold}, with
    components smaller than min_instance_area dropped, in canonical labeling.
    """
    np_prob = np.asarray(np_prob, dtype=np.float64)
    energy = np.asarray(energy, dtype=np.float64)
    if np_prob.shape != energy.shape:
        raise ShapeMismatchError("np_prob and energy shapes differ")
    seed_mask = (np_prob > params.np_threshold) & ~(energy > params.marker_threshold)
    labeled, n = ndi.label(seed_mask, structure=FOUR_CONNECTED)
    if n:
        areas = np.bincount(labeled.ravel(), minlength=n + 1)
        small = np.flatnonzero(areas < params.min_instance_area)
        labeled[np.isin(labeled, small)] = 0
    return canonicalize(labeled)


def watershed(energy, markers, mask) -> np.ndarray:
    """Meyer-style flooding of an energy landscape from labeled markers.

    Every pixel of ``mask`` is assigned to exactly one marker's label; marker
    pixels keep their label.  Candidate pixels are flooded in increasing
    (energy, insertion index) order over 4-neighborhoods, which makes the
    result deterministic and breaks flat-energy ties toward the marker whose
    front reached the pixel first.

    Raises MarkerOutsideMaskError if a marker pixel lies outside the mask and
    ValueError if some mask component contains no marker (such pixels could
    never be assigned).
    """
    markers = as_instance_map(markers)
    energy = np.asarray(energy, dtype=np.float64)
    mask = np.asarray(mask).astype(bool)
    if not (energy.shape == markers.shape == mask.shape):
        raise ShapeMismatchError("energy, markers and mask shapes differ")
    if np.any((markers > 0) & ~mask):
        raise MarkerOutsideMaskError("marker pixels must lie inside the mask")

    height, width = mask.shape
    out = np.where(mask, markers, 0).astype(np.int32)
    assigned = out > 0

    heap = []
    counter = 0

    def push_neighbors(row, col, label):
        nonlocal counter
        for dr, dc in NEIGHBOR_OFFSETS:
            r, c = row + dr, col + dc
            if 0 <= r < height and 0 <= c < width and mask[r, c] and not assigned[r, c]:
                heapq.heappush(heap, (energy[r, c], counter, r, c, label))
                counter += 1

    for row, col in np.argwhere(markers > 0):
        push_neighbors(int(row), int(col), int(markers[row, col]))

    while heap:
        _, _, row, col, label = heapq.heappop(heap)
        if assigned[row, col]:
            continue
        assigned[row, col] = True
        out[row, col] = label
        push_neighbors(row, col, label)

    if np.any(mask & ~assigned):
        raise ValueError("mask contains components with no marker to flood from")
    return out


def classify_instances(labels, nc_prob) -> list[tuple[int, int]]:
    """Assign one class per instance from per-pixel class probabilities.

    The class of an instance is the argmax over classes 1..N of nc_prob
    summed over the instance's pixels (background channel excluded); ties go
    to the lowest class id.
    """
    labels = as_instance_map(labels)
    nc_prob = np.asarray(nc_prob, dtype=np.float64)
    if nc_prob.shape[:2] != labels.shape or nc_prob.ndim != 3:
        raise ShapeMismatchError("nc_prob must be (H, W, C) matching the label map")
    result = []
    for label in np.unique(labels):
        if label == 0:
            continue
        scores = nc_prob[labels == label, 1:].sum(axis=0)
        result.append((int(label), int(np.argmax(scores)) + 1))
    return result


def postprocess(pred: ProbabilityMaps, params: PostprocessParams | None = None):
    """Full chain: energy -> markers -> watershed -> per-instance classes.

    Returns (instance map, class map).  The output foreground is a subset of
    {np_prob > np_threshold}: foreground components that received no marker
    (all their seed pixels were ridges or below the area threshold) are
    dropped rather than guessed.
    """
    if params is None:
        params = PostprocessParams()
    energy = hover_energy(pred.hover)
    mask = pred.np_prob > params.np_threshold
    markers = extract_markers(pred.np_prob, energy, params)

    components, n = ndi.label(mask, structure=FOUR_CONNECTED)
    marked = np.unique(components[markers > 0])
    flood_mask = np.isin(components, marked[marked > 0]) if n else np.zeros_like(mask)

    instance_map = canonicalize(watershed(energy, markers, flood_mask))
    class_map = np.zeros(instance_map.shape, dtype=np.int32)
    for label, class_id in classify_instances(instance_map, pred.nc_prob):
        class_map[instance_map == label] = class_id
    return instance_map, class_map
