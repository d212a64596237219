"""Beer-Lambert stain separation and restaining.

Images are moved into optical-density space, where stain mixing is linear,
with an invertible 8-bit transform: od = -log10((v + 1) / 256).  A stain
profile holds the two unit-norm OD directions (hematoxylin, eosin) estimated
from the extreme angular directions of the tissue OD cloud plus per-stain
concentration scale statistics.  Restaining unmixes an image against its own
profile, rescales concentrations to a template's statistics, and recomposes
through the template's stain matrix, which maps any input into the template's
staining style.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError, StainEstimationError

# Pixels whose OD vector norm exceeds this are treated as tissue.
TISSUE_OD_NORM = 0.15
MIN_TISSUE_FRACTION = 0.01
ANGLE_PERCENTILES = (1.0, 99.0)
CONCENTRATION_PERCENTILE = 99.0


@dataclass(frozen=True)
class StainProfile:
    """Unit-norm OD stain directions (columns: H then E) and their scales."""

    stain_matrix: np.ndarray  # (3, 2)
    concentration_p99: np.ndarray  # (2,)

    def __post_init__(self):
        matrix = np.asarray(self.stain_matrix, dtype=np.float64)
        p99 = np.asarray(self.concentration_p99, dtype=np.float64)
        if matrix.shape != (3, 2):
            raise ShapeMismatchError("stain matrix must be 3x2")
        if np.any(matrix < 0):
            raise ValueError("stain vectors must be non-negative in OD space")
        norms = np.linalg.norm(matrix, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-8):
            raise ValueError("stain vectors must have unit norm")
        if abs(float(matrix[:, 0] @ matrix[:, 1])) > 1.0 - 1e-9:
            raise ValueError("stain vectors must be linearly independent")
        if p99.shape != (2,):
            raise ShapeMismatchError("concentration stats must have 2 entries")
        object.__setattr__(self, "stain_matrix", matrix)
        object.__setattr__(self, "concentration_p99", p99)


def _check_rgb(img) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeMismatchError(f"expected an HxWx3 image, got shape {img.shape}")
    if img.dtype != np.uint8:
        raise ValueError("expected 8-bit channel values")
    return img


def rgb_to_od(img) -> np.ndarray:
    """Optical density per channel: -log10((v + 1) / 256), zero for white."""
    img = _check_rgb(img)
    return -np.log10((img.astype(np.float64) + 1.0) / 256.0)


def od_to_rgb(od) -> np.ndarray:
    """Invert rgb_to_od, rounding to the nearest 8-bit value."""
    od = np.asarray(od, dtype=np.float64)
    values = 256.0 * np.power(10.0, -od) - 1.0
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def _tissue_od(od_pixels):
    return od_pixels[np.linalg.norm(od_pixels, axis=1) > TISSUE_OD_NORM]


def _unmix(od_pixels, stain_matrix):
    """Least-squares concentrations (pixels x 2), clipped at zero."""
    conc, *_ = np.linalg.lstsq(stain_matrix, od_pixels.T, rcond=None)
    return np.clip(conc.T, 0.0, None)


def _concentration_stats(od_pixels, stain_matrix) -> np.ndarray:
    """Per-stain 99th percentile concentration over the tissue pixels."""
    tissue = _tissue_od(od_pixels)
    conc = _unmix(tissue, stain_matrix)
    return np.percentile(conc, CONCENTRATION_PERCENTILE, axis=0)


def estimate_stain_profile(img) -> StainProfile:
    """Estimate a two-stain profile from one H&E image.

    The tissue OD cloud is projected onto its top-2 principal plane and the
    1st/99th percentile angular directions become the stain vectors, the more
    blue-absorbing one ordered first (hematoxylin).  Raises
    StainEstimationError for blank tiles (under 1% tissue pixels) and for
    rank-deficient (single-stain) OD clouds.
    """
    img = _check_rgb(img)
    return estimate_stain_profile_from_od(rgb_to_od(img).reshape(-1, 3))


def estimate_stain_profile_from_od(od_pixels) -> StainProfile:
    """Profile estimation on raw OD pixel vectors (pixels x 3).

    This is the quantization-free core of estimate_stain_profile; use it when
    optical densities are available directly instead of an 8-bit image.
    """
    od_pixels = np.asarray(od_pixels, dtype=np.float64).reshape(-1, 3)
    tissue = _tissue_od(od_pixels)
    if tissue.shape[0] < MIN_TISSUE_FRACTION * od_pixels.shape[0]:
        raise StainEstimationError("blank tile: too few tissue pixels")

    covariance = np.cov(tissue.T)
    eigvals, eigvecs = np.linalg.eigh(covariance)
    # top-2 principal directions, deterministically oriented
    basis = eigvecs[:, [2, 1]]
    if eigvals[1] <= 1e-9 * max(eigvals[2], 1e-300):
        raise StainEstimationError("degenerate second stain direction")
    for i in range(2):
        pivot = np.argmax(np.abs(basis[:, i]))
        if basis[pivot, i] < 0:
            basis[:, i] = -basis[:, i]

    projected = tissue @ basis
    angles = np.arctan2(projected[:, 1], projected[:, 0])
    lo, hi = np.percentile(angles, ANGLE_PERCENTILES)
    directions = []
    for phi in (lo, hi):
        vec = basis @ np.array([np.cos(phi), np.sin(phi)])
        if vec.sum() < 0:
            vec = -vec
        vec = np.clip(vec, 0.0, None)
        norm = np.linalg.norm(vec)
        if norm < 1e-12:
            raise StainEstimationError("degenerate stain direction")
        directions.append(vec / norm)

    # hematoxylin is the more blue-absorbing direction
    if directions[1][2] > directions[0][2]:
        directions = [directions[1], directions[0]]
    matrix = np.stack(directions, axis=1)
    if abs(float(matrix[:, 0] @ matrix[:, 1])) > 1.0 - 1e-9:
        raise StainEstimationError("stain directions are not independent")

    return StainProfile(
        stain_matrix=matrix,
        concentration_p99=_concentration_stats(od_pixels, matrix),
    )


def normalize_to_template(img, template: StainProfile) -> np.ndarray:
    """Restain an image into a template's staining style.

    Unmixes the image against its own estimated profile, rescales each
    stain's concentrations so their 99th percentile matches the template's,
    and recomposes through the template stain matrix.  Blank tiles are
    refused (StainEstimationError propagates from profile estimation).
    """
    img = _check_rgb(img)
    source = estimate_stain_profile(img)
    if np.any(source.concentration_p99 <= 1e-12):
        raise StainEstimationError("source stain concentrations are degenerate")

    od_pixels = rgb_to_od(img).reshape(-1, 3)
    conc = _unmix(od_pixels, source.stain_matrix)
    conc *= template.concentration_p99 / source.concentration_p99
    restained = conc @ template.stain_matrix.T
    return od_to_rgb(restained.reshape(img.shape))
