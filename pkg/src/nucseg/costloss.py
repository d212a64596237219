"""Cost-sensitive classification loss built from class-frequency ratios.

The cost matrix m[j, k] prices predicting class j when the true class is k.
Its diagonal is zero and off-diagonal entries scale with how rare the true
class is, so mistakes on minority classes dominate the loss.  Two loss forms
share the matrix: the expected misclassification cost (linear in the
predicted distribution, with a closed-form gradient) and a cost-weighted
cross entropy.
"""

import numpy as np

from .errors import InvalidClassError, ShapeMismatchError


def _validate_counts(counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64)
    if counts.ndim != 1 or counts.size < 2:
        raise ValueError("counts must be a 1D vector of at least two classes")
    if np.any(counts <= 0):
        raise ValueError(
            "every class needs a positive count; frequency ratios are "
            "undefined otherwise"
        )
    return counts


def max_ratio_costs(counts) -> np.ndarray:
    """m[j, k] = n_max / n[k] off the diagonal, 0 on it.

    The most frequent class has off-diagonal cost 1 and misclassifying a
    class that is r times rarer costs r.
    """
    counts = _validate_counts(counts)
    n = counts.size
    column_cost = counts.max() / counts.astype(np.float64)
    m = np.tile(column_cost, (n, 1))
    np.fill_diagonal(m, 0.0)
    return m


COST_RULES = {"max-ratio": max_ratio_costs}


def build_cost_matrix(counts, rule: str = "max-ratio") -> np.ndarray:
    """Build an N x N cost matrix from per-class instance counts."""
    try:
        builder = COST_RULES[rule]
    except KeyError:
        raise ValueError(f"unknown cost rule {rule!r}; have {sorted(COST_RULES)}")
    return builder(counts)


def with_background(m, background_cost: float = 1.0) -> np.ndarray:
    """Pad a cost matrix with a background row/column at index 0.

    Background confusions carry the flat ``background_cost``; the diagonal
    stays zero and nuclear-class costs are unchanged.
    """
    n = m.shape[0]
    out = np.full((n + 1, n + 1), background_cost, dtype=np.float64)
    out[1:, 1:] = m
    out[0, 0] = 0.0
    return out


def _check_inputs(probs, truth, m):
    probs = np.asarray(probs, dtype=np.float64)
    truth = np.asarray(truth)
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeMismatchError("cost matrix must be square")
    n_classes = m.shape[0]
    if probs.ndim < 1 or probs.shape[-1] != n_classes:
        raise ShapeMismatchError(
            f"probs last axis must have {n_classes} entries, got {probs.shape}"
        )
    flat_probs = probs.reshape(-1, n_classes)
    flat_truth = truth.reshape(-1)
    if flat_truth.shape[0] != flat_probs.shape[0]:
        raise ShapeMismatchError("probs and truth disagree on the pixel count")
    if not np.issubdtype(flat_truth.dtype, np.integer):
        raise InvalidClassError("truth must hold integer class ids")
    if flat_truth.size and (flat_truth.min() < 0 or flat_truth.max() >= n_classes):
        raise InvalidClassError(f"truth ids must lie in [0, {n_classes})")
    if flat_probs.size and np.abs(flat_probs.sum(axis=1) - 1.0).max() > 1e-5:
        raise ValueError("probs rows must sum to 1 within 1e-5")
    return flat_probs, flat_truth.astype(np.int64), m


def cost_sensitive_loss(probs, truth, m) -> float:
    """Mean expected misclassification cost.

    For each pixel with true class y, the cost is sum_j m[j, y] * probs[j];
    the loss is the mean over pixels.  Zero iff every pixel puts all its mass
    on its true class.
    """
    flat_probs, flat_truth, m = _check_inputs(probs, truth, m)
    if flat_probs.shape[0] == 0:
        return 0.0
    per_pixel = (flat_probs * m[:, flat_truth].T).sum(axis=1)
    return float(per_pixel.mean())


def loss_gradient(probs, truth, m) -> np.ndarray:
    """Gradient of cost_sensitive_loss w.r.t. probs: m[j, y(p)] / n_pixels."""
    flat_probs, flat_truth, m = _check_inputs(probs, truth, m)
    shape = np.asarray(probs).shape
    if flat_probs.shape[0] == 0:
        return np.zeros(shape, dtype=np.float64)
    grad = m[:, flat_truth].T / flat_probs.shape[0]
    return grad.reshape(shape)


def class_weights(counts) -> np.ndarray:
    """Per-true-class weights n_max / n[k] for the weighted cross entropy."""
    counts = _validate_counts(counts)
    return counts.max() / counts.astype(np.float64)


def cost_weighted_cross_entropy(probs, truth, weights) -> float:
    """Alternative loss form: mean of w[y] * -log(probs[y]) over pixels."""
    weights = np.asarray(weights, dtype=np.float64)
    m = np.zeros((weights.size, weights.size))  # shape/ids checked as usual
    flat_probs, flat_truth, _ = _check_inputs(probs, truth, m)
    if flat_probs.shape[0] == 0:
        return 0.0
    p_true = flat_probs[np.arange(flat_truth.size), flat_truth]
    return float((weights[flat_truth] * -np.log(p_true)).mean())


def cost_weighted_cross_entropy_gradient(probs, truth, weights) -> np.ndarray:
    """Gradient of the weighted cross entropy w.r.t. probs."""
    weights = np.asarray(weights, dtype=np.float64)
    m = np.zeros((weights.size, weights.size))
    flat_probs, flat_truth, _ = _check_inputs(probs, truth, m)
    shape = np.asarray(probs).shape
    grad = np.zeros_like(flat_probs)
    if flat_probs.shape[0]:
        rows = np.arange(flat_truth.size)
        grad[rows, flat_truth] = (
            -weights[flat_truth] / flat_probs[rows, flat_truth] / flat_truth.size
        )
    return grad.reshape(shape)


LOSS_FORMS = {
    "expected-cost": (cost_sensitive_loss, loss_gradient),
    "weighted-ce": (cost_weighted_cross_entropy, cost_weighted_cross_entropy_gradient),
}
