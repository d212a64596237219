import numpy as np
import pytest

from nucseg.costloss import (
    build_cost_matrix,
    class_weights,
    cost_sensitive_loss,
    cost_weighted_cross_entropy,
    cost_weighted_cross_entropy_gradient,
    loss_gradient,
    with_background,
)
from nucseg.errors import InvalidClassError, ShapeMismatchError

from conftest import make_rng

# per-class instance counts of the challenge training set, class-id order
# (neutrophil, epithelial, lymphocyte, plasma, eosinophil, connective)
CHALLENGE_COUNTS = (4824, 244563, 101413, 28466, 3604, 112309)


def naive_loss(probs, truth, m):
    """Scalar double-loop recomputation of the expected-cost loss."""
    probs = np.asarray(probs, dtype=np.float64).reshape(-1, np.asarray(m).shape[0])
    truth = np.asarray(truth).reshape(-1)
    total = 0.0
    for p in range(probs.shape[0]):
        for j in range(probs.shape[1]):
            total += m[j][truth[p]] * probs[p, j]
    return total / probs.shape[0]


def random_triple(rng, n_pixels=None, n_classes=None):
    n_pixels = n_pixels or int(rng.integers(1, 40))
    n_classes = n_classes or int(rng.integers(2, 7))
    probs = rng.uniform(0.01, 1.0, size=(n_pixels, n_classes))
    probs /= probs.sum(axis=1, keepdims=True)
    truth = rng.integers(0, n_classes, size=n_pixels)
    m = rng.uniform(0.0, 5.0, size=(n_classes, n_classes))
    np.fill_diagonal(m, 0.0)
    return probs, truth, m


def test_equal_counts_give_unit_costs():
    assert build_cost_matrix((10, 10)).tolist() == [[0.0, 1.0], [1.0, 0.0]]


def test_challenge_counts_eosinophil_column():
    m = build_cost_matrix(CHALLENGE_COUNTS)
    assert np.all(np.diag(m) == 0.0)
    eos_column = m[:, 4]
    expected = 244563 / 3604  # most frequent / rarest, about 67.86
    for j in range(6):
        if j != 4:
            assert eos_column[j] == expected
    assert 60 < expected < 70  # "almost 70 times larger"
    # the most frequent class has off-diagonal cost exactly 1
    epi_column = m[:, 1]
    assert all(epi_column[j] == 1.0 for j in range(6) if j != 1)


def test_hand_arithmetic_example():
    m = build_cost_matrix((1, 2, 4))
    for k, cost in enumerate((4.0, 2.0, 1.0)):
        for j in range(3):
            assert m[j, k] == (0.0 if j == k else cost)


def test_zero_count_is_rejected():
    with pytest.raises(ValueError):
        build_cost_matrix((3, 0, 5))
    with pytest.raises(ValueError):
        build_cost_matrix((7,))
    with pytest.raises(ValueError):
        build_cost_matrix((2, 3), rule="no-such-rule")


def test_background_padding():
    m = with_background(build_cost_matrix((10, 10)), background_cost=0.5)
    assert m.shape == (3, 3)
    assert m[0, 0] == 0.0
    assert m[0, 1] == m[1, 0] == 0.5
    assert m[1, 2] == 1.0


def test_loss_trivial_cases():
    m = [[0.0, 1.0], [1.0, 0.0]]
    one_hot = np.array([[1.0, 0.0], [0.0, 1.0]])
    truth = np.array([0, 1])
    assert cost_sensitive_loss(one_hot, truth, m) == 0.0
    # single pixel, truth 0, probs (0.7, 0.3) -> 0.3
    assert np.isclose(cost_sensitive_loss([[0.7, 0.3]], [0], m), 0.3)


def test_loss_matches_double_loop_oracle():
    rng = make_rng(21)
    for trial in range(25):
        probs, truth, m = random_triple(rng)
        assert np.isclose(
            cost_sensitive_loss(probs, truth, m),
            naive_loss(probs, truth, m),
            atol=1e-12,
        )


def test_loss_input_validation():
    m = [[0.0, 1.0], [1.0, 0.0]]
    with pytest.raises(ValueError):
        cost_sensitive_loss([[0.9, 0.3]], [0], m)  # rows must sum to 1
    with pytest.raises(InvalidClassError):
        cost_sensitive_loss([[0.5, 0.5]], [2], m)
    with pytest.raises(ShapeMismatchError):
        cost_sensitive_loss([[0.5, 0.5, 0.0]], [0], m)


def test_gradient_trivial_cases():
    m = np.array([[0.0, 1.0], [1.0, 0.0]])
    grad = loss_gradient([[0.7, 0.3]], [0], m)
    assert np.array_equal(grad, [[0.0, 1.0]])
    zero = loss_gradient([[0.7, 0.3]], [0], np.zeros((2, 2)))
    assert np.all(zero == 0.0)


def test_gradient_matches_finite_differences():
    rng = make_rng(22)
    step = 1e-4
    worst = 0.0
    for trial in range(30):
        probs, truth, m = random_triple(rng)
        grad = loss_gradient(probs, truth, m)
        for _ in range(4):  # spot-check a few coordinates per triple
            p = int(rng.integers(0, probs.shape[0]))
            j = int(rng.integers(0, probs.shape[1]))
            plus = probs.copy()
            minus = probs.copy()
            plus[p, j] += step
            minus[p, j] -= step
            fd = (naive_loss(plus, truth, m) - naive_loss(minus, truth, m)) / (2 * step)
            worst = max(worst, abs(fd - grad[p, j]))
    assert worst < 1e-6


def test_loss_is_linear_in_probs():
    rng = make_rng(23)
    probs_a, truth, m = random_triple(rng, n_pixels=20, n_classes=4)
    probs_b = rng.uniform(0.01, 1.0, size=probs_a.shape)
    probs_b /= probs_b.sum(axis=1, keepdims=True)
    for alpha in (0.0, 0.25, 0.5, 0.9, 1.0):
        mixed = alpha * probs_a + (1 - alpha) * probs_b
        expected = alpha * cost_sensitive_loss(probs_a, truth, m) + (
            1 - alpha
        ) * cost_sensitive_loss(probs_b, truth, m)
        assert np.isclose(cost_sensitive_loss(mixed, truth, m), expected, atol=1e-12)


def test_scaling_cost_matrix_scales_loss_and_gradient():
    rng = make_rng(24)
    probs, truth, m = random_triple(rng, n_pixels=15, n_classes=3)
    scale = 3.7
    assert np.isclose(
        cost_sensitive_loss(probs, truth, scale * m),
        scale * cost_sensitive_loss(probs, truth, m),
        atol=1e-12,
    )
    assert np.allclose(
        loss_gradient(probs, truth, scale * m),
        scale * loss_gradient(probs, truth, m),
        atol=1e-12,
    )


def test_one_hot_argmin_is_true_class():
    rng = make_rng(25)
    _, _, m = random_triple(rng, n_pixels=1, n_classes=5)
    m += 0.01  # strictly positive off the diagonal
    np.fill_diagonal(m, 0.0)
    for true_class in range(5):
        losses = []
        for predicted in range(5):
            one_hot = np.zeros((1, 5))
            one_hot[0, predicted] = 1.0
            losses.append(cost_sensitive_loss(one_hot, [true_class], m))
        assert int(np.argmin(losses)) == true_class
        assert losses[true_class] == 0.0


def test_weighted_cross_entropy_form():
    weights = class_weights(CHALLENGE_COUNTS)
    assert weights[1] == 1.0  # epithelial is the most frequent class
    assert weights[4] == 244563 / 3604

    probs = np.array([[0.8, 0.2], [0.3, 0.7]])
    truth = np.array([0, 1])
    w = np.array([1.0, 2.0])
    expected = (1.0 * -np.log(0.8) + 2.0 * -np.log(0.7)) / 2
    assert np.isclose(cost_weighted_cross_entropy(probs, truth, w), expected)

    # gradient agrees with central differences
    grad = cost_weighted_cross_entropy_gradient(probs, truth, w)
    step = 1e-5
    for p in range(2):
        for j in range(2):
            plus = probs.copy()
            minus = probs.copy()
            plus[p, j] += step
            minus[p, j] -= step

            def unchecked(x):
                p_true = x[np.arange(2), truth]
                return float((w[truth] * -np.log(p_true)).mean())

            fd = (unchecked(plus) - unchecked(minus)) / (2 * step)
            assert abs(fd - grad[p, j]) < 1e-5
