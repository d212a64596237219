import numpy as np
import pytest

from nucseg.errors import ShapeMismatchError
from nucseg.instances import N_CLASSES
from nucseg.metrics import (
    counts_from,
    evaluate_dataset,
    match_instances,
    mpq_plus,
    pq,
    pq_from_stats,
    r_squared,
)

from conftest import make_rng, random_class_map, random_label_map


def pixel_sets(labels):
    return {
        int(v): set(map(tuple, np.argwhere(labels == v)))
        for v in np.unique(labels)
        if v != 0
    }


def brute_force_match(pred, gt):
    """Exhaustive all-pairs IoU matching, O(P*G) with Python sets."""
    pred_sets = pixel_sets(pred)
    gt_sets = pixel_sets(gt)
    tp = []
    for g in sorted(gt_sets):
        for p in sorted(pred_sets):
            inter = len(pred_sets[p] & gt_sets[g])
            union = len(pred_sets[p] | gt_sets[g])
            if union and inter / union > 0.5:
                tp.append((p, g, inter / union))
    matched_p = {p for p, _, _ in tp}
    matched_g = {g for _, g, _ in tp}
    fp = tuple(p for p in sorted(pred_sets) if p not in matched_p)
    fn = tuple(g for g in sorted(gt_sets) if g not in matched_g)
    return tuple(tp), fp, fn


def test_match_identical_maps():
    rng = make_rng(1)
    gt = random_label_map(rng, 24, 24, n_blobs=3)
    match = match_instances(gt, gt)
    assert len(match.tp_pairs) == gt.max()
    assert all(iou == 1.0 for _, _, iou in match.tp_pairs)
    assert match.fp_labels == () and match.fn_labels == ()


def test_match_empty_prediction():
    gt = np.zeros((8, 8), dtype=np.int32)
    gt[0, 0:2] = 1
    gt[4, 0:2] = 2
    match = match_instances(np.zeros_like(gt), gt)
    assert match.tp_pairs == ()
    assert match.fp_labels == ()
    assert match.fn_labels == (1, 2)


def test_match_equals_brute_force_oracle():
    rng = make_rng(2)
    for trial in range(20):
        pred = random_label_map(rng, 32, 32, n_blobs=int(rng.integers(1, 8)))
        gt = random_label_map(rng, 32, 32, n_blobs=int(rng.integers(1, 8)))
        match = match_instances(pred, gt)
        tp, fp, fn = brute_force_match(pred, gt)
        assert match.tp_pairs == tp  # identical pairs and identical iou floats
        assert match.fp_labels == fp
        assert match.fn_labels == fn
        # IoU > 0.5 makes the matching unique by construction
        assert len({p for p, _, _ in tp}) == len(tp)
        assert len({g for _, g, _ in tp}) == len(tp)


def test_match_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        match_instances(np.zeros((2, 2), dtype=np.int32), np.zeros((3, 2), dtype=np.int32))


def test_pq_trivial_values():
    rng = make_rng(3)
    gt = random_label_map(rng, 16, 16, n_blobs=4)
    assert pq(match_instances(gt, gt)) == (1.0, 1.0, 1.0)
    # 1 tp at iou 0.8, 1 fp, 1 fn -> dq 1/2, sq 0.8, pq 0.4
    score = pq_from_stats(tp=1, fp=1, fn=1, iou_sum=0.8)
    assert score.dq == 0.5
    assert score.sq == 0.8
    assert np.isclose(score.pq, 0.4)
    # the all-empty case is neutral
    assert pq_from_stats(0, 0, 0, 0.0) == (1.0, 1.0, 1.0)


def test_pq_matches_formula_recomputation():
    rng = make_rng(4)
    for trial in range(20):
        pred = random_label_map(rng, 32, 32, n_blobs=int(rng.integers(1, 8)))
        gt = random_label_map(rng, 32, 32, n_blobs=int(rng.integers(1, 8)))
        match = match_instances(pred, gt)
        score = pq(match)
        tp = len(match.tp_pairs)
        fp = len(match.fp_labels)
        fn = len(match.fn_labels)
        if tp + fp + fn == 0:
            continue
        dq = tp / (tp + 0.5 * fp + 0.5 * fn)
        sq = sum(i for _, _, i in match.tp_pairs) / tp if tp else 0.0
        assert score.dq == dq and score.sq == sq and score.pq == dq * sq
        assert 0.0 <= score.pq <= 1.0


def test_pq_one_iff_maps_equal_as_partitions():
    rng = make_rng(5)
    gt = random_label_map(rng, 24, 24, n_blobs=5)
    assert pq(match_instances(gt, gt)).pq == 1.0
    # perturb one pixel: pq drops below 1
    pred = gt.copy()
    rows, cols = np.nonzero(pred > 0)
    pred[rows[0], cols[0]] = 0
    assert pq(match_instances(pred, gt)).pq < 1.0


def immaculate_pair(rng, n_blobs=6):
    labels = random_label_map(rng, 40, 40, n_blobs=n_blobs)
    classes = random_class_map(rng, labels)
    return labels, classes


def brute_force_mpq(dataset):
    """Per-class accumulation oracle with python dicts and sets."""
    totals = {c: [0, 0, 0, 0.0] for c in range(1, N_CLASSES + 1)}
    for (pred_inst, pred_cls), (gt_inst, gt_cls) in dataset:
        for c in range(1, N_CLASSES + 1):
            def restrict(inst, cls):
                out = np.zeros_like(inst)
                for v in np.unique(inst):
                    if v == 0:
                        continue
                    pix = inst == v
                    vals, counts = np.unique(cls[pix], return_counts=True)
                    if vals[np.argmax(counts)] == c:
                        out[pix] = v
                return out

            tp, fp, fn = brute_force_match(
                restrict(pred_inst, pred_cls), restrict(gt_inst, gt_cls)
            )
            totals[c][0] += len(tp)
            totals[c][1] += len(fp)
            totals[c][2] += len(fn)
            totals[c][3] += sum(i for _, _, i in tp)
    per_class = []
    for c in range(1, N_CLASSES + 1):
        tp, fp, fn, iou_sum = totals[c]
        if tp == fp == fn == 0:
            per_class.append(1.0)
        else:
            dq = tp / (tp + 0.5 * fp + 0.5 * fn)
            per_class.append(dq * (iou_sum / tp if tp else 0.0))
    return per_class, float(np.mean(per_class))


def test_mpq_perfect_prediction():
    rng = make_rng(6)
    dataset = [(pair, pair) for pair in (immaculate_pair(rng) for _ in range(3))]
    result = mpq_plus(dataset)
    assert result.mpq_plus == 1.0
    assert all(v == 1.0 for v in result.per_class_pq)


def test_mpq_absent_classes_are_neutral_and_flagged():
    labels = np.zeros((10, 10), dtype=np.int32)
    labels[2:5, 2:5] = 1
    classes = np.where(labels > 0, 3, 0)
    result = mpq_plus([((labels, classes), (labels, classes))])
    assert result.per_class_pq[2] == 1.0  # class 3 genuinely matched
    assert set(result.empty_classes) == {1, 2, 4, 5, 6}
    assert all(result.per_class_pq[c - 1] == 1.0 for c in result.empty_classes)


def test_mpq_matches_brute_force_accumulation():
    rng = make_rng(7)
    dataset = []
    for _ in range(5):
        pred = immaculate_pair(rng, n_blobs=int(rng.integers(2, 7)))
        gt = immaculate_pair(rng, n_blobs=int(rng.integers(2, 7)))
        dataset.append((pred, gt))
    result = mpq_plus(dataset)
    oracle_per_class, oracle_mpq = brute_force_mpq(dataset)
    assert np.allclose(result.per_class_pq, oracle_per_class, atol=1e-12)
    assert np.isclose(result.mpq_plus, oracle_mpq, atol=1e-12)


def test_mpq_invariant_to_image_order_and_tile_split():
    rng = make_rng(8)
    dataset = [
        (immaculate_pair(rng, 4), immaculate_pair(rng, 4)) for _ in range(3)
    ]
    forward = mpq_plus(dataset)
    backward = mpq_plus(dataset[::-1])
    assert forward == backward

    # splitting one image along an all-background column changes nothing
    (pred, gt) = dataset[0]
    pred_inst, pred_cls = pred
    gt_inst, gt_cls = gt
    col = pred_inst.shape[1] // 2
    while np.any(pred_inst[:, col]) or np.any(gt_inst[:, col]):
        pred_inst = np.insert(pred_inst, col, 0, axis=1)
        pred_cls = np.insert(pred_cls, col, 0, axis=1)
        gt_inst = np.insert(gt_inst, col, 0, axis=1)
        gt_cls = np.insert(gt_cls, col, 0, axis=1)
    from nucseg.instances import canonicalize

    def halves(inst, cls):
        left = (canonicalize(inst[:, :col]), cls[:, :col])
        right = (canonicalize(inst[:, col:]), cls[:, col:])
        return left, right

    whole = mpq_plus([((canonicalize(pred_inst), pred_cls), (canonicalize(gt_inst), gt_cls))])
    pred_left, pred_right = halves(pred_inst, pred_cls)
    gt_left, gt_right = halves(gt_inst, gt_cls)
    split = mpq_plus([(pred_left, gt_left), (pred_right, gt_right)])
    assert np.allclose(whole.per_class_pq, split.per_class_pq, atol=1e-12)


def test_counts_trivial_and_oracle():
    empty = np.zeros((6, 6), dtype=np.int32)
    assert counts_from(empty, empty).tolist() == [0] * N_CLASSES

    labels = np.zeros((10, 20), dtype=np.int32)
    classes = np.zeros_like(labels)
    for i, (r, c) in enumerate([(1, 1), (1, 6), (4, 1), (7, 1)]):
        labels[r : r + 2, c : c + 2] = i + 1
        classes[r : r + 2, c : c + 2] = 2 if i < 3 else 4  # 3 epithelial + 1 plasma
    counts = counts_from(labels, classes)
    assert counts[1] == 3 and counts[3] == 1 and counts.sum() == 4

    rng = make_rng(9)
    labels = random_label_map(rng, 32, 32, n_blobs=8)
    classes = random_class_map(rng, labels)
    from nucseg.instances import extract_instances

    hist = np.zeros(N_CLASSES, dtype=np.int64)
    for rec in extract_instances(labels, classes):
        hist[rec.class_id - 1] += 1
    assert np.array_equal(counts_from(labels, classes), hist)


def test_r_squared_trivial_cases():
    gt = np.array([[1, 2, 3, 4, 5, 6], [3, 4, 5, 6, 7, 8], [5, 6, 7, 8, 9, 10]])
    perfect = r_squared(gt, gt)
    assert all(v == 1.0 for v in perfect.per_class_r2)
    assert perfect.overall == 1.0

    # predicting the column mean gives exactly zero per class
    mean_pred = np.tile(gt.mean(axis=0).astype(np.int64), (3, 1))
    assert np.array_equal(mean_pred.mean(axis=0), gt.mean(axis=0))
    zero = r_squared(mean_pred, gt)
    assert all(v == 0.0 for v in zero.per_class_r2)


def test_r_squared_matches_direct_formula():
    rng = make_rng(10)
    for trial in range(10):
        n = int(rng.integers(2, 9))
        gt = rng.integers(0, 12, size=(n, N_CLASSES))
        pred = rng.integers(0, 12, size=(n, N_CLASSES))
        result = r_squared(pred, gt)
        for k in range(N_CLASSES):
            ss_res = float(((pred[:, k] - gt[:, k]) ** 2).sum())
            ss_tot = float(((gt[:, k] - gt[:, k].mean()) ** 2).sum())
            if ss_tot == 0:
                continue
            assert np.isclose(result.per_class_r2[k], 1 - ss_res / ss_tot, atol=1e-9)


def test_r_squared_can_be_negative():
    gt = np.array([[0, 1, 0, 1, 0, 1], [1, 0, 1, 0, 1, 0]])
    pred = np.array([[9, 9, 9, 9, 9, 9], [0, 0, 0, 0, 0, 0]])
    result = r_squared(pred, gt)
    assert any(v < 0 for v in result.per_class_r2)


def test_r_squared_degenerate_columns():
    gt = np.full((3, N_CLASSES), 4)
    exact = r_squared(gt, gt)
    assert all(v == 1.0 for v in exact.per_class_r2)
    assert exact.degenerate_classes == ()

    off = gt.copy()
    off[0, 0] += 1
    result = r_squared(off, gt)
    assert result.per_class_r2[0] == float("-inf")
    assert result.degenerate_classes == (1,)
    assert np.isfinite(result.overall)  # mean of the finite values only


def test_r_squared_appending_perfect_image_keeps_residuals():
    rng = make_rng(11)
    gt = rng.integers(0, 10, size=(5, N_CLASSES))
    pred = rng.integers(0, 10, size=(5, N_CLASSES))
    extra = rng.integers(0, 10, size=(1, N_CLASSES))
    gt2 = np.vstack([gt, extra])
    pred2 = np.vstack([pred, extra])  # pred == gt on the appended image
    for k in range(N_CLASSES):
        before = ((pred[:, k] - gt[:, k]) ** 2).sum()
        after = ((pred2[:, k] - gt2[:, k]) ** 2).sum()
        assert before == after


def test_r_squared_length_mismatch():
    with pytest.raises(ShapeMismatchError):
        r_squared(np.zeros((2, N_CLASSES)), np.zeros((3, N_CLASSES)))


def test_evaluate_dataset_combines_everything():
    rng = make_rng(12)
    pairs = [(pair, pair) for pair in (immaculate_pair(rng) for _ in range(4))]
    report = evaluate_dataset(pairs)
    assert report.mpq_plus == 1.0
    assert report.overall_r2 == 1.0
    assert report.pq_row()[0] == 1.0
    assert len(report.pq_row()) == 7 and len(report.r2_row()) == 7
