import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weedseg.errors import InvariantError, ShapeMismatchError
from weedseg.evaluate import (
    ConfusionMatrix,
    argmax_labels,
    confusion,
    evaluate_dataset,
    mann_whitney_auc,
    roc_auc,
    roc_points,
    scores,
    trapezoid_auc,
)
from weedseg.imgcore import LabelMask, ProbabilityMap

from oracles import pairwise_auc


def test_confusion_layout_true_rows_pred_cols():
    truth = LabelMask(np.array([[0, 1, 2, 2]]))
    pred = LabelMask(np.array([[0, 2, 2, 1]]))
    cm = confusion(pred, truth)
    assert cm.counts.tolist() == [[1, 0, 0], [0, 0, 1], [0, 1, 1]]
    assert (cm.tp(2), cm.fp(2), cm.fn(2), cm.tn(2)) == (1, 1, 1, 1)


def test_scores_worked_values():
    cm = ConfusionMatrix(np.array([[8, 2, 0], [1, 3, 0], [0, 0, 0]]))
    s = scores(cm)
    assert s.precision[0] == 8 / 9 and s.recall[0] == 8 / 10
    assert s.f1[1] == pytest.approx(2 * 0.6 * 0.75 / 1.35)
    # weed never predicted nor present: zero denominators give 0
    assert (s.precision[2], s.recall[2], s.f1[2]) == (0.0, 0.0, 0.0)


def test_perfect_prediction_gives_f1_one():
    rng = np.random.default_rng(0)
    m = LabelMask(rng.integers(0, 3, (8, 8)))
    rep = evaluate_dataset([m], [m])
    assert rep.scores.f1 == (1.0, 1.0, 1.0)
    assert rep.auc == {}


def test_micro_average_sums_confusions():
    rng = np.random.default_rng(1)
    truths = [LabelMask(rng.integers(0, 3, (5, 6))) for _ in range(3)]
    preds = [LabelMask(rng.integers(0, 3, (5, 6))) for _ in range(3)]
    rep = evaluate_dataset(preds, truths)
    summed = sum((confusion(p, t).counts for p, t in zip(preds, truths)), np.zeros((3, 3), int))
    np.testing.assert_array_equal(rep.confusion.counts, summed)
    assert rep.scores == scores(ConfusionMatrix(summed))


def test_auc_matches_pairwise_and_trapezoid():
    rng = np.random.default_rng(2)
    for _ in range(20):
        pos = rng.integers(0, 6, rng.integers(1, 30)) / 5
        neg = rng.integers(0, 6, rng.integers(1, 30)) / 5
        a = mann_whitney_auc(pos, neg)
        assert a == pytest.approx(pairwise_auc(pos, neg), abs=1e-12)
        fpr, tpr, _ = roc_points(pos, neg)
        assert abs(trapezoid_auc(fpr, tpr) - a) <= 1e-9


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=25),
    st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=25),
)
def test_auc_routes_agree_property(pos, neg):
    a = mann_whitney_auc(np.array(pos), np.array(neg))
    fpr, tpr, _ = roc_points(np.array(pos), np.array(neg))
    assert abs(trapezoid_auc(fpr, tpr) - a) <= 1e-9
    assert 0.0 <= a <= 1.0


def test_auc_extremes():
    assert mann_whitney_auc([0.9, 0.8], [0.1, 0.2, 0.3]) == 1.0
    assert mann_whitney_auc([0.1], [0.9]) == 0.0
    assert mann_whitney_auc([0.5] * 4, [0.5] * 7) == 0.5


def test_roc_curve_shape():
    fpr, tpr, thr = roc_points(np.array([0.9, 0.4]), np.array([0.4, 0.1]))
    assert fpr.tolist() == [0.0, 0.0, 0.5, 1.0]
    assert tpr.tolist() == [0.0, 0.5, 1.0, 1.0]
    assert thr[0] == np.inf and thr[1:].tolist() == [0.9, 0.4, 0.1]


def test_roc_needs_both_labels():
    with pytest.raises(InvariantError):
        mann_whitney_auc([], [0.1])
    pm = ProbabilityMap(np.full((3, 2, 2), 1 / 3))
    with pytest.raises(InvariantError):
        roc_auc(pm, LabelMask(np.zeros((2, 2), int)), 0)


def test_argmax_ties_lowest_class():
    p = np.zeros((3, 1, 2))
    p[:, 0, 0] = [0.4, 0.4, 0.2]
    p[:, 0, 1] = [0.2, 0.4, 0.4]
    assert argmax_labels(ProbabilityMap(p)).labels.tolist() == [[0, 1]]


def _random_probs(rng, shape):
    z = rng.random((3,) + shape)
    return ProbabilityMap(z / z.sum(axis=0))


def test_report_pools_auc_and_writes(tmp_path):
    rng = np.random.default_rng(3)
    truths = [LabelMask(rng.integers(0, 3, (6, 6))) for _ in range(2)]
    pms = [_random_probs(rng, (6, 6)) for _ in range(2)]
    rep = evaluate_dataset(pms, truths)
    for c in range(3):
        pos = np.concatenate([p.probs[c][t.labels == c] for p, t in zip(pms, truths)])
        neg = np.concatenate([p.probs[c][t.labels != c] for p, t in zip(pms, truths)])
        assert rep.auc[c] == pytest.approx(pairwise_auc(pos, neg), abs=1e-12)
    rep.write(tmp_path / "r.json", tmp_path / "r.txt", tmp_path / "roc.csv")
    obj = json.loads((tmp_path / "r.json").read_text())
    assert obj["frame_count"] == 2 and set(obj["per_class"]) == {"bg", "crop", "weed"}
    assert "f1" in (tmp_path / "r.txt").read_text()
    header = (tmp_path / "roc.csv").read_text().splitlines()[0]
    assert header == "class,threshold,fpr,tpr"


def test_evaluate_shape_errors():
    with pytest.raises(ShapeMismatchError):
        evaluate_dataset([LabelMask(np.zeros((2, 2), int))], [])
    with pytest.raises(ShapeMismatchError):
        confusion(LabelMask(np.zeros((2, 2), int)), LabelMask(np.zeros((2, 3), int)))
