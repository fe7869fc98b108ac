import itertools

import numpy as np
import pytest

from vesselpath.metrics import (OTHER, BinaryCounts, ConfusionMatrix, EvaluationError, align_labels,
                                class_metrics, confusion, evaluate, format_confusion, format_table,
                                one_vs_all, report_json)

ORDER = ("NE", "NM", "NW", "S", "SW")

# reference k-means/GMM outcome: six NM voyages predicted NE
REF_COUNTS = np.array([
    [14, 0, 0, 0, 0],
    [6, 34, 0, 0, 0],
    [0, 0, 16, 0, 0],
    [0, 0, 0, 52, 0],
    [0, 0, 0, 0, 2],
])
REF_SCORES = {"NE": (0.7, 1.0, 0.824), "NM": (1.0, 0.85, 0.919), "NW": (1, 1, 1), "S": (1, 1, 1), "SW": (1, 1, 1)}


def labels_from_counts(counts):
    actual, pred = [], []
    for i, a in enumerate(ORDER):
        for j, p in enumerate(ORDER):
            actual += [a] * int(counts[i, j])
            pred += [p] * int(counts[i, j])
    return actual, pred


def test_reference_one_vs_all_counts():
    cm = ConfusionMatrix(ORDER, REF_COUNTS)
    assert cm.total == 124
    assert one_vs_all(cm, "NE") == BinaryCounts(14, 6, 0, 104)
    assert one_vs_all(cm, "NM") == BinaryCounts(34, 0, 6, 84)


def test_reference_scores():
    cm = ConfusionMatrix(ORDER, REF_COUNTS)
    for lab, expect in REF_SCORES.items():
        m = class_metrics(one_vs_all(cm, lab), lab)
        got = tuple(round(x, 3) for x in (m.precision, m.recall, m.f1))
        assert got == pytest.approx(expect, abs=5e-4)
        assert not m.degenerate


def test_confusion_from_labels():
    actual, pred = labels_from_counts(REF_COUNTS)
    cm = confusion(actual, pred, ORDER)
    np.testing.assert_array_equal(cm.counts, REF_COUNTS)
    assert cm.counts[1, 0] == 6 and cm.counts[1, 1] == 34


def test_perfect_predictions_diagonal():
    actual, _ = labels_from_counts(np.diag([14, 40, 16, 52, 2]))
    cm = confusion(actual, actual, ORDER)
    np.testing.assert_array_equal(cm.counts, np.diag([14, 40, 16, 52, 2]))
    _, per = evaluate(dict(enumerate(actual)), dict(enumerate(actual)), ORDER)
    assert all((m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0) for m in per)


def test_empty_and_degenerate():
    cm = confusion([], [], ORDER)
    assert cm.total == 0 and not cm.counts.any()
    assert one_vs_all(cm, "NE") == BinaryCounts(0, 0, 0, 0)
    m = class_metrics(BinaryCounts(0, 0, 0, 0))
    assert (m.precision, m.recall, m.f1, m.degenerate) == (0.0, 0.0, 0.0, True)


def test_unknown_labels():
    with pytest.raises(EvaluationError):
        confusion(["X"], ["NE"], ORDER)
    with pytest.raises(EvaluationError):
        one_vs_all(ConfusionMatrix(ORDER, REF_COUNTS), "X")
    with pytest.raises(EvaluationError):
        ConfusionMatrix(ORDER, np.zeros((4, 4)))


def test_alignment_identity_and_swap():
    truth = {f"v{k}": lab for k, lab in enumerate(["A", "A", "B", "B", "C"])}
    al = align_labels({"v0": 0, "v1": 0, "v2": 1, "v3": 1, "v4": 2}, truth)
    assert al.mapping == {0: "A", 1: "B", 2: "C"}
    al = align_labels({"v0": 1, "v1": 1, "v2": 0, "v3": 0, "v4": 2}, truth)
    assert al.predicted == truth
    with pytest.raises(EvaluationError):
        align_labels({"v0": 0}, truth)


def test_surplus_cluster_maps_to_other():
    truth = {"a": "X", "b": "X", "c": "Y"}
    al = align_labels({"a": 0, "b": 2, "c": 1}, truth)
    assert sorted(al.mapping.values()) == sorted(["X", "Y", OTHER])
    cm, per = evaluate(truth, al.predicted, ["X", "Y"])
    assert cm.class_order[-1] == OTHER
    assert per[0].recall == 0.5


@pytest.mark.parametrize("seed", range(5))
def test_alignment_matches_permutation_search(seed):
    rng = np.random.default_rng(seed)
    labels = list("ABCDE")
    truth = {f"v{k}": labels[rng.integers(5)] for k in range(30)}
    pred = {k: int(rng.integers(5)) for k in truth}
    best = 0
    for perm in itertools.permutations(labels):
        best = max(best, sum(perm[pred[k]] == truth[k] for k in truth))
    al = align_labels(pred, truth, labels)
    assert sum(al.predicted[k] == truth[k] for k in truth) == best


def test_formatting_and_report():
    cm = ConfusionMatrix(ORDER, REF_COUNTS)
    per = [class_metrics(one_vs_all(cm, lab), lab) for lab in ORDER]
    table = format_table(per).splitlines()
    assert table[0].split() == ["Paths", "Precision", "Recall", "F1-score"]
    assert table[1].split() == ["NE", "0.700", "1.000", "0.824"]
    assert table[2].split() == ["NM", "1.000", "0.850", "0.919"]
    conf = format_confusion(cm).splitlines()
    assert conf[2].split() == ["NM", "6", "34", "0", "0", "0", "40"]
    assert conf[-1].split()[-1] == "124"
    rep = report_json(cm, per, {0: "NE"})
    assert rep["confusion"]["counts"] == REF_COUNTS.tolist()
    assert rep["alignment"] == {"0": "NE"}
