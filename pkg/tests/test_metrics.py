import itertools
import json

import numpy as np
import pytest

from maskpipe import (ConfusionCounts, ParameterError, binary_rates,
                      build_report, normalize, render_text, report_to_json)
from maskpipe.metrics import update

# Counts whose one-vs-rest rates all render to the published two-decimal
# report: 0.99/0.98/0.99 and 0.99/0.99/0.99 over supports 2060/2200.
REPORT_COUNTS = [[2029, 31], [12, 2188]]
CLASSES = ("with_mask", "without_mask")


def tokens(text):
    return [line.split() for line in text.splitlines()]


def test_binary_rates_formulas_are_exact_fractions():
    p, r, acc, f1 = binary_rates(2019, 2178, 22, 41)
    assert p == 2019 / 2041 and round(p, 2) == 0.99
    assert r == 2019 / 2060 and round(r, 2) == 0.98
    assert acc == (2019 + 2178) / 4260
    assert f1 == 2 * p * r / (p + r)
    assert 0.984 < f1 < 0.985  # rounds to 0.98, between precision and recall


def test_binary_rates_degenerate_and_balanced_points():
    assert binary_rates(10, 10, 0, 0) == (1.0, 1.0, 1.0, 1.0)
    assert binary_rates(50, 50, 50, 50) == (0.5, 0.5, 0.5, 0.5)
    # no positive predictions and no positives at all: 0/0 -> 0
    assert binary_rates(0, 5, 0, 0) == (0.0, 0.0, 1.0, 0.0)
    p, r, acc, f1 = binary_rates(0, 0, 3, 2)
    assert (p, r, acc, f1) == (0.0, 0.0, 0.0, 0.0)


def test_binary_rates_rejects_bad_counts():
    with pytest.raises(ParameterError):
        binary_rates(0, 0, 0, 0)
    with pytest.raises(ParameterError):
        binary_rates(-1, 2, 3, 4)
    with pytest.raises(ParameterError):
        binary_rates(1, 2, 3, -4)


def test_report_renders_the_published_two_decimal_table():
    counts = ConfusionCounts(CLASSES, REPORT_COUNTS)
    lines = tokens(render_text(build_report(counts)))
    assert lines[0] == ["precision", "recall", "f1-score", "support"]
    assert lines[1] == []
    assert lines[2] == ["with_mask", "0.99", "0.98", "0.99", "2060"]
    assert lines[3] == ["without_mask", "0.99", "0.99", "0.99", "2200"]
    assert lines[4] == []
    assert lines[5] == ["accuracy", "0.99", "4260"]
    assert lines[6] == ["macro", "avg", "0.99", "0.99", "0.99", "4260"]
    assert lines[7] == ["weighted", "avg", "0.99", "0.99", "0.99", "4260"]


def test_report_values_behind_the_table():
    report = build_report(ConfusionCounts(CLASSES, REPORT_COUNTS))
    assert report["total"] == 4260
    assert report["accuracy"] == (2029 + 2188) / 4260
    cls = report["classes"]["with_mask"]
    assert cls["support"] == 2060
    assert cls["precision"] == 2029 / 2041
    assert cls["recall"] == 2029 / 2060
    assert report["classes"]["without_mask"]["support"] == 2200


def test_rendering_rounds_half_up():
    # class-0 precision is exactly 197/200 = 0.985 -> must display 0.99
    counts = ConfusionCounts(("a", "b"), [[197, 0], [3, 50]])
    line = tokens(render_text(build_report(counts)))[2]
    assert line == ["a", "0.99", "1.00", "0.99", "197"]


def test_diagonal_counts_score_perfectly():
    report = build_report(ConfusionCounts(("a", "b"), [[5, 0], [0, 7]]))
    for cls in report["classes"].values():
        assert (cls["precision"], cls["recall"], cls["f1"]) == (1.0, 1.0, 1.0)
    assert report["accuracy"] == 1.0


def test_single_populated_class_scores_one_and_rest_zero():
    report = build_report(ConfusionCounts(("a", "b"), [[4, 0], [0, 0]]))
    assert report["classes"]["a"] == {"precision": 1.0, "recall": 1.0,
                                      "f1": 1.0, "support": 4}
    assert report["classes"]["b"] == {"precision": 0.0, "recall": 0.0,
                                      "f1": 0.0, "support": 0}
    assert report["accuracy"] == 1.0


def test_normalize_matches_published_matrices():
    first = normalize(ConfusionCounts(CLASSES, [[2019, 41], [22, 2178]]))
    np.testing.assert_array_equal(first.round(2),
                                  [[0.98, 0.02], [0.01, 0.99]])
    second = normalize(ConfusionCounts(CLASSES, [[2040, 20], [22, 2178]]))
    np.testing.assert_array_equal(second.round(2),
                                  [[0.99, 0.01], [0.01, 0.99]])


def test_normalize_identity_and_zero_rows():
    eye = normalize(ConfusionCounts(("a", "b"), [[5, 0], [0, 7]]))
    np.testing.assert_array_equal(eye, np.eye(2))
    with_hole = normalize(ConfusionCounts(("a", "b"), [[0, 0], [3, 1]]))
    np.testing.assert_array_equal(with_hole[0], [0.0, 0.0])
    np.testing.assert_array_equal(with_hole[1], [0.75, 0.25])


def test_normalized_rows_sum_to_one(rng):
    for _ in range(30):
        k = int(rng.integers(2, 5))
        counts = ConfusionCounts(tuple(f"c{i}" for i in range(k)),
                                 rng.integers(0, 50, size=(k, k)))
        rows = normalize(counts)
        for i in range(k):
            total = counts.matrix[i].sum()
            want = 1.0 if total else 0.0
            assert abs(rows[i].sum() - want) <= 1e-9


def test_binary_report_row_equals_binary_rates_mapping(rng):
    for _ in range(30):
        m = rng.integers(0, 100, size=(2, 2))
        if m.sum() == 0 or m[0].sum() == 0:
            continue
        counts = ConfusionCounts(("a", "b"), m)
        row = build_report(counts)["classes"]["a"]
        p, r, _, f1 = binary_rates(int(m[0, 0]), int(m[1, 1]),
                                   int(m[1, 0]), int(m[0, 1]))
        assert (row["precision"], row["recall"], row["f1"]) == (p, r, f1)


def test_accuracy_is_trace_over_total(rng):
    for _ in range(30):
        k = int(rng.integers(2, 6))
        m = rng.integers(0, 40, size=(k, k))
        if m.sum() == 0:
            continue
        counts = ConfusionCounts(tuple(f"c{i}" for i in range(k)), m)
        assert build_report(counts)["accuracy"] == np.trace(m) / m.sum()


def test_f1_lies_between_precision_and_recall(rng):
    for _ in range(100):
        tp, tn, fp, fn = (int(v) for v in rng.integers(1, 200, size=4))
        p, r, _, f1 = binary_rates(tp, tn, fp, fn)
        assert min(p, r) <= f1 <= max(p, r)


def test_weighted_average_is_support_weighted_exactly(rng):
    for _ in range(20):
        m = rng.integers(1, 60, size=(3, 3))
        counts = ConfusionCounts(("a", "b", "c"), m)
        report = build_report(counts)
        rows = list(report["classes"].values())
        supports = [row["support"] for row in rows]
        for key in ("precision", "recall", "f1"):
            want = sum(r[key] * s for r, s in zip(rows, supports)) / sum(supports)
            assert report["weighted"][key] == want
            macro = sum(r[key] for r in rows) / len(rows)
            assert report["macro"][key] == macro


def test_update_increments_exactly_one_cell():
    counts = ConfusionCounts(("a", "b"))
    assert update(counts, 0, 0) is counts
    np.testing.assert_array_equal(counts.matrix, [[1, 0], [0, 0]])
    counts.update(1, 0)
    np.testing.assert_array_equal(counts.matrix, [[1, 0], [1, 0]])
    assert counts.total == 2


def test_updates_commute_and_conserve(rng):
    events = [(int(a), int(p)) for a, p in rng.integers(0, 2, size=(25, 2))]
    baseline = ConfusionCounts(("a", "b"))
    for a, p in events:
        baseline.update(a, p)
    assert baseline.total == len(events)
    for perm in itertools.islice(itertools.permutations(events), 0, 6):
        counts = ConfusionCounts(("a", "b"))
        for a, p in perm:
            counts.update(a, p)
        np.testing.assert_array_equal(counts.matrix, baseline.matrix)


def test_update_rejects_bad_indices():
    counts = ConfusionCounts(("a", "b"))
    with pytest.raises(ParameterError):
        counts.update(2, 0)
    with pytest.raises(ParameterError):
        counts.update(0, -1)
    with pytest.raises(ParameterError):
        counts.update(True, 0)
    with pytest.raises(ParameterError):
        counts.update(0.0, 1)


def test_merge_adds_cellwise_and_checks_classes():
    left = ConfusionCounts(("a", "b"), [[1, 2], [3, 4]])
    right = ConfusionCounts(("a", "b"), [[10, 0], [0, 10]])
    left.merge(right)
    np.testing.assert_array_equal(left.matrix, [[11, 2], [3, 14]])
    with pytest.raises(ParameterError):
        left.merge(ConfusionCounts(("x", "y")))


def test_counts_constructor_validates():
    with pytest.raises(ParameterError):
        ConfusionCounts(("only",))
    with pytest.raises(ParameterError):
        ConfusionCounts(("a", "a"))
    with pytest.raises(ParameterError):
        ConfusionCounts(("a", "b"), [[1, 2, 3], [4, 5, 6]])
    with pytest.raises(ParameterError):
        ConfusionCounts(("a", "b"), [[-1, 0], [0, 0]])
    with pytest.raises(ParameterError):
        build_report(ConfusionCounts(("a", "b")))


def test_json_view_mirrors_the_report_dict():
    report = build_report(ConfusionCounts(CLASSES, REPORT_COUNTS))
    parsed = json.loads(report_to_json(report))
    assert parsed == report
    assert parsed["matrix"] == report["matrix"]
    assert list(parsed) == ["classes", "accuracy", "total", "macro",
                            "weighted", "matrix"]
