"""Evaluation metrics: confusion counts, per-class rates, and reports.

Definitions, with counts tp/tn/fp/fn:

  precision = tp / (tp + fp)        recall = tp / (tp + fn)
  accuracy  = (tp + tn) / total     f1     = 2pr / (p + r)

Any 0/0 ratio is defined as 0. Multi-class scores are one-vs-rest per
class, summarized by a macro (plain) and a weighted (support-proportional)
average; the report also carries the row-normalized confusion matrix.
Reports exist in two faithful views: a JSON-ready dict and a text table;
both show the same numbers, the text view rounded half-up to two decimals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .errors import ParameterError

_HEADERS = ("precision", "recall", "f1-score", "support")


def binary_rates(tp: int, tn: int, fp: int, fn: int) -> tuple[float, float, float, float]:
    """(precision, recall, accuracy, f1) for one binary confusion quadruple."""
    for name, v in (("tp", tp), ("tn", tn), ("fp", fp), ("fn", fn)):
        if v < 0:
            raise ParameterError(f"count {name} must be >= 0, got {v}")
    total = tp + tn + fp + fn
    if total == 0:
        raise ParameterError("all four confusion counts are zero")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    accuracy = (tp + tn) / total
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, accuracy, f1


@dataclass
class ConfusionCounts:
    """A square count matrix: rows are actual classes, columns predictions."""

    class_names: tuple[str, ...]
    matrix: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if len(self.class_names) < 2:
            raise ParameterError(f"need at least two classes, got {self.class_names!r}")
        if len(set(self.class_names)) != len(self.class_names):
            raise ParameterError(f"class names must be unique, got {self.class_names!r}")
        self.class_names = tuple(self.class_names)
        k = len(self.class_names)
        if self.matrix is None:
            self.matrix = np.zeros((k, k), dtype=np.int64)
        else:
            m = np.asarray(self.matrix, dtype=np.int64)
            if m.shape != (k, k):
                raise ParameterError(
                    f"matrix must be {k}x{k} for {k} classes, got shape {m.shape}")
            if np.any(m < 0):
                raise ParameterError("confusion counts must be >= 0")
            self.matrix = m

    def _check_index(self, what: str, index) -> int:
        if not isinstance(index, (int, np.integer)) or isinstance(index, bool):
            raise ParameterError(f"{what} class index must be an int, got {index!r}")
        if not 0 <= index < len(self.class_names):
            raise ParameterError(
                f"{what} class index {index} out of range for "
                f"{len(self.class_names)} classes")
        return int(index)

    def update(self, actual: int, predicted: int) -> None:
        """Record one observation by (actual, predicted) class index."""
        a = self._check_index("actual", actual)
        p = self._check_index("predicted", predicted)
        self.matrix[a, p] += 1

    def merge(self, other: "ConfusionCounts") -> None:
        """Add another tally over the same class list into this one (cell-wise)."""
        if other.class_names != self.class_names:
            raise ParameterError(
                f"cannot merge counts over classes {other.class_names!r} "
                f"into {self.class_names!r}")
        self.matrix += other.matrix

    @property
    def total(self) -> int:
        return int(self.matrix.sum())


def update(counts: ConfusionCounts, actual: int, predicted: int) -> ConfusionCounts:
    """Record one observation and hand the tally back for chaining."""
    counts.update(actual, predicted)
    return counts


def normalize(counts: ConfusionCounts) -> np.ndarray:
    """Row-normalized matrix: each row sums to 1; all-zero rows stay zero."""
    m = counts.matrix.astype(np.float64)
    sums = m.sum(axis=1, keepdims=True)
    return np.divide(m, sums, out=np.zeros_like(m), where=sums > 0)


def build_report(counts: ConfusionCounts) -> dict:
    """Per-class one-vs-rest rates, accuracy, macro/weighted averages, and
    the row-normalized matrix, as a JSON-ready dict of ints and floats."""
    total = counts.total
    if total == 0:
        raise ParameterError("cannot report on an empty confusion matrix")
    m = counts.matrix
    classes = {}
    per_class = []
    supports = []
    for i, name in enumerate(counts.class_names):
        tp = int(m[i, i])
        fn = int(m[i].sum() - tp)
        fp = int(m[:, i].sum() - tp)
        tn = total - tp - fn - fp
        precision, recall, _, f1 = binary_rates(tp, tn, fp, fn)
        support = tp + fn
        classes[name] = {"precision": precision, "recall": recall,
                         "f1": f1, "support": support}
        per_class.append((precision, recall, f1))
        supports.append(support)

    def averaged(weights) -> dict:
        wsum = sum(weights)
        cols = zip(*per_class)
        if wsum == 0:
            p, r, f = 0.0, 0.0, 0.0
        else:
            p, r, f = (sum(v * w for v, w in zip(col, weights)) / wsum for col in cols)
        return {"precision": p, "recall": r, "f1": f, "support": total}

    return {
        "classes": classes,
        "accuracy": int(np.trace(m)) / total,
        "total": total,
        "macro": averaged([1] * len(supports)),
        "weighted": averaged(supports),
        "matrix": [[float(v) for v in row] for row in normalize(counts)],
    }


def _two_decimals(value: float) -> str:
    """Round half-up to two decimal places, e.g. 0.985 -> '0.99'."""
    return str(Decimal(str(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def render_text(report: dict) -> str:
    """The report as a right-aligned text table with two-decimal rates."""
    names = list(report["classes"])
    width = max(len(name) for name in names + ["weighted avg"])
    lines = ["{:>{w}}  ".format("", w=width)
             + "".join(f"{h:>10}" for h in _HEADERS), ""]

    def row(name: str, values, support) -> str:
        cells = "".join(f"{_two_decimals(v):>10}" for v in values)
        return f"{name:>{width}}  {cells}{support:>10}"

    for name in names:
        cls = report["classes"][name]
        lines.append(row(name, (cls["precision"], cls["recall"], cls["f1"]),
                         cls["support"]))
    lines.append("")
    acc = _two_decimals(report["accuracy"])
    lines.append(f"{'accuracy':>{width}}  {'':>10}{'':>10}{acc:>10}{report['total']:>10}")
    for name, key in (("macro avg", "macro"), ("weighted avg", "weighted")):
        avg = report[key]
        lines.append(row(name, (avg["precision"], avg["recall"], avg["f1"]),
                         avg["support"]))
    return "\n".join(lines) + "\n"


def report_to_json(report: dict) -> str:
    """The report as deterministic, human-readable JSON."""
    return json.dumps(report, indent=2, sort_keys=False)
