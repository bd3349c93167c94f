"""Macro-averaged precision/recall/F1, majority baseline and report rendering."""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import LABELS, POLARITY_ORDER, SentimentLabel
from .errors import ShapeError


@dataclass(frozen=True)
class ConfusionMatrix:
    """3x3 counts, rows = gold, columns = predicted, in ``LABELS`` order."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class MetricsReport:
    per_class: dict[SentimentLabel, ClassScores]
    support: dict[SentimentLabel, int]
    macro_precision: float
    macro_recall: float
    macro_f1: float

    def to_dict(self) -> dict:
        return {
            "macro": {"precision": self.macro_precision, "recall": self.macro_recall, "f1": self.macro_f1},
            "per_class": {
                label.value: {"precision": s.precision, "recall": s.recall, "f1": s.f1, "support": self.support[label]}
                for label, s in self.per_class.items()
            },
        }

    def percent(self) -> tuple[float, float, float]:
        return (100 * self.macro_precision, 100 * self.macro_recall, 100 * self.macro_f1)


def confusion(gold: Sequence[SentimentLabel], predicted: Sequence[SentimentLabel]) -> ConfusionMatrix:
    if len(gold) != len(predicted):
        raise ShapeError(f"{len(gold)} gold labels vs {len(predicted)} predictions")
    if not gold:
        raise ShapeError("cannot build a confusion matrix from empty label lists")
    counts = np.zeros((3, 3), dtype=np.int64)
    for g, p in zip(gold, predicted):
        counts[SentimentLabel(g).index, SentimentLabel(p).index] += 1
    return ConfusionMatrix(counts)


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def macro_prf(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total <= 0:
        raise ShapeError("confusion matrix is empty")
    counts = cm.counts
    per_class = {}
    support = {}
    for i, label in enumerate(LABELS):
        tp = counts[i, i]
        col = counts[:, i].sum()
        row = counts[i, :].sum()
        p = float(tp / col) if col else 0.0
        r = float(tp / row) if row else 0.0
        per_class[label] = ClassScores(p, r, _f1(p, r))
        support[label] = int(row)
    n = len(LABELS)
    return MetricsReport(
        per_class=per_class,
        support=support,
        macro_precision=sum(s.precision for s in per_class.values()) / n,
        macro_recall=sum(s.recall for s in per_class.values()) / n,
        macro_f1=sum(s.f1 for s in per_class.values()) / n,
    )


def evaluate(gold, predicted) -> MetricsReport:
    return macro_prf(confusion(gold, predicted))


def majority_label(labels: Sequence[SentimentLabel]) -> SentimentLabel:
    counts = Counter(SentimentLabel(l) for l in labels)
    # max() keeps the first maximum, so ties fall to the earlier POLARITY_ORDER label.
    return max(POLARITY_ORDER, key=lambda label: counts[label])


def majority_baseline(train_labels: Sequence[SentimentLabel], test_gold: Sequence[SentimentLabel]) -> MetricsReport:
    if not train_labels or not test_gold:
        raise ShapeError("majority baseline needs non-empty train and test labels")
    label = majority_label(train_labels)
    return evaluate(test_gold, [label] * len(test_gold))


def single_class_closed_form(q: float) -> tuple[float, float, float]:
    """Macro (P, R, F1) in percent for predicting one class that makes up
    fraction ``q`` of the gold labels, all three classes present."""
    return (100 * q / 3, 100 / 3, 100 * 2 * q / (3 * (1 + q)))


def fmt_percent(value: float) -> str:
    """Percent with two decimals, round-half-even on the decimal expansion."""
    return str(Decimal(repr(100 * value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN))


def render_report(reports: Mapping[tuple[str, str], MetricsReport], test_sets: Sequence[str] | None = None, row_order: Sequence[str] | None = None) -> str:
    """Plain-text table: one row per scenario, (P, R, F1) per test set."""
    if test_sets is None:
        test_sets = sorted({ts for _, ts in reports})
    rows = list(row_order) if row_order is not None else []
    for scenario, _ in reports:
        if scenario not in rows:
            rows.append(scenario)
    header = ["Train set"] + [f"{ts} {m}" for ts in test_sets for m in ("P", "R", "F1")]
    body = []
    for scenario in rows:
        cells = [scenario]
        for ts in test_sets:
            rep = reports.get((scenario, ts))
            if rep is None:
                cells += ["-", "-", "-"]
            else:
                cells += [fmt_percent(rep.macro_precision), fmt_percent(rep.macro_recall), fmt_percent(rep.macro_f1)]
        body.append(cells)
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    line = lambda cells: "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"
    sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
    return "\n".join([line(header), sep] + [line(r) for r in body]) + "\n"


def report_records(reports: Mapping[tuple[str, str], MetricsReport]) -> list[dict]:
    return [
        {"scenario": scenario, "test_set": ts, **reports[(scenario, ts)].to_dict()}
        for scenario, ts in sorted(reports)
    ]


def write_report(reports: Mapping[tuple[str, str], MetricsReport], out_dir: str | Path, stem: str = "report", **render_kw) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = out_dir / f"{stem}.md"
    table.write_text(render_report(reports, **render_kw), encoding="utf-8")
    structured = out_dir / f"{stem}.json"
    structured.write_text(json.dumps(report_records(reports), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return table, structured


PREDICTION_COLUMNS = ["id", "gold", "predicted", "p_positive", "p_negative", "p_neutral"]


def write_predictions(path: str | Path, ids, gold, probabilities) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    probs = np.asarray(probabilities, dtype=np.float64)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(PREDICTION_COLUMNS)
        for i, g, row in zip(ids, gold, probs):
            pred = LABELS[int(row.argmax())]
            writer.writerow([i, SentimentLabel(g).value, pred.value, *(f"{x:.6f}" for x in row)])
    return path


def read_predictions(path: str | Path) -> tuple[list[SentimentLabel], list[SentimentLabel]]:
    gold, pred = [], []
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh, delimiter="\t"):
            gold.append(SentimentLabel(row["gold"]))
            pred.append(SentimentLabel(row["predicted"]))
    return gold, pred
