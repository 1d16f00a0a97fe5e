"""Pseudo-label quality statistics against ground truth.

Accuracy is precision-style: among points predicted as class c, the fraction
whose ground truth is c. Ground-truth IGNORE points are excluded from every
count. Coverage (fraction of points carrying any label) is reported separately
as the density measure.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import DimensionMismatch, ZeroBaseline
from .types import IGNORE, LabelVector


@dataclass(frozen=True)
class LabelStats:
    """Counts and derived ratios for one prediction/ground-truth pair.

    ``per_class_accuracy[c]`` is None when class c was never predicted; such
    classes are excluded from the macro average. ``avg_accuracy_defined`` is
    False when *no* class was ever predicted (the average is then reported
    as 0.0).
    """

    num_classes: int
    predicted_counts: tuple[int, ...]
    correct_counts: tuple[int, ...]
    gt_valid: int
    total_predicted: int
    total_correct: int
    coverage: float

    @property
    def per_class_accuracy(self) -> dict[int, Optional[float]]:
        return {
            c: (self.correct_counts[c] / self.predicted_counts[c]
                if self.predicted_counts[c] else None)
            for c in range(self.num_classes)
        }

    @property
    def avg_accuracy_defined(self) -> bool:
        return any(n > 0 for n in self.predicted_counts)

    @property
    def avg_accuracy(self) -> float:
        accs = [a for a in self.per_class_accuracy.values() if a is not None]
        if not accs:
            return 0.0
        return sum(accs) / len(accs)

    @property
    def micro_accuracy(self) -> float:
        if self.total_predicted == 0:
            return 0.0
        return self.total_correct / self.total_predicted

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "per_class_accuracy": {str(c): a for c, a in self.per_class_accuracy.items()},
            "avg_accuracy": self.avg_accuracy,
            "avg_accuracy_defined": self.avg_accuracy_defined,
            "micro_accuracy": self.micro_accuracy,
            "total_correct": self.total_correct,
            "total_predicted": self.total_predicted,
            "coverage": self.coverage,
        }


def compute_stats(pred: LabelVector, gt: LabelVector) -> LabelStats:
    """Per-class and aggregate statistics; gt IGNORE points drop out entirely."""
    if len(pred) != len(gt):
        raise DimensionMismatch(
            f"prediction has {len(pred)} entries, ground truth has {len(gt)}"
        )
    if pred.num_classes != gt.num_classes:
        raise DimensionMismatch(
            f"prediction has {pred.num_classes} classes, ground truth has {gt.num_classes}"
        )
    C = pred.num_classes
    keep = gt.values != IGNORE
    p = pred.values[keep]
    g = gt.values[keep]
    predicted = p != IGNORE

    predicted_counts = []
    correct_counts = []
    for c in range(C):
        pc = p == c
        predicted_counts.append(int(pc.sum()))
        correct_counts.append(int((pc & (g == c)).sum()))

    gt_valid = int(keep.sum())
    total_predicted = int(predicted.sum())
    coverage = total_predicted / gt_valid if gt_valid else 0.0
    return LabelStats(
        num_classes=C,
        predicted_counts=tuple(predicted_counts),
        correct_counts=tuple(correct_counts),
        gt_valid=gt_valid,
        total_predicted=total_predicted,
        total_correct=sum(correct_counts),
        coverage=coverage,
    )


def compute_increment(before: LabelStats, after: LabelStats) -> float:
    """Percent growth of the correct-label count relative to the baseline."""
    if before.total_correct == 0:
        raise ZeroBaseline("increment is undefined against zero correct baseline labels")
    return 100.0 * (after.total_correct - before.total_correct) / before.total_correct


def aggregate_stats(parts: Sequence[LabelStats]) -> LabelStats:
    """Merge per-scene stats by summing counts (associative, order-free)."""
    if not parts:
        raise ZeroBaseline("cannot aggregate zero stats")
    C = parts[0].num_classes
    if any(s.num_classes != C for s in parts):
        raise DimensionMismatch("cannot aggregate stats over different class counts")
    predicted = tuple(sum(s.predicted_counts[c] for s in parts) for c in range(C))
    correct = tuple(sum(s.correct_counts[c] for s in parts) for c in range(C))
    gt_valid = sum(s.gt_valid for s in parts)
    total_predicted = sum(s.total_predicted for s in parts)
    return LabelStats(
        num_classes=C,
        predicted_counts=predicted,
        correct_counts=correct,
        gt_valid=gt_valid,
        total_predicted=total_predicted,
        total_correct=sum(correct),
        coverage=total_predicted / gt_valid if gt_valid else 0.0,
    )


def _pct(x: Optional[float]) -> str:
    return "   n/a" if x is None else f"{100.0 * x:6.2f}"


def format_stats_table(
    rows: Sequence[tuple[str, LabelStats, Optional[float]]],
    num_classes: int,
) -> str:
    """Human table: one row per labeled run, per-class acc / avg acc / coverage / inc."""
    name_w = max([len(name) for name, _, _ in rows] + [len("run")])
    header = (
        f"{'run':<{name_w}}  "
        + "  ".join(f"acc[{c}]" for c in range(num_classes))
        + "  avg_acc  coverage  total_inc"
    )
    lines = [header, "-" * len(header)]
    for name, stats, increment in rows:
        cells = "  ".join(f"{_pct(stats.per_class_accuracy[c]):>6}" for c in range(num_classes))
        inc = "        -" if increment is None else f"{increment:+8.2f}%"
        lines.append(
            f"{name:<{name_w}}  {cells}  {_pct(stats.avg_accuracy):>7}  "
            f"{_pct(stats.coverage):>8}  {inc}"
        )
    return "\n".join(lines)
