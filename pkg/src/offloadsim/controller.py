"""Threshold offloading policy and its decision-quality metrics.

The policy keeps the edge answer when its confidence is at least the
threshold and asks the cloud otherwise. Decisions are scored against an
"ideal model" that only looks at which model was right: edge when the edge is
right (or both are wrong), cloud when only the cloud is right. "Keep on edge"
is the positive class.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .trace import PredictionRecord, Trace


class ModelChoice(str, enum.Enum):
    EDGE = "E"
    CLOUD = "C"


class DecisionOutcome(str, enum.Enum):
    TP = "TP"
    FP = "FP"
    FN = "FN"
    TN = "TN"


_OUTCOMES = {
    (ModelChoice.EDGE, ModelChoice.EDGE): DecisionOutcome.TP,
    (ModelChoice.EDGE, ModelChoice.CLOUD): DecisionOutcome.FP,
    (ModelChoice.CLOUD, ModelChoice.EDGE): DecisionOutcome.FN,
    (ModelChoice.CLOUD, ModelChoice.CLOUD): DecisionOutcome.TN,
}

METRIC_NAMES = ("precision", "recall", "f1", "specificity", "accuracy")
SWEEP_COLUMNS = ("threshold", "tp", "fp", "fn", "tn") + METRIC_NAMES


def default_grid(step: float = 0.05) -> list[float]:
    """Thresholds 0, step, ..., 1 (21 points for the default step)."""
    k = int(round(1.0 / step))
    return [round(i * step, 10) for i in range(k + 1)]


def decide(confidence: float, threshold: float) -> ModelChoice:
    """Offload strictly below the threshold; equality keeps the edge answer."""
    return ModelChoice.CLOUD if confidence < threshold else ModelChoice.EDGE


def ideal_model(record: PredictionRecord) -> ModelChoice:
    if record.edge_correct:
        return ModelChoice.EDGE
    if record.cloud_correct:
        return ModelChoice.CLOUD
    # both wrong: the faster model wins
    return ModelChoice.EDGE


def outcome(predicted: ModelChoice, ideal: ModelChoice) -> DecisionOutcome:
    return _OUTCOMES[(ModelChoice(predicted), ModelChoice(ideal))]


def offloaded_mask(trace: Trace, threshold: float) -> np.ndarray:
    return trace.confidence < threshold


def ideal_cloud_mask(trace: Trace) -> np.ndarray:
    """True where the ideal model is the cloud (edge wrong, cloud right)."""
    return (~trace.edge_correct) & trace.cloud_correct


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class DecisionMetrics:
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    specificity: Optional[float]
    accuracy: Optional[float]

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in METRIC_NAMES}


def confusion_counts(trace: Trace, threshold: float) -> ConfusionCounts:
    if len(trace) == 0:
        raise ValueError("cannot score decisions on an empty trace")
    edge = ~offloaded_mask(trace, threshold)
    ideal_edge = ~ideal_cloud_mask(trace)
    return ConfusionCounts(
        tp=int(np.sum(edge & ideal_edge)),
        fp=int(np.sum(edge & ~ideal_edge)),
        fn=int(np.sum(~edge & ideal_edge)),
        tn=int(np.sum(~edge & ~ideal_edge)),
    )


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den else None


def metrics(counts: ConfusionCounts) -> DecisionMetrics:
    """Precision, recall, F1, specificity and accuracy; zero denominators give ``None``."""
    c = counts
    p = _ratio(c.tp, c.tp + c.fp)
    r = _ratio(c.tp, c.tp + c.fn)
    if p is None or r is None:
        f1 = None
    else:
        f1 = 2 * p * r / (p + r) if p + r else 0.0
    return DecisionMetrics(
        precision=p,
        recall=r,
        f1=f1,
        specificity=_ratio(c.tn, c.tn + c.fp),
        accuracy=_ratio(c.tp + c.tn, c.n),
    )


@dataclass(frozen=True)
class SweepResult:
    thresholds: tuple[float, ...]
    counts: tuple[ConfusionCounts, ...]
    rows: tuple[DecisionMetrics, ...]
    means: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for th, c, m in zip(self.thresholds, self.counts, self.rows):
            w.writerow([repr(float(th)), c.tp, c.fp, c.fn, c.tn] + [_fmt(v) for v in m.as_dict().values()])
        w.writerow(["mean", "", "", "", ""] + [_fmt(self.means[k]) for k in METRIC_NAMES])
        return buf.getvalue()


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def sweep(trace: Trace, thresholds: Sequence[float]) -> SweepResult:
    """Decision metrics per threshold, plus their means over thresholds.

    A metric that is undefined at some threshold is left out of its mean.
    """
    thresholds = tuple(float(t) for t in thresholds)
    if not thresholds:
        raise ValueError("threshold grid is empty")
    if any(not 0.0 <= t <= 1.0 for t in thresholds):
        raise ValueError("thresholds must lie in [0, 1]")
    counts = tuple(confusion_counts(trace, t) for t in thresholds)
    rows = tuple(metrics(c) for c in counts)
    means = {}
    for name in METRIC_NAMES:
        vals = [getattr(m, name) for m in rows if getattr(m, name) is not None]
        means[name] = math.fsum(vals) / len(vals) if vals else None
    return SweepResult(thresholds, counts, rows, means)
