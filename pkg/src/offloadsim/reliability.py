"""Reliability diagrams and expected calibration error over equal-width bins."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .trace import Trace

DEFAULT_BINS = 10
CSV_COLUMNS = ("bin_lower", "bin_upper", "count", "mean_conf", "accuracy")


@dataclass(frozen=True)
class Bin:
    lower: float
    upper: float
    count: int
    mean_conf: Optional[float]
    accuracy: Optional[float]


@dataclass(frozen=True)
class ReliabilityReport:
    """Per-bin confidence/accuracy table plus the ECE it implies.

    Empty bins carry ``count == 0`` and ``None`` for confidence and accuracy.
    """

    num_bins: int
    bins: tuple[Bin, ...]
    ece: float
    n: int

    @property
    def occupied(self) -> list[Bin]:
        return [b for b in self.bins if b.count]

    @property
    def over_confident(self) -> bool:
        """True when every occupied bin has confidence above its accuracy."""
        occ = self.occupied
        return bool(occ) and all(b.mean_conf > b.accuracy for b in occ)

    @property
    def under_confident(self) -> bool:
        occ = self.occupied
        return bool(occ) and all(b.mean_conf < b.accuracy for b in occ)


def assign_bin(conf, num_bins: int = DEFAULT_BINS):
    """Bin index for confidences in [0, 1].

    Bin ``k`` is the interval ``(k/K, (k+1)/K]``; confidence 0 folds into
    bin 0. Works on scalars and arrays.
    """
    c = np.asarray(conf, dtype=float)
    if np.any(~np.isfinite(c)) or np.any(c < 0) or np.any(c > 1):
        raise ValueError("confidence must lie in [0, 1]")
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    idx = np.clip(np.ceil(c * num_bins).astype(np.int64) - 1, 0, num_bins - 1)
    # c * K can round across an edge; re-check against the stored edges k / K
    idx = np.where((idx > 0) & (c <= idx / num_bins), idx - 1, idx)
    idx = np.where((idx < num_bins - 1) & (c > (idx + 1) / num_bins), idx + 1, idx)
    return int(idx) if idx.ndim == 0 else idx


def bin_stats_arrays(confidence, correct, num_bins: int = DEFAULT_BINS) -> ReliabilityReport:
    """Reliability report from parallel arrays of confidences and hit flags."""
    conf = np.asarray(confidence, dtype=float)
    hit = np.asarray(correct, dtype=float)
    n = conf.size
    if n == 0:
        raise ValueError("cannot bin an empty set of predictions")
    k = assign_bin(conf, num_bins)
    bins = []
    for b in range(num_bins):
        sel = k == b
        c = int(sel.sum())
        # exactly rounded sums, so a bin of identical confidences averages to that value
        bins.append(Bin(
            lower=b / num_bins,
            upper=(b + 1) / num_bins,
            count=c,
            mean_conf=math.fsum(conf[sel]) / c if c else None,
            accuracy=math.fsum(hit[sel]) / c if c else None,
        ))
    bins = tuple(bins)
    return ReliabilityReport(num_bins, bins, _ece_from_bins(bins, n), n)


def bin_stats(trace: Trace, num_bins: int = DEFAULT_BINS) -> ReliabilityReport:
    """Bin the trace's top-class confidences and compare with edge accuracy."""
    if len(trace) == 0:
        raise ValueError("cannot compute reliability of an empty trace")
    return bin_stats_arrays(trace.confidence, trace.edge_correct, num_bins)


def _ece_from_bins(bins, n: int) -> float:
    total = 0.0
    for b in bins:
        if b.count:
            total += b.count / n * abs(b.accuracy - b.mean_conf)
    return total


def ece(report: ReliabilityReport) -> float:
    """Count-weighted mean gap between bin accuracy and bin confidence."""
    return _ece_from_bins(report.bins, report.n)


def trace_ece(trace: Trace, num_bins: int = DEFAULT_BINS) -> float:
    return bin_stats(trace, num_bins).ece


# -- CSV ----------------------------------------------------------------------

def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def export_reliability(report: ReliabilityReport) -> list[list[str]]:
    """Rows for CSV output: header, one row per bin, then ``ECE,<value>``."""
    rows = [list(CSV_COLUMNS)]
    for b in report.bins:
        rows.append([_fmt(b.lower), _fmt(b.upper), str(b.count), _fmt(b.mean_conf), _fmt(b.accuracy)])
    rows.append(["ECE", repr(float(report.ece))])
    return rows


def reliability_csv(report: ReliabilityReport) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(export_reliability(report))
    return buf.getvalue()


def parse_reliability_csv(text: str) -> ReliabilityReport:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError("missing or unexpected reliability CSV header")
    if rows[-1][0] != "ECE":
        raise ValueError("missing ECE footer")
    bins = []
    for row in rows[1:-1]:
        lo, hi, count, conf, acc = row
        bins.append(Bin(float(lo), float(hi), int(count),
                        float(conf) if conf else None, float(acc) if acc else None))
    n = sum(b.count for b in bins)
    return ReliabilityReport(len(bins), tuple(bins), float(rows[-1][1]), n)
