"""User-facing evaluation: grasp scenarios, upsetness index, latency, Pareto fronts.

Each (record, threshold) pair falls into exactly one scenario:

==  =====================================================  ==================
S1  edge right, and kept or the cloud is right              none
S2  edge wrong, offloaded, cloud right                       late
S3  edge wrong, and kept or the cloud repeats the mistake    incorrect
S4  edge wrong, offloaded, cloud wrong in a different way    late and incorrect
S5  edge right, offloaded, cloud wrong                       wrong override
==  =====================================================  ==================
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .controller import ModelChoice
from .trace import PredictionRecord, Trace


class Scenario(enum.IntEnum):
    S1 = 1
    S2 = 2
    S3 = 3
    S4 = 4
    S5 = 5


DEFAULT_PENALTIES = (0.0, 1.0, 5.0, 6.0, 7.0)
OPERATING_POINT_COLUMNS = ("method", "threshold", "accuracy", "mean_latency_ms", "uii",
                           "deadline_hit_rate", "offload_fraction")
SCENARIO_COLUMNS = ("threshold", "s1", "s2", "s3", "s4", "s5")


@dataclass(frozen=True)
class PenaltyTable:
    s1: float = 0.0
    s2: float = 1.0
    s3: float = 5.0
    s4: float = 6.0
    s5: float = 7.0

    def __post_init__(self):
        if min(self.values) < 0:
            raise ValueError("penalties must be nonnegative")
        if self.s1 != 0:
            raise ValueError("the S1 penalty must be 0")

    @classmethod
    def parse(cls, text: str) -> "PenaltyTable":
        vals = [float(v) for v in text.split(",")]
        if len(vals) != 5:
            raise ValueError("penalties need five comma-separated values for S1..S5")
        return cls(*vals)

    @property
    def values(self) -> tuple[float, ...]:
        return (self.s1, self.s2, self.s3, self.s4, self.s5)

    def scaled(self, factor: float) -> "PenaltyTable":
        return PenaltyTable(*(v * factor for v in self.values))


@dataclass(frozen=True)
class LatencyConfig:
    network_rtt_ms: float = 50.0
    deadline_ms: float = 150.0

    def __post_init__(self):
        if self.network_rtt_ms < 0 or self.deadline_ms < 0:
            raise ValueError("latency settings must be nonnegative")


@dataclass(frozen=True)
class OperatingPoint:
    method: str
    threshold: float
    accuracy: float
    mean_latency_ms: float
    uii: float
    deadline_hit_rate: float
    offload_fraction: float

    def row(self) -> list[str]:
        return [self.method] + [_fmt(getattr(self, k)) for k in OPERATING_POINT_COLUMNS[1:]]


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


# -- scenarios ----------------------------------------------------------------

def classify(edge_right: bool, offloaded: bool, cloud_right: bool, same: bool) -> Scenario:
    """Scenario from the four facts that determine it."""
    if edge_right:
        if not offloaded or cloud_right:
            return Scenario.S1
        return Scenario.S5
    if not offloaded:
        return Scenario.S3
    if cloud_right:
        return Scenario.S2
    return Scenario.S3 if same else Scenario.S4


def scenario(record: PredictionRecord, threshold: float) -> Scenario:
    return classify(
        record.edge_correct,
        record.confidence < threshold,
        record.cloud_correct,
        record.cloud_pred == record.edge_pred,
    )


def scenario_array(trace: Trace, threshold: float) -> np.ndarray:
    """Scenario numbers (1..5) for every record, vectorised."""
    e = trace.edge_correct
    off = trace.confidence < threshold
    c = trace.cloud_correct
    same = trace.cloud_pred == trace.edge_pred
    out = np.where(e, np.where(~off | c, 1, 5),
                   np.where(~off, 3, np.where(c, 2, np.where(same, 3, 4))))
    return out.astype(np.int64)


def scenario_counts(trace: Trace, threshold: float) -> dict:
    counts = np.bincount(scenario_array(trace, threshold), minlength=6)
    return {s: int(counts[s.value]) for s in Scenario}


def scenario_distribution(trace: Trace, thresholds: Sequence[float]) -> list[tuple[float, dict]]:
    return [(float(t), scenario_counts(trace, t)) for t in thresholds]


def scenario_csv(distribution) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCENARIO_COLUMNS)
    for th, counts in distribution:
        w.writerow([repr(float(th))] + [counts[s] for s in Scenario])
    return buf.getvalue()


def uii(trace: Trace, threshold: float, penalties: PenaltyTable = PenaltyTable()) -> float:
    """User upsetness index: mean scenario penalty over the trace."""
    if len(trace) == 0:
        raise ValueError("upsetness of an empty trace is undefined")
    table = np.array((0.0,) + penalties.values)
    return float(np.mean(table[scenario_array(trace, threshold)]))


# -- latency and operating points -----------------------------------------------------

def sample_latency(record: PredictionRecord, decision: ModelChoice,
                   cfg: LatencyConfig = LatencyConfig()) -> float:
    """Edge time, plus round trip and cloud time when offloaded."""
    if ModelChoice(decision) is ModelChoice.EDGE:
        return record.edge_latency_ms
    return record.edge_latency_ms + cfg.network_rtt_ms + record.cloud_latency_ms


def latency_array(trace: Trace, threshold: float, cfg: LatencyConfig = LatencyConfig()) -> np.ndarray:
    off = trace.confidence < threshold
    return trace.edge_latency + np.where(off, cfg.network_rtt_ms + trace.cloud_latency, 0.0)


def enacted_prediction(trace: Trace, threshold: float) -> np.ndarray:
    """The grasp the user finally gets: the cloud answer overrides only when offloaded."""
    off = trace.confidence < threshold
    return np.where(off, trace.cloud_pred, trace.edge_pred)


def aggregate(trace: Trace, threshold: float, cfg: LatencyConfig = LatencyConfig(),
              penalties: PenaltyTable = PenaltyTable(), method: str = "hgn") -> OperatingPoint:
    if len(trace) == 0:
        raise ValueError("cannot aggregate an empty trace")
    s = scenario_array(trace, threshold)
    lat = latency_array(trace, threshold, cfg)
    table = np.array((0.0,) + penalties.values)
    n = len(trace)
    return OperatingPoint(
        method=method,
        threshold=float(threshold),
        accuracy=int(np.sum((s == 1) | (s == 2))) / n,
        mean_latency_ms=float(np.mean(lat)),
        uii=float(np.mean(table[s])),
        deadline_hit_rate=float(np.mean(lat <= cfg.deadline_ms)),
        offload_fraction=float(np.mean(trace.confidence < threshold)),
    )


def operating_points(trace: Trace, thresholds: Sequence[float], cfg: LatencyConfig = LatencyConfig(),
                     penalties: PenaltyTable = PenaltyTable(), method: str = "hgn") -> list[OperatingPoint]:
    return [aggregate(trace, t, cfg, penalties, method) for t in thresholds]


def baseline_points(trace: Trace, cfg: LatencyConfig = LatencyConfig()) -> list[OperatingPoint]:
    """Pure-edge and standalone-cloud reference points.

    The standalone cloud skips the edge pass, so its latency is round trip
    plus cloud time. Neither baseline has a scenario, so ``uii`` is NaN.
    """
    if len(trace) == 0:
        raise ValueError("cannot build baselines from an empty trace")
    edge_lat = trace.edge_latency
    cloud_lat = cfg.network_rtt_ms + trace.cloud_latency
    return [
        OperatingPoint("edge-only", math.nan, float(trace.edge_correct.mean()), float(edge_lat.mean()),
                       math.nan, float(np.mean(edge_lat <= cfg.deadline_ms)), 0.0),
        OperatingPoint("cloud-only", math.nan, float(trace.cloud_correct.mean()), float(cloud_lat.mean()),
                       math.nan, float(np.mean(cloud_lat <= cfg.deadline_ms)), 1.0),
    ]


def dominates(a: OperatingPoint, b: OperatingPoint) -> bool:
    """``a`` is at least as good on both axes and strictly better on one."""
    return (a.accuracy >= b.accuracy and a.mean_latency_ms <= b.mean_latency_ms
            and (a.accuracy > b.accuracy or a.mean_latency_ms < b.mean_latency_ms))


def pareto_mask(points: Sequence[OperatingPoint]) -> list[bool]:
    pts = list(points)
    return [not any(dominates(q, p) for q in pts) for p in pts]


def pareto_front(points: Sequence[OperatingPoint]) -> list[OperatingPoint]:
    """Non-dominated points (max accuracy, min latency), sorted by latency."""
    pts = list(points)
    keep = [p for p, m in zip(pts, pareto_mask(pts)) if m]
    return sorted(keep, key=lambda p: (p.mean_latency_ms, -p.accuracy))


def min_uii_threshold(trace: Trace, grid: Sequence[float], cfg: LatencyConfig = LatencyConfig(),
                      penalties: PenaltyTable = PenaltyTable()) -> tuple[float, float]:
    """Grid threshold with the lowest upsetness; ties go to the lower threshold."""
    if not grid:
        raise ValueError("threshold grid is empty")
    best = None
    for t in sorted(float(g) for g in grid):
        u = uii(trace, t, penalties)
        if best is None or u < best[1]:
            best = (t, u)
    return best


def operating_points_csv(points: Sequence[OperatingPoint], pareto: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = list(OPERATING_POINT_COLUMNS) + (["pareto"] if pareto else [])
    w.writerow(cols)
    marks = pareto_mask(points) if pareto else None
    for i, p in enumerate(points):
        row = p.row()
        if pareto:
            row.append("1" if marks[i] else "0")
        w.writerow(row)
    return buf.getvalue()


def parse_operating_points_csv(text: str) -> list[OperatingPoint]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for r in rows:
        def num(k):
            return float(r[k]) if r.get(k) not in (None, "") else math.nan
        out.append(OperatingPoint(r["method"], num("threshold"), num("accuracy"), num("mean_latency_ms"),
                                  num("uii"), num("deadline_hit_rate"), num("offload_fraction")))
    return out
