"""Prediction traces: the record type, the line-oriented file format, and
the split/mix helpers used to build evaluation sets.

A trace file is newline-delimited JSON. The first line is a header::

    {"meta": {"num_classes": 13, "metadata": {...}}}

and every following line is one record with the keys ``sample_id``,
``object_tag``, ``ground_truth``, ``edge_probs``, ``edge_latency_ms``,
``cloud_pred``, ``cloud_latency_ms`` and optionally ``features``.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SEEN = "seen"
UNSEEN = "unseen"
OBJECT_TAGS = (SEEN, UNSEEN)
DEFAULT_NUM_CLASSES = 13
PROB_SUM_TOL = 1e-6

RECORD_KEYS = (
    "sample_id",
    "object_tag",
    "ground_truth",
    "edge_probs",
    "edge_latency_ms",
    "cloud_pred",
    "cloud_latency_ms",
)


class TraceError(ValueError):
    """Raised when a trace file or trace object is malformed."""


@dataclass(frozen=True)
class PredictionRecord:
    """One inference event seen by the edge/cloud pair."""

    sample_id: str
    object_tag: str
    ground_truth: int
    edge_probs: tuple[float, ...]
    edge_latency_ms: float
    cloud_pred: int
    cloud_latency_ms: float
    features: Optional[tuple[float, ...]] = None

    @property
    def edge_pred(self) -> int:
        return top_confidence(self.edge_probs)[0]

    @property
    def confidence(self) -> float:
        return top_confidence(self.edge_probs)[1]

    @property
    def edge_correct(self) -> bool:
        return self.edge_pred == self.ground_truth

    @property
    def cloud_correct(self) -> bool:
        return self.cloud_pred == self.ground_truth

    def to_dict(self) -> dict:
        d = {
            "sample_id": self.sample_id,
            "object_tag": self.object_tag,
            "ground_truth": self.ground_truth,
            "edge_probs": list(self.edge_probs),
            "edge_latency_ms": self.edge_latency_ms,
            "cloud_pred": self.cloud_pred,
            "cloud_latency_ms": self.cloud_latency_ms,
        }
        if self.features is not None:
            d["features"] = list(self.features)
        return d


@dataclass(frozen=True, eq=False)
class Trace:
    """An ordered, immutable collection of prediction records.

    Column views (``probs``, ``ground_truth``, ...) are numpy arrays built
    lazily and marked read-only.
    """

    records: tuple[PredictionRecord, ...]
    num_classes: int = DEFAULT_NUM_CLASSES
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.records, tuple):
            object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return (
            self.records == other.records
            and self.num_classes == other.num_classes
            and self.metadata == other.metadata
        )

    @cached_property
    def sample_ids(self) -> tuple[str, ...]:
        return tuple(r.sample_id for r in self.records)

    @cached_property
    def probs(self) -> np.ndarray:
        if not self.records:
            return _frozen(np.zeros((0, self.num_classes)))
        return _frozen(np.array([r.edge_probs for r in self.records], dtype=float))

    @cached_property
    def ground_truth(self) -> np.ndarray:
        return _frozen(np.array([r.ground_truth for r in self.records], dtype=np.int64))

    @cached_property
    def cloud_pred(self) -> np.ndarray:
        return _frozen(np.array([r.cloud_pred for r in self.records], dtype=np.int64))

    @cached_property
    def edge_latency(self) -> np.ndarray:
        return _frozen(np.array([r.edge_latency_ms for r in self.records], dtype=float))

    @cached_property
    def cloud_latency(self) -> np.ndarray:
        return _frozen(np.array([r.cloud_latency_ms for r in self.records], dtype=float))

    @cached_property
    def object_tags(self) -> np.ndarray:
        return _frozen(np.array([r.object_tag for r in self.records], dtype=object))

    @cached_property
    def edge_pred(self) -> np.ndarray:
        # np.argmax returns the first maximum, i.e. the lowest class index on ties
        return _frozen(np.argmax(self.probs, axis=1) if len(self) else np.zeros(0, np.int64))

    @cached_property
    def confidence(self) -> np.ndarray:
        if not len(self):
            return _frozen(np.zeros(0))
        return _frozen(self.probs[np.arange(len(self)), self.edge_pred])

    @cached_property
    def edge_correct(self) -> np.ndarray:
        return _frozen(self.edge_pred == self.ground_truth)

    @cached_property
    def cloud_correct(self) -> np.ndarray:
        return _frozen(self.cloud_pred == self.ground_truth)

    @property
    def has_features(self) -> bool:
        return bool(self.records) and all(r.features is not None for r in self.records)

    @cached_property
    def features(self) -> np.ndarray:
        if not self.has_features:
            raise TraceError("trace records do not all carry features")
        dims = {len(r.features) for r in self.records}
        if len(dims) != 1:
            raise TraceError(f"features have mixed dimensions {sorted(dims)}")
        return _frozen(np.array([r.features for r in self.records], dtype=float))

    def with_probs(self, probs: np.ndarray, **metadata) -> "Trace":
        """Return a copy of the trace with every record's ``edge_probs`` replaced."""
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (len(self), self.num_classes):
            raise TraceError(f"probability matrix has shape {probs.shape}, "
                             f"expected {(len(self), self.num_classes)}")
        records = tuple(
            replace(r, edge_probs=tuple(float(v) for v in row))
            for r, row in zip(self.records, probs)
        )
        return Trace(records, self.num_classes, {**self.metadata, **metadata})

    def subset(self, indices: Iterable[int], **metadata) -> "Trace":
        records = tuple(self.records[i] for i in indices)
        return Trace(records, self.num_classes, {**self.metadata, **metadata})


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def top_confidence(probs: Sequence[float]) -> tuple[int, float]:
    """Predicted class and its probability; ties go to the lowest index.

    >>> top_confidence([0.7, 0.2, 0.1])
    (0, 0.7)
    """
    p = np.asarray(probs, dtype=float)
    problem = _prob_vector_problem(p)
    if problem:
        raise TraceError(f"invalid probability vector: {problem}")
    k = int(np.argmax(p))
    return k, float(p[k])


def _prob_vector_problem(p: np.ndarray, num_classes: Optional[int] = None) -> Optional[str]:
    if p.ndim != 1 or p.size == 0:
        return "not a non-empty 1-D vector"
    if num_classes is not None and p.size != num_classes:
        return f"length {p.size} != num_classes {num_classes}"
    if not np.all(np.isfinite(p)):
        return "non-finite entry"
    if np.any(p < 0) or np.any(p > 1):
        return "entry outside [0, 1]"
    s = float(p.sum())
    if abs(s - 1.0) > PROB_SUM_TOL:
        return f"sums to {s!r}"
    return None


def _record_violations(r: PredictionRecord, num_classes: int) -> list[str]:
    out = []
    sid = r.sample_id
    if r.object_tag not in OBJECT_TAGS:
        out.append(f"{sid}: object_tag {r.object_tag!r} not in {OBJECT_TAGS}")
    problem = _prob_vector_problem(np.asarray(r.edge_probs, dtype=float), num_classes)
    if problem:
        out.append(f"{sid}: edge_probs {problem}")
    for name in ("ground_truth", "cloud_pred"):
        v = getattr(r, name)
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or not 0 <= v < num_classes:
            out.append(f"{sid}: {name} {v!r} is not a class index in [0, {num_classes})")
    for name in ("edge_latency_ms", "cloud_latency_ms"):
        v = getattr(r, name)
        if not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
            out.append(f"{sid}: {name} {v!r} must be finite and >= 0")
    return out


def validate(trace: Trace) -> list[str]:
    """List every invariant violation in ``trace``; empty means valid."""
    violations = []
    for r in trace.records:
        violations.extend(_record_violations(r, trace.num_classes))
    dup = [sid for sid, c in Counter(trace.sample_ids).items() if c > 1]
    for sid in dup:
        violations.append(f"duplicate sample_id {sid!r}")
    with_feat = [r for r in trace.records if r.features is not None]
    if with_feat and len(with_feat) != len(trace):
        violations.append(f"features present on {len(with_feat)} of {len(trace)} records")
    dims = {len(r.features) for r in with_feat}
    if len(dims) > 1:
        violations.append(f"features have mixed dimensions {sorted(dims)}")
    return violations


def split_by_tag(trace: Trace, tag: str) -> Trace:
    """Records whose ``object_tag`` equals ``tag``, in original order."""
    if tag not in OBJECT_TAGS:
        raise ValueError(f"tag must be one of {OBJECT_TAGS}, got {tag!r}")
    keep = [i for i, r in enumerate(trace.records) if r.object_tag == tag]
    return trace.subset(keep, split=tag)


def mix_traces(seen: Trace, unseen: Trace, seen_fraction: float, n: int, seed: int) -> Trace:
    """Compose ``n`` records, ``round(n * seen_fraction)`` of them from ``seen``.

    Records are drawn without replacement when a source is large enough and
    with replacement otherwise; the metadata key ``replacement`` records which
    sources needed it. Sampled records are retagged by source and get ids of
    the form ``"<tag>/<original id>"`` (plus ``"/<k>"`` for repeated draws).
    """
    if seen.num_classes != unseen.num_classes:
        raise TraceError(f"class counts differ: {seen.num_classes} vs {unseen.num_classes}")
    if not 0.0 <= seen_fraction <= 1.0:
        raise ValueError("seen_fraction must be in [0, 1]")
    if n < 0:
        raise ValueError("n must be >= 0")
    n_seen = int(round(n * seen_fraction))
    counts = {SEEN: n_seen, UNSEEN: n - n_seen}
    rng = np.random.default_rng(seed)
    picked = []
    replacement = []
    for tag, source in ((SEEN, seen), (UNSEEN, unseen)):
        k = counts[tag]
        if k == 0:
            continue
        if len(source) == 0:
            raise TraceError(f"{tag} source is empty but {k} records were requested")
        with_repl = k > len(source)
        if with_repl:
            replacement.append(tag)
        idx = rng.choice(len(source), size=k, replace=with_repl)
        drawn = Counter()
        for i in idx:
            r = source.records[int(i)]
            drawn[i] += 1
            sid = f"{tag}/{r.sample_id}"
            if drawn[i] > 1:
                sid += f"/{drawn[i] - 1}"
            picked.append(replace(r, sample_id=sid, object_tag=tag))
    order = rng.permutation(len(picked))
    records = tuple(picked[i] for i in order)
    meta = {
        "source": "mix",
        "seen_fraction": seen_fraction,
        "seed": seed,
        "n_seen": counts[SEEN],
        "n_unseen": counts[UNSEEN],
        "replacement": replacement,
    }
    return Trace(records, seen.num_classes, meta)


# -- file format ---------------------------------------------------------------

def write_trace(trace: Trace, path) -> None:
    """Write ``trace`` in the line format; floats round-trip exactly."""
    header = {"meta": {"num_classes": trace.num_classes, "metadata": trace.metadata}}
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(json.dumps(r.to_dict()) for r in trace.records)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def _parse_record(obj, lineno: int) -> PredictionRecord:
    if not isinstance(obj, dict):
        raise TraceError(f"line {lineno}: expected an object")
    missing = [k for k in RECORD_KEYS if k not in obj]
    if missing:
        raise TraceError(f"line {lineno}: missing field(s) {', '.join(missing)}")
    extra = set(obj) - set(RECORD_KEYS) - {"features"}
    if extra:
        raise TraceError(f"line {lineno}: unknown field(s) {', '.join(sorted(extra))}")
    try:
        feats = obj.get("features")
        return PredictionRecord(
            sample_id=str(obj["sample_id"]),
            object_tag=obj["object_tag"],
            ground_truth=obj["ground_truth"],
            edge_probs=tuple(float(v) for v in obj["edge_probs"]),
            edge_latency_ms=float(obj["edge_latency_ms"]),
            cloud_pred=obj["cloud_pred"],
            cloud_latency_ms=float(obj["cloud_latency_ms"]),
            features=None if feats is None else tuple(float(v) for v in feats),
        )
    except (TypeError, ValueError) as exc:
        raise TraceError(f"line {lineno}: {exc}") from None


def load_trace(path) -> Trace:
    """Read a trace file, raising :class:`TraceError` on the first problem.

    Errors name the offending line number and field.
    """
    text = Path(path).read_text()
    lines = text.splitlines()
    num_classes = None
    metadata = {}
    records = []
    first = True
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceError(f"line {lineno}: not valid JSON ({exc.msg})") from None
        if first and isinstance(obj, dict) and "meta" in obj:
            meta = obj["meta"]
            num_classes = int(meta.get("num_classes", DEFAULT_NUM_CLASSES))
            metadata = dict(meta.get("metadata", {}))
            first = False
            continue
        first = False
        rec = _parse_record(obj, lineno)
        if num_classes is None:
            num_classes = len(rec.edge_probs)
        if len(rec.edge_probs) != num_classes:
            raise TraceError(f"line {lineno}: edge_probs has {len(rec.edge_probs)} classes, "
                             f"trace has {num_classes}")
        problems = _record_violations(rec, num_classes)
        if problems:
            raise TraceError(f"line {lineno}: " + "; ".join(p.split(": ", 1)[1] for p in problems))
        records.append(rec)
    trace = Trace(tuple(records), num_classes or DEFAULT_NUM_CLASSES, metadata)
    if not records:
        logger.warning("trace file %s contains no records", path)
    problems = validate(trace)
    if problems:
        raise TraceError("; ".join(problems))
    return trace
