"""Synthetic prediction traces with controlled accuracy and miscalibration.

The generator draws, per record, whether the edge model is right, a top-class
confidence from a Beta distribution matching that outcome, a residual
probability spread over the other classes, and a cloud prediction from a
conditional correctness table. Probability vectors are sharpened last
(``p**gamma`` renormalised), which is exactly temperature ``1/gamma`` in
log-space and therefore a clean model of an over-confident classifier.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy import optimize, stats

from .trace import SEEN, UNSEEN, PredictionRecord, Trace, mix_traces

Latency = Union[float, tuple[float, float]]

# default latency presets (ms): standalone cloud = 50 rtt + 206 = 256, offloaded path = 20 + 256
EDGE_LATENCY_MS = 20.0
CLOUD_LATENCY_MS = 206.0


def _truncated_mean(a: float, b: float, lower: float) -> float:
    # mean of Beta(a, b) restricted to (lower, 1]
    z0 = stats.beta.sf(lower, a, b)
    z1 = stats.beta.sf(lower, a + 1.0, b)
    return a / (a + b) * z1 / z0


def calibrated_beta_shapes(accuracy: float, concentration: float = 4.0, lower: float = 0.0):
    """Beta shapes that make the top-class confidence calibrated.

    Confidences live on ``(lower, 1]``. Let ``g`` be Beta(a, b) restricted to
    that interval, with ``a + b = concentration`` and ``a`` chosen so the mean
    of ``g`` equals ``accuracy``. Drawing confidence from Beta(a+1, b) for
    correct records and Beta(a, b+1) for incorrect ones (both restricted the
    same way) then gives ``P(correct | conf) = conf`` when correctness itself
    is Bernoulli(accuracy).
    """
    if not lower < accuracy < 1.0:
        raise ValueError(f"accuracy must lie strictly between {lower} and 1")
    if lower <= 0.0:
        m = accuracy
    else:
        def gap(m):
            return _truncated_mean(m * concentration, (1 - m) * concentration, lower) - accuracy
        eps = 1e-6
        # accuracies close to the floor need a more peaked Beta to be reachable
        while gap(eps) > 0 and concentration < 1e6:
            concentration *= 2.0
        m = optimize.brentq(gap, eps, 1 - eps, xtol=1e-14)
    a = m * concentration
    b = (1.0 - m) * concentration
    return (a + 1.0, b), (a, b + 1.0)


@dataclass(frozen=True)
class SynthParams:
    n: int
    num_classes: int = 13
    edge_acc: float = 0.5
    cloud_acc: float = 0.5
    # None means cloud correctness is independent of edge correctness
    cloud_given_edge_wrong: Optional[float] = None
    conf_correct: Optional[tuple[float, float]] = None
    conf_incorrect: Optional[tuple[float, float]] = None
    overconfidence_sharpen: float = 1.0
    edge_latency_ms: Latency = EDGE_LATENCY_MS
    cloud_latency_ms: Latency = CLOUD_LATENCY_MS
    unseen_fraction: float = 0.0
    same_misprediction_rate: float = 0.5
    feature_dim: int = 0
    seed: int = 0
    id_prefix: str = "s"

    def check(self) -> None:
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        for name in ("edge_acc", "cloud_acc", "unseen_fraction", "same_misprediction_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.cloud_given_edge_wrong is not None and not 0.0 <= self.cloud_given_edge_wrong <= 1.0:
            raise ValueError("cloud_given_edge_wrong must be in [0, 1]")
        p = self.cloud_given_edge_right()
        if not -1e-12 <= p <= 1 + 1e-12:
            raise ValueError(
                f"cloud_acc={self.cloud_acc} is unreachable with edge_acc={self.edge_acc} and "
                f"cloud_given_edge_wrong={self.cloud_given_edge_wrong} (implies P(cloud right | edge right)={p:.4f})")
        for name in ("conf_correct", "conf_incorrect"):
            shapes = getattr(self, name)
            if shapes is not None and (len(shapes) != 2 or min(shapes) <= 0):
                raise ValueError(f"{name} must be two positive Beta shapes")
        if self.overconfidence_sharpen < 1.0:
            raise ValueError("overconfidence_sharpen must be >= 1")
        for name in ("edge_latency_ms", "cloud_latency_ms"):
            v = getattr(self, name)
            vals = v if isinstance(v, tuple) else (v,)
            if any(x < 0 or not np.isfinite(x) for x in vals):
                raise ValueError(f"{name} must be finite and >= 0")
        if self.feature_dim < 0:
            raise ValueError("feature_dim must be >= 0")

    def cloud_given_edge_right(self) -> float:
        if self.cloud_given_edge_wrong is None:
            return self.cloud_acc
        if self.edge_acc == 0.0:
            return self.cloud_acc
        return (self.cloud_acc - (1.0 - self.edge_acc) * self.cloud_given_edge_wrong) / self.edge_acc

    def beta_shapes(self):
        if self.conf_correct is not None and self.conf_incorrect is not None:
            return self.conf_correct, self.conf_incorrect
        lower = 1.0 / self.num_classes
        acc = min(max(self.edge_acc, lower + 1e-3), 1 - 1e-3)
        good, bad = calibrated_beta_shapes(acc, lower=lower)
        return self.conf_correct or good, self.conf_incorrect or bad


def _truncated_beta(rng, shapes, lower: float, size: int) -> np.ndarray:
    # inverse-CDF draw from Beta restricted to (lower, 1]
    a, b = shapes
    lo = stats.beta.cdf(lower, a, b)
    u = rng.random(size)
    x = stats.beta.ppf(lo + u * (1.0 - lo), a, b)
    if lo >= 1.0:
        x = np.full(size, 1.0)
    return np.clip(np.nan_to_num(x, nan=1.0), np.nextafter(lower, 1.0), 1.0)


def _latency(rng, spec: Latency, size: int) -> np.ndarray:
    if isinstance(spec, tuple):
        mean, jitter = spec
        return np.maximum(rng.normal(mean, jitter, size), 0.0)
    return np.full(size, float(spec))


def generate(params: SynthParams) -> Trace:
    """Draw a trace according to ``params``; deterministic in ``params.seed``."""
    params.check()
    n, C = params.n, params.num_classes
    rng = np.random.default_rng(params.seed)
    good_shapes, bad_shapes = params.beta_shapes()

    edge_ok = rng.random(n) < params.edge_acc
    conf = np.empty(n)
    # the top entry must beat a uniform residual, hence the 1/C floor
    conf[edge_ok] = _truncated_beta(rng, good_shapes, 1.0 / C, int(edge_ok.sum()))
    conf[~edge_ok] = _truncated_beta(rng, bad_shapes, 1.0 / C, int((~edge_ok).sum()))

    pred = rng.integers(0, C, size=n)
    resid = rng.dirichlet(np.ones(C - 1), size=n) if C > 2 else np.ones((n, 1))
    # pull the residual toward uniform wherever it would overtake the top entry
    uni = 1.0 / (C - 1)
    peak = resid.max(axis=1)
    ratio = conf / np.maximum(1.0 - conf, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(peak * 1.0 > ratio, 0.99 * (ratio - uni) / (peak - uni), 1.0)
    lam = np.clip(np.nan_to_num(lam, nan=1.0), 0.0, 1.0)
    resid = lam[:, None] * resid + (1.0 - lam[:, None]) * uni

    # columns of the other classes, in increasing class order
    others = np.array([[c for c in range(C) if c != k] for k in range(C)])[pred]
    probs = np.zeros((n, C))
    probs[np.arange(n), pred] = conf
    np.put_along_axis(probs, others, (1.0 - conf)[:, None] * resid, axis=1)

    # wrong records: the truth is drawn from the residual, so the whole vector is calibrated
    u = rng.random(n)
    pick = (np.cumsum(resid, axis=1) < u[:, None]).sum(axis=1)
    pick = np.minimum(pick, C - 2)
    truth = np.where(edge_ok, pred, others[np.arange(n), pick])

    gamma = params.overconfidence_sharpen
    if gamma != 1.0:
        probs = probs ** gamma
    probs /= probs.sum(axis=1, keepdims=True)

    p_cloud = np.where(edge_ok, params.cloud_given_edge_right(),
                       params.cloud_acc if params.cloud_given_edge_wrong is None
                       else params.cloud_given_edge_wrong)
    cloud_ok = rng.random(n) < p_cloud
    same = (~edge_ok) & (rng.random(n) < params.same_misprediction_rate)
    # a wrong cloud answer that differs from both truth and the edge prediction
    alt = rng.integers(0, C, size=n)
    cloud = np.empty(n, dtype=np.int64)
    for i in range(n):
        if cloud_ok[i]:
            cloud[i] = truth[i]
            continue
        banned = {int(truth[i]), int(pred[i])}
        if same[i] or len(banned) == C:
            cloud[i] = pred[i]
            continue
        choices = [c for c in range(C) if c not in banned]
        cloud[i] = choices[int(alt[i]) % len(choices)]

    unseen = rng.random(n) < params.unseen_fraction
    edge_lat = _latency(rng, params.edge_latency_ms, n)
    cloud_lat = _latency(rng, params.cloud_latency_ms, n)
    feats = rng.normal(size=(n, params.feature_dim)) if params.feature_dim else None

    width = max(6, len(str(max(n - 1, 0))))
    records = tuple(
        PredictionRecord(
            sample_id=f"{params.id_prefix}{i:0{width}d}",
            object_tag=UNSEEN if unseen[i] else SEEN,
            ground_truth=int(truth[i]),
            edge_probs=tuple(probs[i].tolist()),
            edge_latency_ms=float(edge_lat[i]),
            cloud_pred=int(cloud[i]),
            cloud_latency_ms=float(cloud_lat[i]),
            features=None if feats is None else tuple(feats[i].tolist()),
        )
        for i in range(n)
    )
    meta = {"source": "synth", "seed": params.seed, "params": _jsonable(asdict(params))}
    return Trace(records, C, meta)


def _jsonable(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def marginals(trace: Trace) -> dict:
    """Empirical rates that :class:`SynthParams` controls."""
    n = len(trace)
    if n == 0:
        return {"n": 0}
    wrong = ~trace.edge_correct
    return {
        "n": n,
        "edge_acc": float(trace.edge_correct.mean()),
        "cloud_acc": float(trace.cloud_correct.mean()),
        "cloud_given_edge_wrong": float(trace.cloud_correct[wrong].mean()) if wrong.any() else None,
        "unseen_fraction": float(np.mean(trace.object_tags == UNSEEN)),
        "mean_confidence": float(trace.confidence.mean()),
    }


# -- presets ------------------------------------------------------------------

@dataclass(frozen=True)
class MixPreset:
    seen: SynthParams
    unseen: SynthParams
    seen_fraction: float = 0.8


def make_paperlike_presets(sharpen: float = 2.0) -> dict:
    """Presets shaped after the reported accuracies.

    ``unseen-only``: edge 36.7 %, cloud 50.2 %, every record unseen.
    ``seen-only``: edge 80.3 %, cloud 88.4 %, every record seen.
    ``mix-80-20``: the two composed 80/20.
    All presets are over-confident by ``sharpen`` unless it is 1.
    """
    unseen = SynthParams(n=0, edge_acc=0.367, cloud_acc=0.502,
                         overconfidence_sharpen=sharpen, unseen_fraction=1.0, id_prefix="u")
    seen = SynthParams(n=0, edge_acc=0.803, cloud_acc=0.884,
                       overconfidence_sharpen=sharpen, unseen_fraction=0.0, id_prefix="s")
    return {
        "unseen-only": unseen,
        "seen-only": seen,
        "mix-80-20": MixPreset(seen=seen, unseen=unseen, seen_fraction=0.8),
    }


PRESET_NAMES = ("unseen-only", "seen-only", "mix-80-20")


def generate_preset(name: str, n: int, seed: int = 0, seen_fraction: Optional[float] = None,
                    sharpen: float = 2.0, **overrides) -> Trace:
    """Generate ``n`` records from a named preset."""
    presets = make_paperlike_presets(sharpen)
    if name not in presets:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    preset = presets[name]
    if isinstance(preset, MixPreset):
        frac = preset.seen_fraction if seen_fraction is None else seen_fraction
        n_seen = int(round(n * frac))
        seen = generate(replace(preset.seen, n=n_seen, seed=seed, **overrides))
        unseen = generate(replace(preset.unseen, n=n - n_seen, seed=seed + 1, **overrides))
        trace = mix_traces(seen, unseen, frac, n, seed)
        return Trace(trace.records, trace.num_classes, {**trace.metadata, "preset": name})
    trace = generate(replace(preset, n=n, seed=seed, **overrides))
    return Trace(trace.records, trace.num_classes, {**trace.metadata, "preset": name})
