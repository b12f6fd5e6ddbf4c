"""Post-hoc confidence calibration of edge-model probabilities.

Traces store probabilities, so every transform works on ``ln(max(p, 1e-12))``.
For softmax outputs this differs from the logits by a per-sample constant,
which temperature scaling ignores (softmax is shift-invariant) and the
Dirichlet bias absorbs.

Variants
--------
Identity, Temperature, Dirichlet, DensityAware, HistogramBinning
    Fitted models; all immutable.
fit_temperature, fit_dirichlet, fit_dac, fit_histogram_binning
    Fitting routines returning ``(model, FitReport)``.
apply_model
    Apply any fitted model to a probability matrix.
calibrate_trace
    Split a trace, fit on one part, transform the other.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import log_softmax, softmax

from .reliability import DEFAULT_BINS, assign_bin, bin_stats_arrays
from .trace import Trace

PROB_FLOOR = 1e-12
T_MIN, T_MAX = 0.05, 20.0
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# -- models -------------------------------------------------------------------

@dataclass(frozen=True)
class Identity:
    name = "identity"


@dataclass(frozen=True)
class Temperature:
    T: float
    name = "ts"

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("temperature must be > 0")


@dataclass(frozen=True, eq=False)
class Dirichlet:
    W: np.ndarray
    b: np.ndarray
    lam: float
    name = "dc"

    @classmethod
    def identity(cls, num_classes: int, lam: float = 0.0) -> "Dirichlet":
        return cls(np.eye(num_classes), np.zeros(num_classes), lam)


@dataclass(frozen=True, eq=False)
class DensityAware:
    T0: float
    w: float
    k: int
    reference: np.ndarray
    name = "dac"

    def __post_init__(self):
        object.__setattr__(self, "_tree", cKDTree(self.reference))

    def density(self, features) -> np.ndarray:
        """Mean distance to the ``k`` nearest reference points."""
        x = np.atleast_2d(np.asarray(features, dtype=float))
        if x.shape[1] != self.reference.shape[1]:
            raise ValueError(f"feature dimension {x.shape[1]} does not match "
                             f"reference dimension {self.reference.shape[1]}")
        return _knn_mean_distance(self._tree, x, self.k, exclude_self=False)

    def temperature(self, features) -> np.ndarray:
        return np.clip(self.T0 + self.w * self.density(features), T_MIN, T_MAX)


@dataclass(frozen=True, eq=False)
class HistogramBinning:
    num_bins: int
    bin_accuracy: np.ndarray
    name = "hist"

    def __post_init__(self):
        acc = np.asarray(self.bin_accuracy, dtype=float)
        if acc.shape != (self.num_bins,) or np.any(acc < 0) or np.any(acc > 1):
            raise ValueError("need one accuracy in [0, 1] per bin")


CalibrationModel = Union[Identity, Temperature, Dirichlet, DensityAware, HistogramBinning]


@dataclass
class FitReport:
    method: str
    nll: float
    pre_ece: float
    post_ece: float
    iterations: int
    converged: bool
    notes: list = field(default_factory=list)
    eval_pre_ece: Optional[float] = None
    eval_post_ece: Optional[float] = None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


# -- shared numerics -------------------------------------------------------------

def log_probs(probs) -> np.ndarray:
    return np.log(np.maximum(np.asarray(probs, dtype=float), PROB_FLOOR))


def nll_probs(probs, labels) -> float:
    p = np.asarray(probs, dtype=float)
    y = np.asarray(labels)
    if p.shape[0] == 0:
        raise ValueError("negative log-likelihood of an empty set is undefined")
    picked = np.maximum(p[np.arange(p.shape[0]), y], PROB_FLOOR)
    return float(-np.mean(np.log(picked)))


def nll(trace: Trace) -> float:
    """Mean ``-ln p[truth]`` over the trace, with ``p`` floored at 1e-12."""
    if len(trace) == 0:
        raise ValueError("negative log-likelihood of an empty trace is undefined")
    return nll_probs(trace.probs, trace.ground_truth)


def _scaled_nll(z, y, T) -> float:
    # T may be a scalar or a per-row vector
    T = np.asarray(T, dtype=float)
    if T.ndim:
        T = T[:, None]
    ls = log_softmax(z / T, axis=1)
    return float(-np.mean(ls[np.arange(z.shape[0]), y]))


def golden_section(f, lo: float, hi: float, tol: float = 1e-4, max_iter: int = 200):
    """Minimise a unimodal ``f`` on ``[lo, hi]``.

    Returns ``(x, f(x), iterations, converged)``; converged means the bracket
    shrank below ``tol``.
    """
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while b - a >= tol and it < max_iter:
        it += 1
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    # endpoints are candidates too: boundary optima are common for degenerate data
    cands = [(fc, c), (fd, d), (f(lo), lo), (f(hi), hi)]
    fx, x = min(cands, key=lambda t: t[0])
    return x, fx, it, (b - a) < tol


def _ece(probs, labels, num_bins=DEFAULT_BINS) -> float:
    p = np.asarray(probs)
    pred = np.argmax(p, axis=1)
    conf = p[np.arange(p.shape[0]), pred]
    return bin_stats_arrays(np.clip(conf, 0.0, 1.0), pred == np.asarray(labels), num_bins).ece


# -- temperature scaling ------------------------------------------------------------

def apply_temperature(model: Temperature, probs) -> np.ndarray:
    """``softmax(ln(max(p, 1e-12)) / T)`` row-wise."""
    z = log_probs(probs)
    return softmax(z / model.T, axis=-1)


def fit_temperature_arrays(probs, labels, tol: float = 1e-4):
    p = np.asarray(probs, dtype=float)
    y = np.asarray(labels)
    if p.shape[0] == 0:
        raise ValueError("cannot fit a temperature on an empty trace")
    z = log_probs(p)
    T, f, it, conv = golden_section(lambda t: _scaled_nll(z, y, t), T_MIN, T_MAX, tol)
    model = Temperature(float(T))
    notes = []
    if min(T - T_MIN, T_MAX - T) < tol:
        notes.append("temperature at search boundary")
    report = FitReport("ts", f, _ece(p, y), _ece(apply_temperature(model, p), y), it, conv, notes)
    return model, report


def fit_temperature(cal: Trace, tol: float = 1e-4):
    """Single temperature minimising NLL, by golden-section search on [0.05, 20]."""
    return fit_temperature_arrays(cal.probs, cal.ground_truth, tol)


# -- Dirichlet calibration --------------------------------------------------------

def apply_dirichlet(model: Dirichlet, probs) -> np.ndarray:
    """``softmax(W ln(max(p, 1e-12)) + b)`` row-wise."""
    z = log_probs(probs)
    return softmax(z @ model.W.T + model.b, axis=-1)


def dirichlet_objective(W, b, z, y, lam: float = 0.0):
    """Regularised NLL and its gradients with respect to ``W`` and ``b``.

    The penalty is ``lam * (mean of squared off-diagonal W + mean of squared b)``;
    the diagonal of ``W`` is left free.
    """
    n, C = z.shape
    logits = z @ W.T + b
    ls = log_softmax(logits, axis=1)
    loss = -np.mean(ls[np.arange(n), y])
    q = np.exp(ls)
    q[np.arange(n), y] -= 1.0
    q /= n
    gW = q.T @ z
    gb = q.sum(axis=0)
    if lam:
        off = ~np.eye(C, dtype=bool)
        n_off = max(C * C - C, 1)
        loss += lam * (np.sum(W[off] ** 2) / n_off + np.mean(b ** 2))
        gW = gW + lam * 2.0 * np.where(off, W, 0.0) / n_off
        gb = gb + lam * 2.0 * b / C
    return float(loss), gW, gb


def fit_dirichlet_arrays(probs, labels, lam: float = 1e-3, step: float = 1.0,
                         max_iter: int = 2000, rel_tol: float = 1e-6):
    p = np.asarray(probs, dtype=float)
    y = np.asarray(labels)
    if p.shape[0] == 0:
        raise ValueError("cannot fit Dirichlet calibration on an empty trace")
    C = p.shape[1]
    z = log_probs(p)
    W, b = np.eye(C), np.zeros(C)
    loss, gW, gb = dirichlet_objective(W, b, z, y, lam)
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        g2 = float(np.sum(gW ** 2) + np.sum(gb ** 2))
        if g2 == 0.0:
            converged = True
            break
        # Armijo backtracking from a fixed initial step
        t = step
        while True:
            W_new, b_new = W - t * gW, b - t * gb
            new_loss, nW, nb = dirichlet_objective(W_new, b_new, z, y, lam)
            if new_loss <= loss - 0.5 * t * g2 or t < 1e-12:
                break
            t *= 0.5
        if new_loss > loss:
            converged = True
            break
        improvement = (loss - new_loss) / max(abs(loss), 1e-300)
        W, b, loss, gW, gb = W_new, b_new, new_loss, nW, nb
        if improvement < rel_tol:
            converged = True
            break
    model = Dirichlet(W, b, lam)
    post = apply_dirichlet(model, p)
    report = FitReport("dc", nll_probs(post, y), _ece(p, y), _ece(post, y), it, converged)
    return model, report


def fit_dirichlet(cal: Trace, lam: float = 1e-3, **kwargs):
    """Fit ``(W, b)`` by gradient descent from the identity map."""
    return fit_dirichlet_arrays(cal.probs, cal.ground_truth, lam, **kwargs)


# -- density-aware calibration ------------------------------------------------------

def _knn_mean_distance(tree: cKDTree, x: np.ndarray, k: int, exclude_self: bool) -> np.ndarray:
    kk = k + 1 if exclude_self else k
    d, _ = tree.query(x, k=kk)
    d = np.asarray(d).reshape(x.shape[0], kk)
    if exclude_self:
        # the query point itself sits at distance 0 in the first column
        d = d[:, 1:]
    return d.mean(axis=1)


def apply_dac(model: DensityAware, probs, features) -> np.ndarray:
    """Temperature scaling with a per-sample temperature ``T0 + w * density``."""
    z = log_probs(probs)
    T = model.temperature(features)
    if z.ndim == 1:
        return softmax(z / T[0])
    return softmax(z / T[:, None], axis=1)


def fit_dac(cal: Trace, k: int = 10, fit_w: bool = True, tol: float = 1e-4,
            rel_tol: float = 1e-5, max_rounds: int = 50):
    """Fit ``T(x) = clip(T0 + w * s(x), 0.05, 20)``.

    ``s(x)`` is the mean Euclidean distance from ``x`` to its ``k`` nearest
    calibration features, excluding itself. ``T0`` and ``w`` are tuned by
    alternating golden-section searches. With ``fit_w=False`` the slope stays
    at 0 and the fit coincides with :func:`fit_temperature`.
    """
    if len(cal) == 0:
        raise ValueError("cannot fit density-aware calibration on an empty trace")
    if not cal.has_features:
        raise ValueError("density-aware calibration needs a 'features' field on every record")
    if k >= len(cal):
        raise ValueError(f"k={k} must be smaller than the calibration set size {len(cal)}")
    if k < 1:
        raise ValueError("k must be >= 1")
    feats = np.array(cal.features)
    y = cal.ground_truth
    z = log_probs(cal.probs)
    s = _knn_mean_distance(cKDTree(feats), feats, k, exclude_self=True)

    def loss(T0, w):
        return _scaled_nll(z, y, np.clip(T0 + w * s, T_MIN, T_MAX))

    notes = []
    T0, f, it, conv = golden_section(lambda t: loss(t, 0.0), T_MIN, T_MAX, tol)
    w = 0.0
    s_span = float(s.max() - s.min())
    if fit_w and s_span <= 1e-12:
        notes.append("density is constant; slope w is unidentifiable and kept at 0")
    elif fit_w:
        # w range: enough to sweep the whole temperature interval across observed densities
        w_lim = (T_MAX - T_MIN) / max(float(s.max()), 1e-12)
        conv = False
        for rounds in range(1, max_rounds + 1):
            w_new, _, i1, _ = golden_section(lambda v: loss(T0, v), -w_lim, w_lim, tol * w_lim)
            T0_new, f_new, i2, _ = golden_section(lambda t: loss(t, w_new), T_MIN, T_MAX, tol)
            it += i1 + i2
            if f_new > f:
                conv = True
                break
            gain = (f - f_new) / max(abs(f), 1e-300)
            T0, w, f = T0_new, w_new, f_new
            if gain < rel_tol:
                conv = True
                break
    model = DensityAware(float(T0), float(w), k, feats)
    post = softmax(z / np.clip(T0 + w * s, T_MIN, T_MAX)[:, None], axis=1)
    report = FitReport("dac", loss(T0, w), _ece(cal.probs, y), _ece(post, y), it, conv, notes)
    return model, report


# -- histogram binning -----------------------------------------------------------------

def fit_histogram_binning(cal: Trace, num_bins: int = DEFAULT_BINS):
    """Top-label binning: each bin's confidence becomes its empirical accuracy.

    Empty bins keep their midpoint.
    """
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    if len(cal) == 0:
        raise ValueError("cannot fit histogram binning on an empty trace")
    report = bin_stats_arrays(cal.confidence, cal.edge_correct, num_bins)
    acc = np.array([b.accuracy if b.count else (b.lower + b.upper) / 2 for b in report.bins])
    model = HistogramBinning(num_bins, acc)
    post = apply_histogram_binning(model, cal.probs)
    y = cal.ground_truth
    fit = FitReport("hist", nll_probs(post, y), report.ece, _ece(post, y), 1, True)
    return model, fit


def apply_histogram_binning(model: HistogramBinning, probs) -> np.ndarray:
    """Replace the top confidence by its bin's accuracy and rescale the rest.

    The other entries are rescaled proportionally and, when one of them would
    overtake the new top entry, pulled toward uniform so the predicted class
    never changes. Remapped values below ``1/C`` are raised to just above it,
    the smallest top entry a valid vector can carry without a tie.
    """
    p = np.atleast_2d(np.asarray(probs, dtype=float))
    n, C = p.shape
    rows = np.arange(n)
    pred = np.argmax(p, axis=1)
    conf = p[rows, pred]
    r = model.bin_accuracy[assign_bin(np.clip(conf, 0.0, 1.0), model.num_bins)]
    if C == 1:
        return np.ones_like(p)
    floor = np.nextafter(1.0 / C, 1.0) + 1e-9
    r = np.maximum(r, floor)

    rest = p.copy()
    rest[rows, pred] = 0.0
    rest_sum = rest.sum(axis=1)
    share = np.where(rest_sum[:, None] > 0, rest / np.where(rest_sum > 0, rest_sum, 1.0)[:, None],
                     1.0 / (C - 1))
    share[rows, pred] = 0.0
    uni = 1.0 / (C - 1)
    peak = share.max(axis=1)
    ratio = r / np.maximum(1.0 - r, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(peak > ratio, 0.99 * (ratio - uni) / (peak - uni), 1.0)
    lam = np.clip(np.nan_to_num(lam, nan=1.0), 0.0, 1.0)
    share = lam[:, None] * share + (1.0 - lam[:, None]) * uni
    share[rows, pred] = 0.0
    out = (1.0 - r)[:, None] * share
    out[rows, pred] = r
    return out if np.ndim(probs) > 1 else out[0]


# -- dispatch -------------------------------------------------------------------

def apply_model(model: CalibrationModel, probs, features=None) -> np.ndarray:
    """Apply any fitted calibration model to a probability vector or matrix."""
    if isinstance(model, Identity):
        return np.array(probs, dtype=float)
    if isinstance(model, Temperature):
        return apply_temperature(model, probs)
    if isinstance(model, Dirichlet):
        return apply_dirichlet(model, probs)
    if isinstance(model, DensityAware):
        if features is None:
            raise ValueError("density-aware calibration needs features")
        return apply_dac(model, probs, features)
    if isinstance(model, HistogramBinning):
        return apply_histogram_binning(model, probs)
    raise TypeError(f"unknown calibration model {type(model).__name__}")


def apply_to_trace(model: CalibrationModel, trace: Trace) -> Trace:
    """Transform every record's ``edge_probs`` with ``model``."""
    if len(trace) == 0:
        return Trace(trace.records, trace.num_classes, {**trace.metadata, "calibration": model.name})
    feats = trace.features if isinstance(model, DensityAware) else None
    probs = apply_model(model, trace.probs, feats)
    return trace.with_probs(probs, calibration=model.name)


METHODS = ("none", "ts", "dc", "dac", "hist")


def fit(method: str, cal: Trace, *, lam: float = 1e-3, k: int = 10,
        num_bins: int = DEFAULT_BINS):
    """Fit calibration ``method`` (one of :data:`METHODS`) on ``cal``."""
    if method == "none":
        if len(cal) == 0:
            raise ValueError("cannot fit on an empty trace")
        e = _ece(cal.probs, cal.ground_truth, num_bins)
        return Identity(), FitReport("none", nll(cal), e, e, 0, True)
    if method == "ts":
        return fit_temperature(cal)
    if method == "dc":
        return fit_dirichlet(cal, lam)
    if method == "dac":
        return fit_dac(cal, k)
    if method == "hist":
        return fit_histogram_binning(cal, num_bins)
    raise ValueError(f"unknown calibration method {method!r}; choose from {', '.join(METHODS)}")


def split_indices(n: int, fit_split: float, seed: int):
    """Seeded shuffle into (fit, eval) index arrays, each in original order."""
    if not 0.0 < fit_split < 1.0:
        raise ValueError("fit_split must be strictly between 0 and 1")
    perm = np.random.default_rng(seed).permutation(n)
    n_fit = int(round(n * fit_split))
    return np.sort(perm[:n_fit]), np.sort(perm[n_fit:])


def calibrate_trace(trace: Trace, method: Union[str, CalibrationModel], fit_split: float = 0.5,
                    seed: int = 0, num_bins: int = DEFAULT_BINS, **fit_kwargs):
    """Fit on one partition of ``trace`` and return the calibrated other one.

    With a method name, the trace is shuffled by ``seed`` and split; the model
    is fitted on the first ``fit_split`` fraction and the returned trace holds
    the remaining records (original order) with transformed ``edge_probs``.
    With an already fitted model, the whole trace is transformed.

    Returns ``(calibrated_trace, model, report)``.
    """
    if not isinstance(method, str):
        model = method
        out = apply_to_trace(model, trace)
        e_pre = _ece(trace.probs, trace.ground_truth, num_bins) if len(trace) else None
        e_post = _ece(out.probs, out.ground_truth, num_bins) if len(out) else None
        report = FitReport(model.name, nll(out) if len(out) else math.nan,
                           e_pre, e_post, 0, True, ["pre-fitted model applied to whole trace"],
                           e_pre, e_post)
        return out, model, report
    fit_idx, eval_idx = split_indices(len(trace), fit_split, seed)
    cal = trace.subset(fit_idx)
    held = trace.subset(eval_idx)
    model, report = fit(method, cal, num_bins=num_bins, **fit_kwargs)
    out = apply_to_trace(model, held)
    out = Trace(out.records, out.num_classes,
                {**out.metadata, "split": "eval", "fit_split": fit_split, "split_seed": seed})
    if len(held):
        report.eval_pre_ece = _ece(held.probs, held.ground_truth, num_bins)
        report.eval_post_ece = _ece(out.probs, out.ground_truth, num_bins)
    return out, model, report


# -- serialisation ---------------------------------------------------------------

def model_to_dict(model: CalibrationModel) -> dict:
    if isinstance(model, Identity):
        return {"variant": "identity"}
    if isinstance(model, Temperature):
        return {"variant": "temperature", "T": model.T}
    if isinstance(model, Dirichlet):
        return {"variant": "dirichlet", "W": model.W.tolist(), "b": model.b.tolist(), "lam": model.lam}
    if isinstance(model, DensityAware):
        return {"variant": "density_aware", "T0": model.T0, "w": model.w, "k": model.k,
                "reference": model.reference.tolist()}
    if isinstance(model, HistogramBinning):
        return {"variant": "histogram_binning", "num_bins": model.num_bins,
                "bin_accuracy": model.bin_accuracy.tolist()}
    raise TypeError(f"unknown calibration model {type(model).__name__}")


def model_from_dict(d: dict) -> CalibrationModel:
    v = d.get("variant")
    if v == "identity":
        return Identity()
    if v == "temperature":
        return Temperature(float(d["T"]))
    if v == "dirichlet":
        return Dirichlet(np.array(d["W"], dtype=float), np.array(d["b"], dtype=float), float(d["lam"]))
    if v == "density_aware":
        return DensityAware(float(d["T0"]), float(d["w"]), int(d["k"]),
                            np.array(d["reference"], dtype=float))
    if v == "histogram_binning":
        return HistogramBinning(int(d["num_bins"]), np.array(d["bin_accuracy"], dtype=float))
    raise ValueError(f"unknown calibration variant {v!r}")


def dumps_model(model: CalibrationModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True)


def loads_model(text: str) -> CalibrationModel:
    return model_from_dict(json.loads(text))
