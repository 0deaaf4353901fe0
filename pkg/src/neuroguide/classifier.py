"""Per-facet workload classification from windowed hemoglobin samples.

Three multinomial logistic models (working memory, attention, perception) run
over a shared feature vector: per-channel mean and least-squares slope of HbO
and HbR across the 10 s window, z-scored against baseline feature statistics.
Each model outputs underload/optimal/overload probabilities at the frame rate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .pipeline.stream import QUALITY_GAP, HemoSample

__all__ = [
    "UNDERLOAD",
    "OPTIMAL",
    "OVERLOAD",
    "CLASSES",
    "FACETS",
    "FacetEstimate",
    "WorkloadVector",
    "FeatureSpec",
    "FacetModel",
    "extract_features",
    "softmax",
    "classify_facet",
    "classify_all",
    "fit_multinomial",
    "rolling_summary",
    "DimensionMismatch",
    "InsufficientQuality",
    "MissingClass",
    "NonConvergence",
    "EmptyHistory",
    "ModelFormatError",
]

UNDERLOAD = "underload"
OPTIMAL = "optimal"
OVERLOAD = "overload"
CLASSES = (UNDERLOAD, OPTIMAL, OVERLOAD)
# Argmax ties resolve toward the least disruptive guidance.
TIE_ORDER = (OPTIMAL, UNDERLOAD, OVERLOAD)
FACETS = ("memory", "attention", "perception")


class DimensionMismatch(ValueError):
    pass


class InsufficientQuality(ValueError):
    pass


class MissingClass(ValueError):
    pass


class NonConvergence(RuntimeError):
    pass


class EmptyHistory(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class FacetEstimate:
    facet: str
    state: str
    confidence: float
    probs: tuple

    def to_payload(self) -> dict:
        return {
            "facet": self.facet,
            "state": self.state,
            "confidence": self.confidence,
            "probs": list(self.probs),
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "FacetEstimate":
        return cls(obj["facet"], obj["state"], obj["confidence"], tuple(obj["probs"]))


@dataclass(frozen=True)
class WorkloadVector:
    timestamp_ns: int
    memory: FacetEstimate
    attention: FacetEstimate
    perception: FacetEstimate

    def facet(self, name: str) -> FacetEstimate:
        return getattr(self, name)

    def to_payload(self) -> dict:
        return {
            "timestamp_ns": self.timestamp_ns,
            "memory": self.memory.to_payload(),
            "attention": self.attention.to_payload(),
            "perception": self.perception.to_payload(),
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "WorkloadVector":
        return cls(
            obj["timestamp_ns"],
            FacetEstimate.from_payload(obj["memory"]),
            FacetEstimate.from_payload(obj["attention"]),
            FacetEstimate.from_payload(obj["perception"]),
        )


@dataclass
class FeatureSpec:
    """Describes the feature extraction so alternative sets can be swapped.

    kind "hbo_hbr_mean_slope": F = 4 * channel_count features ordered
    [hbo means, hbo slopes, hbr means, hbr slopes]; mu/sigma are the z-scoring
    baseline statistics (sigma floored at 1e-9).
    """

    kind: str = "hbo_hbr_mean_slope"
    channel_count: int = 18
    window_samples: int = 100
    sample_rate_hz: float = 10.0
    mu: np.ndarray | None = None
    sigma: np.ndarray | None = None

    @property
    def dimension(self) -> int:
        return 4 * self.channel_count

    def to_jsonable(self) -> dict:
        return {
            "kind": self.kind,
            "channel_count": self.channel_count,
            "window_samples": self.window_samples,
            "sample_rate_hz": self.sample_rate_hz,
            "mu": None if self.mu is None else np.asarray(self.mu).tolist(),
            "sigma": None if self.sigma is None else np.asarray(self.sigma).tolist(),
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "FeatureSpec":
        return cls(
            kind=obj["kind"],
            channel_count=obj["channel_count"],
            window_samples=obj["window_samples"],
            sample_rate_hz=obj["sample_rate_hz"],
            mu=None if obj.get("mu") is None else np.asarray(obj["mu"], dtype=float),
            sigma=None
            if obj.get("sigma") is None
            else np.asarray(obj["sigma"], dtype=float),
        )


def extract_features(samples, spec: FeatureSpec, z_score: bool = True) -> np.ndarray:
    """Feature vector from a window of HemoSamples (len == window_samples).

    Gap-flagged samples are excluded from the mean/slope fits; fewer than 80%
    usable samples raises InsufficientQuality. Slopes are per second, from the
    closed-form least squares line over the retained sample times.
    """
    samples = list(samples)
    if len(samples) != spec.window_samples:
        raise DimensionMismatch(
            f"expected {spec.window_samples} samples, got {len(samples)}"
        )
    keep = np.array(
        [QUALITY_GAP not in s.quality for s in samples], dtype=bool
    )
    if keep.sum() < 0.8 * len(samples):
        raise InsufficientQuality(
            f"only {int(keep.sum())}/{len(samples)} non-gap samples"
        )
    hbo = np.stack([np.asarray(s.hbo, dtype=float) for s in samples])[keep]
    hbr = np.stack([np.asarray(s.hbr, dtype=float) for s in samples])[keep]
    if hbo.shape[1] != spec.channel_count:
        raise DimensionMismatch(
            f"channel count {hbo.shape[1]} != spec {spec.channel_count}"
        )
    t = (np.arange(len(samples), dtype=float) / spec.sample_rate_hz)[keep]
    tc = t - t.mean()
    denom = float(np.dot(tc, tc))

    def mean_slope(block: np.ndarray):
        means = block.mean(axis=0)
        if denom == 0.0:
            slopes = np.zeros(block.shape[1])
        else:
            slopes = (tc @ (block - means)) / denom
        return means, slopes

    hbo_mean, hbo_slope = mean_slope(hbo)
    hbr_mean, hbr_slope = mean_slope(hbr)
    feats = np.concatenate([hbo_mean, hbo_slope, hbr_mean, hbr_slope])
    if z_score and spec.mu is not None:
        feats = (feats - spec.mu) / np.maximum(spec.sigma, 1e-9)
    return feats


@dataclass
class FacetModel:
    facet: str
    weights: np.ndarray  # (3, F+1): per-class weights plus bias column
    feature_spec: FeatureSpec
    family: str = "multinomial_logistic"

    def validate(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(CLASSES), self.feature_spec.dimension + 1):
            raise ModelFormatError(
                f"weights shape {w.shape} != (3, {self.feature_spec.dimension + 1})"
            )
        if not np.all(np.isfinite(w)):
            raise ModelFormatError("weights must be finite")

    def save(self, path: str) -> None:
        obj = {
            "family": self.family,
            "facet": self.facet,
            "classes": list(CLASSES),
            "feature_spec": self.feature_spec.to_jsonable(),
            "weights": np.asarray(self.weights).tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> "FacetModel":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        if obj.get("family") != "multinomial_logistic":
            raise ModelFormatError(f"unsupported model family {obj.get('family')!r}")
        if tuple(obj.get("classes", ())) != CLASSES:
            raise ModelFormatError("class order must be underload/optimal/overload")
        model = cls(
            facet=obj["facet"],
            weights=np.asarray(obj["weights"], dtype=float),
            feature_spec=FeatureSpec.from_jsonable(obj["feature_spec"]),
        )
        model.validate()
        return model


def softmax(scores: np.ndarray) -> np.ndarray:
    """Shift-invariant softmax along the last axis."""
    s = np.asarray(scores, dtype=float)
    shifted = s - s.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _argmax_with_ties(probs: np.ndarray) -> int:
    best = probs.max()
    for state in TIE_ORDER:
        idx = CLASSES.index(state)
        if probs[idx] == best:
            return idx
    return int(np.argmax(probs))  # pragma: no cover


def classify_facet(features: np.ndarray, model: FacetModel) -> FacetEstimate:
    x = np.asarray(features, dtype=float)
    if x.shape != (model.feature_spec.dimension,):
        raise DimensionMismatch(
            f"feature dimension {x.shape} != {model.feature_spec.dimension}"
        )
    scores = np.asarray(model.weights, dtype=float) @ np.append(x, 1.0)
    probs = softmax(scores)
    idx = _argmax_with_ties(probs)
    return FacetEstimate(
        facet=model.facet,
        state=CLASSES[idx],
        confidence=float(probs[idx]),
        probs=tuple(float(p) for p in probs),
    )


def classify_all(features: np.ndarray, models: dict, timestamp_ns: int) -> WorkloadVector:
    """Evaluate the three facet models independently on shared features."""
    if set(models) != set(FACETS):
        raise DimensionMismatch(f"need models for {FACETS}, got {sorted(models)}")
    return WorkloadVector(
        timestamp_ns=timestamp_ns,
        memory=classify_facet(features, models["memory"]),
        attention=classify_facet(features, models["attention"]),
        perception=classify_facet(features, models["perception"]),
    )


def _ce_loss_grad(w: np.ndarray, xb: np.ndarray, onehot: np.ndarray, l2: float):
    n = xb.shape[0]
    probs = softmax(xb @ w.T)
    # Clip only inside the log; the gradient uses the exact probabilities.
    loss = -np.mean(np.sum(onehot * np.log(np.maximum(probs, 1e-300)), axis=1))
    grad = (probs - onehot).T @ xb / n
    penalty = w.copy()
    penalty[:, -1] = 0.0  # bias unpenalized
    loss += 0.5 * l2 * float(np.sum(penalty[:, :-1] ** 2))
    grad += l2 * penalty
    return loss, grad


def fit_multinomial(
    features: np.ndarray,
    labels: np.ndarray,
    l2: float = 0.05,
    tol: float = 1e-6,
    max_iter: int = 200_000,
    seed: int = 0,
) -> np.ndarray:
    """Minimize L2-penalized cross-entropy by gradient descent with
    Barzilai-Borwein step lengths and an Armijo backtracking safeguard, to
    gradient-norm tolerance `tol`. Deterministic: zero initialization, fixed
    update sequence (the seed is accepted for interface stability).

    Returns the (3, F+1) weight matrix.
    """
    del seed
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if y.dtype.kind in "US":
        y = np.array([CLASSES.index(v) for v in y])
    present = set(int(v) for v in np.unique(y))
    if present != {0, 1, 2}:
        missing = [CLASSES[i] for i in sorted({0, 1, 2} - present)]
        raise MissingClass(f"no training examples for {missing}")
    xb = np.hstack([x, np.ones((x.shape[0], 1))])
    onehot = np.zeros((x.shape[0], len(CLASSES)))
    onehot[np.arange(x.shape[0]), y] = 1.0

    w = np.zeros((len(CLASSES), xb.shape[1]))
    loss, grad = _ce_loss_grad(w, xb, onehot, l2)
    # Conservative Lipschitz bound for the fallback step.
    lip = 0.5 * float(np.linalg.norm(xb, ord="fro") ** 2) / xb.shape[0] + l2
    step = 1.0 / lip
    prev_w = None
    prev_grad = None
    for _ in range(max_iter):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            return w
        if prev_grad is not None:
            dw = (w - prev_w).ravel()
            dg = (grad - prev_grad).ravel()
            denom = float(np.dot(dw, dg))
            step = float(np.dot(dw, dw)) / denom if denom > 1e-300 else 1.0 / lip
            step = min(max(step, 1e-12), 1e6)
        trial = step
        for _ in range(60):
            w_new = w - trial * grad
            loss_new, grad_new = _ce_loss_grad(w_new, xb, onehot, l2)
            if loss_new <= loss - 1e-4 * trial * gnorm * gnorm:
                break
            trial *= 0.5
        prev_w, prev_grad = w, grad
        w, loss, grad = w_new, loss_new, grad_new
    raise NonConvergence(
        f"gradient norm {float(np.linalg.norm(grad)):.3e} > {tol} after {max_iter} iterations"
    )


def loss_and_gradient(w, features, labels, l2: float = 0.05):
    """Exposed for finite-difference verification of the fitting gradient."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if y.dtype.kind in "US":
        y = np.array([CLASSES.index(v) for v in y])
    xb = np.hstack([x, np.ones((x.shape[0], 1))])
    onehot = np.zeros((x.shape[0], len(CLASSES)))
    onehot[np.arange(x.shape[0]), y] = 1.0
    return _ce_loss_grad(np.asarray(w, dtype=float), xb, onehot, l2)


def rolling_summary(history, span_s: float = 10.0, now_ns: int | None = None) -> dict:
    """Modal state and mean confidence per facet over the trailing span.

    Ties resolve to the tied state observed most recently. Returns
    {facet: {"state", "mean_confidence", "count"}}.
    """
    history = list(history)
    if not history:
        raise EmptyHistory("no workload vectors in history")
    if now_ns is None:
        now_ns = history[-1].timestamp_ns
    span_ns = int(round(span_s * 1e9))
    window = [v for v in history if now_ns - v.timestamp_ns < span_ns]
    if not window:
        raise EmptyHistory("no workload vectors within span")
    out = {}
    for facet in FACETS:
        counts = {c: 0 for c in CLASSES}
        last_seen = {c: -1 for c in CLASSES}
        conf = 0.0
        for i, vec in enumerate(window):
            est = vec.facet(facet)
            counts[est.state] += 1
            last_seen[est.state] = i
            conf += est.confidence
        top = max(counts.values())
        modal = max(
            (c for c in CLASSES if counts[c] == top), key=lambda c: last_seen[c]
        )
        out[facet] = {
            "state": modal,
            "mean_confidence": conf / len(window),
            "count": len(window),
        }
    return out
