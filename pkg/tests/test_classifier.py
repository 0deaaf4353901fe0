"""Classifier: features, softmax behavior, fitting with gradient checks, and
the rolling summary."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuroguide.classifier import (
    CLASSES,
    FACETS,
    OPTIMAL,
    OVERLOAD,
    UNDERLOAD,
    DimensionMismatch,
    EmptyHistory,
    FacetEstimate,
    FacetModel,
    FeatureSpec,
    InsufficientQuality,
    MissingClass,
    WorkloadVector,
    classify_all,
    classify_facet,
    extract_features,
    fit_multinomial,
    loss_and_gradient,
    rolling_summary,
    softmax,
)
from neuroguide.pipeline import HemoSample, QUALITY_GAP, QUALITY_OK


def make_samples(values_hbo, values_hbr=None, channels=3, gap_mask=None):
    n = len(values_hbo)
    if values_hbr is None:
        values_hbr = np.zeros(n)
    samples = []
    for i in range(n):
        quality = [QUALITY_OK] * channels
        if gap_mask is not None and gap_mask[i]:
            quality = [QUALITY_GAP] * channels
        samples.append(
            HemoSample(
                timestamp_ns=i * 100_000_000,
                hbo=np.full(channels, values_hbo[i], dtype=float),
                hbr=np.full(channels, values_hbr[i], dtype=float),
                quality=tuple(quality),
            )
        )
    return samples


def spec_for(channels=3, n=100):
    return FeatureSpec(channel_count=channels, window_samples=n, sample_rate_hz=10.0)


class TestFeatures:
    def test_constant_window_mean_one_slope_zero(self):
        samples = make_samples(np.ones(100))
        feats = extract_features(samples, spec_for(), z_score=False)
        np.testing.assert_allclose(feats[:3], 1.0, atol=1e-12)  # hbo means
        np.testing.assert_allclose(feats[3:6], 0.0, atol=1e-12)  # hbo slopes

    def test_linear_ramp_slope_one_per_second(self):
        t = np.arange(100) / 10.0
        feats = extract_features(make_samples(t), spec_for(), z_score=False)
        np.testing.assert_allclose(feats[3:6], 1.0, atol=1e-10)

    def test_matches_lstsq_oracle(self):
        rng = np.random.default_rng(0)
        hbo = rng.normal(size=100)
        hbr = rng.normal(size=100)
        feats = extract_features(make_samples(hbo, hbr), spec_for(), z_score=False)
        t = np.arange(100) / 10.0
        design = np.stack([np.ones(100), t], axis=1)
        (b0_hbo, b1_hbo), *_ = np.linalg.lstsq(design, hbo, rcond=None)
        (b0_hbr, b1_hbr), *_ = np.linalg.lstsq(design, hbr, rcond=None)
        assert abs(feats[0] - hbo.mean()) < 1e-10
        assert abs(feats[3] - b1_hbo) < 1e-10
        assert abs(feats[6] - hbr.mean()) < 1e-10
        assert abs(feats[9] - b1_hbr) < 1e-10

    def test_gap_samples_excluded(self):
        hbo = np.ones(100)
        hbo[10:15] = 50.0  # corrupted span flagged as gap
        gap_mask = np.zeros(100, dtype=bool)
        gap_mask[10:15] = True
        feats = extract_features(make_samples(hbo, gap_mask=gap_mask),
                                 spec_for(), z_score=False)
        np.testing.assert_allclose(feats[:3], 1.0, atol=1e-12)

    def test_insufficient_quality(self):
        gap_mask = np.zeros(100, dtype=bool)
        gap_mask[: 30] = True  # > 20% gaps
        with pytest.raises(InsufficientQuality):
            extract_features(make_samples(np.ones(100), gap_mask=gap_mask), spec_for())


def model_with(weights, channels=1):
    spec = FeatureSpec(channel_count=channels, window_samples=100)
    return FacetModel(facet="memory", weights=np.asarray(weights, dtype=float),
                      feature_spec=spec)


class TestClassify:
    def test_zero_weights_uniform_tie_to_optimal(self):
        model = model_with(np.zeros((3, 5)))
        est = classify_facet(np.zeros(4), model)
        np.testing.assert_allclose(est.probs, [1 / 3] * 3, atol=1e-12)
        assert est.state == OPTIMAL

    def test_scores_2_1_0_against_scalar_oracle(self):
        w = np.zeros((3, 5))
        w[:, -1] = [2.0, 1.0, 0.0]  # biases produce the scores
        est = classify_facet(np.zeros(4), model_with(w))
        z = [math.exp(2), math.exp(1), math.exp(0)]
        total = sum(z)
        for p, ref in zip(est.probs, z):
            assert abs(p - ref / total) < 1e-12

    def test_shift_invariance(self):
        w = np.zeros((3, 5))
        w[:, -1] = [0.3, -1.2, 2.0]
        w_shifted = w.copy()
        w_shifted[:, -1] += 7.5
        x = np.zeros(4)
        a = classify_facet(x, model_with(w))
        b = classify_facet(x, model_with(w_shifted))
        np.testing.assert_allclose(a.probs, b.probs, atol=1e-9)
        assert a.state == b.state

    def test_scaling_preserves_argmax(self):
        w = np.zeros((3, 5))
        w[:, -1] = [0.3, -1.2, 2.0]
        a = classify_facet(np.zeros(4), model_with(w))
        b = classify_facet(np.zeros(4), model_with(2 * w))
        assert a.state == b.state

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            classify_facet(np.zeros(7), model_with(np.zeros((3, 5))))

    def test_facet_independence(self):
        base = np.zeros((3, 5))
        base[:, -1] = [1.0, 0.0, -1.0]
        models = {
            "memory": model_with(base),
            "attention": model_with(base),
            "perception": model_with(base),
        }
        x = np.zeros(4)
        before = classify_all(x, models, 0)
        perturbed = dict(models)
        w2 = base.copy()
        w2[:, -1] = [-5.0, 5.0, 0.0]
        perturbed["memory"] = model_with(w2)
        after = classify_all(x, perturbed, 0)
        assert before.memory.state != after.memory.state
        assert before.attention == after.attention
        assert before.perception == after.perception

    @given(st.lists(st.floats(-30, 30), min_size=3, max_size=3))
    @settings(max_examples=200, deadline=None)
    def test_softmax_probabilities_well_formed(self, scores):
        p = softmax(np.asarray(scores))
        assert abs(p.sum() - 1.0) <= 1e-9
        assert np.all(p > 0) and np.all(p < 1 + 1e-12)


class TestFit:
    def blobs(self, n_per=60, sep=6.0, dim=4, seed=0):
        rng = np.random.default_rng(seed)
        centers = np.zeros((3, dim))
        centers[0, 0] = -sep
        centers[1, 0] = 0.0
        centers[2, 0] = sep
        centers[:, 1] = [0, sep, -sep]
        feats = np.vstack([
            rng.normal(size=(n_per, dim)) + centers[k] for k in range(3)
        ])
        labels = np.repeat(np.arange(3), n_per)
        return feats, labels

    def test_blob_accuracy(self):
        feats, labels = self.blobs()
        w = fit_multinomial(feats, labels, l2=0.01)
        scores = np.hstack([feats, np.ones((len(feats), 1))]) @ w.T
        acc = float(np.mean(np.argmax(scores, axis=1) == labels))
        assert acc >= 0.95

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        feats = rng.normal(size=(40, 5))
        labels = rng.integers(0, 3, size=40)
        w = rng.normal(scale=0.5, size=(3, 6))
        _, grad = loss_and_gradient(w, feats, labels, l2=0.05)
        eps = 1e-6
        fd = np.zeros_like(w)
        for i in range(w.shape[0]):
            for j in range(w.shape[1]):
                wp = w.copy(); wp[i, j] += eps
                wm = w.copy(); wm[i, j] -= eps
                lp, _ = loss_and_gradient(wp, feats, labels, l2=0.05)
                lm, _ = loss_and_gradient(wm, feats, labels, l2=0.05)
                fd[i, j] = (lp - lm) / (2 * eps)
        rel = np.linalg.norm(grad - fd) / np.linalg.norm(fd)
        assert rel < 1e-4

    def test_duplicated_dataset_same_optimum(self):
        feats, labels = self.blobs(n_per=30)
        w1 = fit_multinomial(feats, labels, l2=0.05)
        w2 = fit_multinomial(np.vstack([feats, feats]),
                             np.concatenate([labels, labels]), l2=0.05)
        assert np.max(np.abs(w1 - w2)) < 1e-4

    def test_missing_class_rejected(self):
        feats = np.zeros((10, 2))
        labels = np.zeros(10, dtype=int)
        with pytest.raises(MissingClass):
            fit_multinomial(feats, labels)

    def test_deterministic(self):
        feats, labels = self.blobs(n_per=20)
        w1 = fit_multinomial(feats, labels)
        w2 = fit_multinomial(feats, labels)
        assert np.array_equal(w1, w2)

    def test_converged_gradient_below_tolerance(self):
        feats, labels = self.blobs(n_per=20)
        w = fit_multinomial(feats, labels, l2=0.05, tol=1e-6)
        _, grad = loss_and_gradient(w, feats, labels, l2=0.05)
        assert np.linalg.norm(grad) <= 1e-6


def vector(ts, mem=OPTIMAL, att=OPTIMAL, per=OPTIMAL, conf=0.9):
    def est(facet, state):
        probs = [0.05, 0.05, 0.05]
        probs[CLASSES.index(state)] = conf
        total = sum(probs)
        return FacetEstimate(facet, state, conf / total, tuple(p / total for p in probs))

    return WorkloadVector(ts, est("memory", mem), est("attention", att),
                          est("perception", per))


class TestRollingSummary:
    def test_all_overload(self):
        history = [vector(i * 100_000_000, mem=OVERLOAD) for i in range(100)]
        out = rolling_summary(history, span_s=10.0)
        assert out["memory"]["state"] == OVERLOAD
        assert out["memory"]["count"] == 100

    def test_tie_resolves_to_most_recent(self):
        history = [vector(i * 100_000_000, mem=UNDERLOAD) for i in range(50)]
        history += [vector((50 + i) * 100_000_000, mem=OPTIMAL) for i in range(50)]
        out = rolling_summary(history, span_s=10.0, now_ns=99 * 100_000_000)
        assert out["memory"]["state"] == OPTIMAL

    def test_matches_count_oracle(self):
        rng = np.random.default_rng(5)
        states = [CLASSES[i] for i in rng.integers(0, 3, size=80)]
        history = [vector(i * 100_000_000, mem=s) for i, s in enumerate(states)]
        out = rolling_summary(history, span_s=10.0, now_ns=history[-1].timestamp_ns)
        span = states[-99:] if len(states) > 99 else states
        # oracle: count within the span (< 10 s back from the last timestamp)
        in_window = [
            s for i, s in enumerate(states)
            if history[-1].timestamp_ns - history[i].timestamp_ns < 10_000_000_000
        ]
        counts = {c: in_window.count(c) for c in CLASSES}
        top = max(counts.values())
        assert counts[out["memory"]["state"]] == top

    def test_empty_history(self):
        with pytest.raises(EmptyHistory):
            rolling_summary([])


class TestModelFile:
    def test_round_trip(self, tmp_path):
        spec = FeatureSpec(channel_count=2, window_samples=100,
                           mu=np.zeros(8), sigma=np.ones(8))
        model = FacetModel(facet="attention", weights=np.arange(27.0).reshape(3, 9),
                           feature_spec=spec)
        path = str(tmp_path / "model.json")
        model.save(path)
        back = FacetModel.load(path)
        assert back.facet == "attention"
        np.testing.assert_array_equal(back.weights, model.weights)
        assert back.feature_spec.channel_count == 2

    def test_dimension_validation(self, tmp_path):
        spec = FeatureSpec(channel_count=2, window_samples=100)
        model = FacetModel(facet="memory", weights=np.zeros((3, 5)),  # wrong: needs 9
                           feature_spec=spec)
        with pytest.raises(Exception):
            model.validate()
