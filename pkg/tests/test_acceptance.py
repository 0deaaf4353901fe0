"""Acceptance suite: one test per acceptance criterion, each at its stated
tolerance, printing a PASS line when its assertions hold. Runs fully headless;
nothing here needs the web console or a reasoner endpoint.

Criteria 6/7/9 are statistical or closure properties over batches of seeded
closed-loop sessions, so this module runs a few minutes of simulation.
"""

import itertools
import math
import time

import numpy as np

from neuroguide import data
from neuroguide.classifier import (
    CLASSES,
    classify_all,
    extract_features,
    fit_multinomial,
    loss_and_gradient,
    softmax,
)
from neuroguide.pipeline import (
    PipelineConfig,
    RawFrame,
    StreamingPipeline,
    beer_lambert,
    butterworth_attenuation_db,
    calibrate_baseline,
    forward_od,
    lowpass_filter,
    optical_density,
)
from neuroguide.policy import (
    AUDIO,
    CognitiveContext,
    TEXT,
    VISUAL,
    build_default_rule_table,
    decide,
    select_strategy,
)
from neuroguide.sim import (
    AgentProfile,
    LoadScript,
    SessionConfig,
    error_rate_ratio,
    latin_square,
    metrics_from_bag,
    optimal_log_odds,
    rerun_from_bag,
    run_session,
    validate_latin_square,
)
from neuroguide.tasks import (
    GUIDANCE_DELAY_NS,
    TIMEOUT_NS,
    ChecklistSpec,
    TaskEngine,
    WorldState,
)

S = 1_000_000_000


def ok(name: str, detail: str = "") -> None:
    print(f"ACCEPTANCE PASS: {name}" + (f" ({detail})" if detail else ""))


# 1 ----------------------------------------------------------------------------


def test_dsp_constants_end_to_end(pipe_cfg, capsys):
    # Paper constants held in config and honored by behavior.
    assert pipe_cfg.sample_rate_hz == 10.0
    assert pipe_cfg.channel_count == 18
    assert pipe_cfg.window_samples == 100
    assert pipe_cfg.wavelet_name == "db5"
    assert pipe_cfg.wavelet_threshold == 0.1
    assert pipe_cfg.lowpass_cutoff_hz == 0.12

    # 100-sample window: 99 frames silent, 100th emits.
    level = np.full((18, 2), 1000.0)
    frames = [RawFrame(i * pipe_cfg.frame_interval_ns, level) for i in range(120)]
    baseline = calibrate_baseline(frames[:100], pipe_cfg)
    pipeline = StreamingPipeline(pipe_cfg, baseline)
    emitted = [pipeline.ingest(f) is not None for f in frames]
    assert emitted.index(True) == 99

    # Filter attenuation within 1 dB of the analytic Butterworth magnitude.
    worst = 0.0
    for freq in (0.01, 0.05, 0.12, 0.5, 1.0):
        t = np.arange(0, 400, 1 / pipe_cfg.sample_rate_hz)
        y = lowpass_filter(np.sin(2 * np.pi * freq * t), pipe_cfg.lowpass_cutoff_hz,
                           pipe_cfg.sample_rate_hz, pipe_cfg.lowpass_order)
        measured = -20 * np.log10(np.max(np.abs(y[len(y) // 2 :])))
        analytic = butterworth_attenuation_db(freq, pipe_cfg.lowpass_cutoff_hz,
                                              pipe_cfg.lowpass_order)
        worst = max(worst, abs(measured - analytic))
        assert abs(measured - analytic) < 1.0, f"{freq} Hz: {measured} vs {analytic}"

    # 60 s stream (600 frames) in under 5 s.
    rng = np.random.default_rng(0)
    stream = [
        RawFrame(i * pipe_cfg.frame_interval_ns,
                 level * rng.uniform(0.99, 1.01, size=(18, 2)))
        for i in range(600)
    ]
    baseline2 = calibrate_baseline(stream[:100], pipe_cfg)
    pipeline2 = StreamingPipeline(pipe_cfg, baseline2)
    start = time.perf_counter()
    for f in stream:
        pipeline2.ingest(f)
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    with capsys.disabled():
        ok("DSP constants end-to-end",
           f"max attenuation error {worst:.3f} dB, 60 s stream in {elapsed:.2f} s")


# 2 ----------------------------------------------------------------------------


def test_beer_lambert_round_trip_and_od_zero(capsys):
    rng = np.random.default_rng(42)
    matrices = 0
    worst = 0.0
    while matrices < 10:
        ext = rng.uniform(0.5, 5.0, size=(2, 2))
        if abs(np.linalg.det(ext)) < 0.3:
            continue
        cfg = PipelineConfig(
            extinction_matrix=tuple(map(tuple, ext)),
            dpf=tuple(rng.uniform(4.0, 8.0, size=2)),
            path_length_cm=float(rng.uniform(1.0, 4.0)),
        )
        conc = rng.uniform(0.1, 2.0, size=(1000, 2)) * rng.choice(
            [-1.0, 1.0], size=(1000, 2)
        )
        od = forward_od(conc[:, 0], conc[:, 1], cfg)
        hbo, hbr = beer_lambert(od, cfg)
        recovered = np.stack([hbo, hbr], axis=1)
        rel = np.abs(recovered - conc) / np.abs(conc)
        worst = max(worst, float(np.max(rel)))
        assert np.max(rel) <= 1e-9
        matrices += 1

    base = rng.uniform(100.0, 2000.0, size=(18, 2))
    od0 = optical_density(base, base)
    assert np.max(np.abs(od0)) <= 1e-12
    with capsys.disabled():
        ok("Beer-Lambert round trip + OD zero point",
           f"10 matrices x 1000 pairs, worst rel err {worst:.2e}")


# 3 ----------------------------------------------------------------------------


def test_classifier_suite(models, capsys):
    rng = np.random.default_rng(3)
    # softmax normalization <= 1e-9
    for _ in range(200):
        p = softmax(rng.uniform(-30, 30, size=3))
        assert abs(p.sum() - 1.0) <= 1e-9

    # analytic vs central-difference gradient <= 1e-4 relative
    feats = rng.normal(size=(30, 6))
    labels = rng.integers(0, 3, size=30)
    w = rng.normal(scale=0.5, size=(3, 7))
    _, grad = loss_and_gradient(w, feats, labels, l2=0.05)
    eps = 1e-6
    fd = np.zeros_like(w)
    for i in range(w.shape[0]):
        for j in range(w.shape[1]):
            wp = w.copy(); wp[i, j] += eps
            wm = w.copy(); wm[i, j] -= eps
            fd[i, j] = (loss_and_gradient(wp, feats, labels, l2=0.05)[0]
                        - loss_and_gradient(wm, feats, labels, l2=0.05)[0]) / (2 * eps)
    rel = np.linalg.norm(grad - fd) / np.linalg.norm(fd)
    assert rel <= 1e-4

    # >= 95% accuracy on 6-sigma separated blobs
    centers = np.array([[-6.0, 0.0, 0, 0], [0.0, 6.0, 0, 0], [6.0, -6.0, 0, 0]])
    x = np.vstack([rng.normal(size=(80, 4)) + centers[k] for k in range(3)])
    y = np.repeat(np.arange(3), 80)
    weights = fit_multinomial(x, y, l2=0.01)
    scores = np.hstack([x, np.ones((len(x), 1))]) @ weights.T
    acc = float(np.mean(np.argmax(scores, axis=1) == y))
    assert acc >= 0.95

    # 10 Hz with >= 60x real-time headroom: 60 s of stream in < 1 s
    from neuroguide.pipeline import HemoSample, QUALITY_OK

    spec = models["memory"].feature_spec
    window = [
        HemoSample(i * 100_000_000, rng.normal(size=18), rng.normal(size=18),
                   tuple([QUALITY_OK] * 18))
        for i in range(spec.window_samples)
    ]
    start = time.perf_counter()
    for tick in range(600):
        window.pop(0)
        window.append(HemoSample((100 + tick) * 100_000_000, rng.normal(size=18),
                                 rng.normal(size=18), tuple([QUALITY_OK] * 18)))
        feats_t = extract_features(window, spec)
        classify_all(feats_t, models, tick)
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    with capsys.disabled():
        ok("Classifier suite",
           f"grad rel {rel:.1e}, blob acc {acc:.3f}, 600 ticks in {elapsed:.2f} s")


# 4 ----------------------------------------------------------------------------


def _timing_oracle(start_ns, action_times, check_times):
    """Independent mirror of the timing rules over a merged schedule."""
    guidance_due = start_ns + GUIDANCE_DELAY_NS
    timeout_due = start_ns + TIMEOUT_NS
    fired = []
    merged = sorted(
        [(t, "action") for t in action_times] + [(t, "check") for t in check_times]
    )
    for t, kind in merged:
        if kind == "action":
            guidance_due = t + GUIDANCE_DELAY_NS
            timeout_due = t + TIMEOUT_NS
            continue
        if guidance_due is not None and t >= guidance_due:
            fired.append(("guidance_due", guidance_due, t))
            guidance_due = None
        if timeout_due is not None and t >= timeout_due:
            fired.append(("timeout", timeout_due, t))
            timeout_due += TIMEOUT_NS
    return fired


def test_timing_exactness_on_logical_clock(full_checklist, capsys):
    spec = ChecklistSpec.from_dict(full_checklist)
    rng = np.random.default_rng(4)
    schedules = 0
    events_total = 0
    for trial in range(1000):
        start_ns = int(rng.integers(0, 10 * S))
        n_actions = int(rng.integers(2, 16))
        gaps = rng.integers(1 * S, 45 * S, size=n_actions)
        action_times = (start_ns + np.cumsum(gaps)).astype(np.int64)
        action_times = action_times * 2  # even ns
        start = start_ns * 2
        n_checks = int(rng.integers(20, 80))
        horizon = int(action_times[-1] + 50 * S)
        check_times = sorted(
            int(v) * 2 + 1  # odd ns: disjoint from action instants
            for v in rng.integers(start_ns, horizon // 2, size=n_checks)
        )
        # exact-boundary checks: land precisely on a due instant
        check_times.append(int(action_times[0]) + GUIDANCE_DELAY_NS)
        check_times.append(int(action_times[0]) + TIMEOUT_NS)
        check_times = sorted(set(check_times))

        engine = TaskEngine(spec, "adaptive", session_start_ns=start)
        params = spec.initial_parameters()
        fired = []
        merged = sorted(
            [(int(t), 0, "action") for t in action_times]
            + [(int(t), 1, "check") for t in check_times]
        )
        for t, _, kind in merged:
            if kind == "action":
                step = engine.tree.active_step
                params[step.target_control] = step.expected_value
                engine.apply_world_state(WorldState(
                    t, dict(params), None,
                    {"control_id": step.target_control,
                     "value": step.expected_value, "timestamp_ns": t},
                ))
            else:
                for ev in engine.check_clock(t):
                    fired.append((ev.kind, ev.detail["due_ns"], ev.timestamp_ns))
        expected = _timing_oracle(start, [int(t) for t in action_times],
                                  check_times)
        assert fired == expected, f"trial {trial}"
        for kind, due, fire_time in fired:
            # zero deviation: dues are exactly arm + 10 s / arm + 20 s
            anchor = due - (GUIDANCE_DELAY_NS if kind == "guidance_due" else 0)
            if kind == "timeout":
                base = [start] + [int(t) for t in action_times]
                assert any((due - b) % TIMEOUT_NS == 0 and due >= b + TIMEOUT_NS
                           for b in base)
            else:
                assert anchor == start or anchor in {int(t) for t in action_times}
            assert fire_time >= due
        events_total += len(fired)
        schedules += 1
    assert schedules == 1000
    with capsys.disabled():
        ok("Timing exactness", f"{schedules} schedules, {events_total} timing events, zero deviation")


# 5 ----------------------------------------------------------------------------


def test_policy_totality_and_direction(capsys):
    rules = build_default_rule_table()
    spec = ChecklistSpec.from_dict(data.load_fixture_checklist("uh60_smoke"))
    step = spec.steps[0]

    def ctx(states, error=False):
        if isinstance(states, str):
            states = {f: states for f in ("memory", "attention", "perception")}
        return CognitiveContext(states, "P1", step.id, step.instruction,
                                None, [], error)

    for combo in itertools.product(CLASSES, repeat=3):
        summary = dict(zip(("memory", "attention", "perception"), combo))
        decision = select_strategy(ctx(summary), rules, step)
        decision.validate()
        if "overload" in combo:
            assert TEXT not in decision.modalities

    over = select_strategy(ctx("overload"), rules, step)
    under = select_strategy(ctx("underload"), rules, step)
    optimal = select_strategy(ctx("optimal"), rules, step)
    assert set(over.modalities) == {VISUAL} and over.load == "essential"
    assert set(under.modalities) == {VISUAL, AUDIO, TEXT}
    assert under.load == "comprehensive"
    assert set(optimal.modalities) == {VISUAL, AUDIO} and optimal.load == "standard"

    # Parser fuzzing through decide(): never raises, always yields a decision
    # (reasoner or fallback), within the 2 s budget per call.
    class EchoBackend:
        def __init__(self):
            self.text = ""

        def query(self, bundle):
            return self.text

    backend = EchoBackend()
    rng = np.random.default_rng(5)
    alphabet = list("ABCxyz:+\n \t01MODALITYLOADREASNGEusevialdotcmprhnsf")
    worst_call = 0.0
    for i in range(300):
        n = int(rng.integers(0, 120))
        backend.text = "".join(rng.choice(alphabet) for _ in range(n))
        if i % 3 == 0:
            backend.text = ("MODALITY: " + backend.text[:20] + "\nLOAD: "
                            + backend.text[20:40])
        t0 = time.perf_counter()
        decision = decide(ctx("optimal"), step, "adaptive", rules, backend=backend)
        worst_call = max(worst_call, time.perf_counter() - t0)
        assert decision is not None
        decision.validate()
    assert worst_call < 2.0
    with capsys.disabled():
        ok("Policy totality + scenario direction",
           f"27 combos, fuzz worst call {worst_call * 1e3:.1f} ms")


# 6 ----------------------------------------------------------------------------


def test_record_replay_closure(models, smoke_checklist, capsys):
    agent = AgentProfile(base_error_prob=0.04, latency_mean_s=6.0, latency_sigma=0.6)
    sessions = 0
    for condition in ("baseline", "random", "adaptive"):
        for seed in range(20):
            cfg = SessionConfig(
                condition=condition, seed=seed, checklist=smoke_checklist,
                agent=agent, late_prob=0.02,
                load_script=LoadScript.constant("optimal"),
            )
            live = run_session(cfg, models=models)
            bag = live.bag
            derived = rerun_from_bag(bag, cfg, models=models)
            for topic in ("engine_events", "guidance"):
                recorded = [(e.seq, e.timestamp_ns, e.payload)
                            for e in bag.by_topic(topic)]
                assert derived[topic] == recorded, (condition, seed, topic)
            assert metrics_from_bag(bag) == live.metrics, (condition, seed)
            sessions += 1
    assert sessions == 60
    with capsys.disabled():
        ok("Record/replay closure", "60 sessions: byte-identical logs, exact metrics")


# 7 ----------------------------------------------------------------------------


def test_false_error_reference_band(models, full_checklist, capsys):
    agent = AgentProfile(base_error_prob=0.0, latency_mean_s=1.2, latency_sigma=0.3)
    false = correct = 0
    for seed in range(16):
        cfg = SessionConfig(condition="baseline", seed=seed, checklist=full_checklist,
                            agent=agent, late_prob=0.05)
        m = run_session(cfg, models=models).metrics
        false += m["false_error_count"]
        correct += m["correct_actions"]
    assert correct >= 400
    rate = false / correct
    assert 0.03 <= rate <= 0.08, f"rate {rate:.4f} = {false}/{correct}"
    with capsys.disabled():
        ok("False-error reference band",
           f"rate {rate:.4f} over {correct} actions (paper band 0.053 +/- 0.021)")


# 8 ----------------------------------------------------------------------------


def test_statistics_oracles(capsys):
    lo = optimal_log_odds({"optimal": 30, "non": 70}, {"optimal": 20, "non": 80})
    assert abs(lo.log_odds - 0.5390) <= 1e-4
    ratio = error_rate_ratio(8, 400, 12, 380)
    assert abs(ratio - 0.6333) <= 1e-4
    for k in range(1, 7):
        conditions = [f"c{i}" for i in range(k)]
        rows = latin_square(conditions, k)
        assert validate_latin_square(rows)
        for row in rows:
            assert sorted(row) == sorted(conditions)
        for col in range(k):
            assert sorted(r[col] for r in rows) == sorted(conditions)
    with capsys.disabled():
        ok("Statistics oracles",
           f"log-odds {lo.log_odds:.4f}, rate ratio {ratio:.4f}, Latin squares k<=6")


# 9 ----------------------------------------------------------------------------


def test_closed_loop_model_consistency(models, smoke_checklist, capsys):
    # Explicitly NOT a human-result claim: checks that the configured
    # guidance-responsive agent and the policy move in the mandated direction.
    agent = AgentProfile(base_error_prob=0.02, latency_mean_s=11.0,
                         latency_sigma=0.2)
    match = {"adaptive": [0, 0], "random": [0, 0]}  # [matched, seen]
    visual_share = {"overload": [0, 0], "underload": [0, 0]}  # [visual-only, total]
    for seed in range(30):
        for condition in ("adaptive", "random"):
            cfg = SessionConfig(condition=condition, seed=seed,
                                checklist=smoke_checklist, agent=agent,
                                load_script=LoadScript.constant("overload"))
            res = run_session(cfg, models=models)
            match[condition][0] += res.guidance_matched
            match[condition][1] += res.guidance_seen
            if condition == "adaptive":
                mods = res.metrics["guidance_by_modality"]
                visual_share["overload"][0] += mods.get("visual", 0)
                visual_share["overload"][1] += res.metrics["guidance_total"]
        cfg = SessionConfig(condition="adaptive", seed=seed,
                            checklist=smoke_checklist, agent=agent,
                            load_script=LoadScript.constant("underload"))
        res = run_session(cfg, models=models)
        mods = res.metrics["guidance_by_modality"]
        visual_share["underload"][0] += mods.get("visual", 0)
        visual_share["underload"][1] += res.metrics["guidance_total"]

    rate_adaptive = match["adaptive"][0] / match["adaptive"][1]
    rate_random = match["random"][0] / match["random"][1]
    assert rate_adaptive > rate_random
    share_over = visual_share["overload"][0] / visual_share["overload"][1]
    share_under = visual_share["underload"][0] / visual_share["underload"][1]
    assert share_over > share_under
    with capsys.disabled():
        ok("Closed-loop model consistency",
           f"match {rate_adaptive:.2f} vs {rate_random:.2f}; visual-only share "
           f"{share_over:.2f} (overload) vs {share_under:.2f} (underload), 30 paired seeds")
