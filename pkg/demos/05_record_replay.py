"""Record a closed-loop session to a bag, dump an excerpt, and re-derive every
downstream topic from the recorded inputs, verifying byte equality."""

from neuroguide import data
from neuroguide.bus import bagdump_lines
from neuroguide.sim import (
    AgentProfile,
    LoadScript,
    SessionConfig,
    metrics_from_bag,
    rerun_from_bag,
    run_session,
    train_fixture_models,
)

models = train_fixture_models(SessionConfig().pipeline)
cfg = SessionConfig(
    condition="adaptive",
    seed=2024,
    checklist=data.load_fixture_checklist("uh60_smoke"),
    agent=AgentProfile(base_error_prob=0.05, latency_mean_s=12.0, latency_sigma=0.25),
    load_script=LoadScript.constant("overload"),
)
result = run_session(cfg, models=models)
m = result.metrics
print(f"live session: {m['steps_completed']} steps in {m['completion_time_s']:.1f} s, "
      f"{m['guidance_total']} guidance decisions {m['guidance_by_modality']}, "
      f"{m['raw_error_count']} errors ({m['false_error_count']} false)")

bag = result.bag
print(f"\nbag: {len(result.bag_bytes)} bytes, per-topic counts {bag.topic_counts}")
print("\nfirst records:")
for line in list(bagdump_lines(bag))[:14]:
    print("  " + line[:110])

derived = rerun_from_bag(bag, cfg, models=models)
print("\nre-deriving downstream topics from recorded inputs:")
for topic in ("hemo", "workload", "engine_events", "guidance"):
    recorded = [(e.seq, e.timestamp_ns, e.payload) for e in bag.by_topic(topic)]
    status = "byte-identical" if recorded == derived[topic] else "MISMATCH"
    print(f"  {topic:<14} {len(recorded):>5} envelopes  {status}")

assert metrics_from_bag(bag) == result.metrics
print("\nmetrics recomputed from the bag equal the live metrics exactly.")
