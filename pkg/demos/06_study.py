"""Small synthetic cohort: Latin-square ordered conditions, per-condition
aggregates, and the descriptive comparison tables, regenerated from bags.

Everything printed is a model-consistency number from configured agents, not a
human finding.
"""

import json
import tempfile

from neuroguide import data
from neuroguide.sim import AgentProfile, LoadScript, StudyConfig, report_from_bags, run_study

cfg = StudyConfig(
    participants=3,
    seeds_per_participant=1,
    checklist=data.load_fixture_checklist("uh60_smoke"),
    agent=AgentProfile(base_error_prob=0.08, latency_mean_s=11.0, latency_sigma=0.25),
    load_script=LoadScript.constant("overload"),
)

with tempfile.TemporaryDirectory() as out:
    report = run_study(cfg, out)
    print("Latin-square ordering:")
    for i, row in enumerate(report["ordering"]):
        print(f"  participant {i}: {' -> '.join(row)}")
    print("\nper-condition aggregates:")
    for condition, agg in report["per_condition"].items():
        mem = agg["optimal_counts"]["memory"]["incidence"]
        print(f"  {condition:<9} sessions={agg['sessions']} "
              f"errors={agg['error_count']} guidance={agg['guidance_total']} "
              f"optimal-memory={mem:.2f} "
              f"mean-completion={agg['mean_completion_time_s']:.1f}s")
    print("\ncomparisons (descriptive fixed-effect analogs):")
    print(json.dumps(report["comparisons"], indent=1, sort_keys=True))
    regenerated = report_from_bags(out)
    same = regenerated["per_condition"] == report["per_condition"]
    print(f"\nreport regenerated from bags alone matches: {same}")
