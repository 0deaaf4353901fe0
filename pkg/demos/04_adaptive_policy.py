"""Guidance selection across workload scenarios, the reasoner prompt/parse
contract, and the fallback path."""

import numpy as np

from neuroguide import data
from neuroguide.policy import (
    CognitiveContext,
    build_default_rule_table,
    build_prompt,
    decide,
    parse_reasoner_output,
)
from neuroguide.tasks import ChecklistSpec

rules = build_default_rule_table()
spec = ChecklistSpec.from_dict(data.load_fixture_checklist("uh60_preflight"))
step = spec.steps[3]  # generator one


def ctx(states, error=False, gaze=None):
    if isinstance(states, str):
        states = {f: states for f in ("memory", "attention", "perception")}
    return CognitiveContext(states, "P2", step.id, step.instruction, gaze, [], error)


print(f"step: {step.id} -> {step.instruction!r}\n")
print("rule-table decisions per scenario:")
for label, states in [
    ("all overload", "overload"),
    ("all underload", "underload"),
    ("all optimal", "optimal"),
    ("memory overloaded only", {"memory": "overload", "attention": "optimal",
                                "perception": "optimal"}),
    ("optimal + error context", "optimal"),
]:
    decision = decide(ctx(states, error="error" in label), step, "adaptive", rules)
    print(f"  {label:<24} -> {'+'.join(decision.modalities):<18} "
          f"{decision.load:<13} {decision.message_text[:46]!r}")

print("\nrandom condition (seeded) draws over the 7 subsets:")
rng = np.random.default_rng(7)
draws = [decide(ctx("optimal"), step, "random", rules, rng=rng) for _ in range(6)]
print("  " + ", ".join("+".join(d.modalities) for d in draws))

bundle = build_prompt(ctx("underload"), data.instruction_corpus(),
                      data.few_shot_corpus())
print(f"\nprompt bundle: {len(bundle.instructions)} chars of instructions, "
      f"{len(bundle.few_shot)} few-shot examples, realtime section:")
print("  " + bundle.realtime.replace("\n", "\n  "))

good = "REASONING: pilot drifting\nMODALITY: visual+text\nLOAD: comprehensive\nMESSAGE: Check fuel"
print(f"\nparsing well-formed reasoner output: {parse_reasoner_output(good)}")


class Mumbler:
    def query(self, bundle):
        return "uhh visual-ish? maybe loud?"


fallback = decide(ctx("overload"), step, "adaptive", rules, backend=Mumbler())
print(f"malformed reasoner output -> fallback source={fallback.source}, "
      f"modalities={'+'.join(fallback.modalities)}")
