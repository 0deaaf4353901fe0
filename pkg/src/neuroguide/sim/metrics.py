"""Session metrics computed from the recorded streams.

The same computation serves the live loop and bag post-processing: metrics are
a pure function of the workload/engine/guidance/ack streams plus the task
phase start, so metrics recomputed from a bag equal the live values exactly.
"""

from __future__ import annotations

import json

from ..bus import Bag
from ..classifier import FACETS, OPTIMAL
from ..tasks import ActionAck, EngineEvent

__all__ = ["compute_metrics", "metrics_from_bag", "parse_session_id"]


def compute_metrics(
    workload_payloads,
    events,
    guidance_payloads,
    acks,
    task_start_ns: int,
    end_ns: int,
    condition: str,
    seed: int,
) -> dict:
    """Aggregate one session. All inputs are ordered streams; events are
    EngineEvent objects, workload/guidance are payload dicts, acks ActionAck."""
    task_vectors = [w for w in workload_payloads if w["timestamp_ns"] >= task_start_ns]
    incidence = {}
    for facet in FACETS:
        n_opt = sum(1 for w in task_vectors if w[facet]["state"] == OPTIMAL)
        incidence[facet] = {
            "optimal_ticks": n_opt,
            "total_ticks": len(task_vectors),
            "incidence": n_opt / len(task_vectors) if task_vectors else 0.0,
        }

    completions = [e for e in events if e.kind == "step_completed"]
    errors = [e for e in events if e.kind == "error_detected"]
    false_errors = [e for e in events if e.kind == "false_error_suspected"]
    timeouts = [e for e in events if e.kind == "timeout"]

    # Procedure time: from the previous procedure's last completion (or task
    # start) to this procedure's last completion.
    per_procedure: dict[str, float] = {}
    proc_start = task_start_ns
    for i, ev in enumerate(completions):
        proc = ev.detail["procedure_id"]
        per_procedure[proc] = (ev.timestamp_ns - proc_start) / 1e9
        if i + 1 < len(completions) and completions[i + 1].detail["procedure_id"] != proc:
            proc_start = ev.timestamp_ns

    guidance_by_modality: dict[str, int] = {}
    guidance_by_load: dict[str, int] = {}
    guidance_by_source: dict[str, int] = {}
    for g in guidance_payloads:
        mkey = "+".join(g["modalities"])
        guidance_by_modality[mkey] = guidance_by_modality.get(mkey, 0) + 1
        guidance_by_load[g["load"]] = guidance_by_load.get(g["load"], 0) + 1
        guidance_by_source[g["source"]] = guidance_by_source.get(g["source"], 0) + 1

    correct_actions = sum(1 for a in acks if a.correct)
    n_false = len(false_errors)
    completion_time_s = (
        (completions[-1].timestamp_ns - task_start_ns) / 1e9 if completions else None
    )
    return {
        "condition": condition,
        "seed": seed,
        "optimal_incidence": incidence,
        "error_count": len(errors) - n_false,
        "raw_error_count": len(errors),
        "false_error_count": n_false,
        "false_error_rate_per_action": n_false / correct_actions if correct_actions else 0.0,
        "false_error_rate_of_errors": n_false / len(errors) if errors else 0.0,
        "timeout_count": len(timeouts),
        "steps_completed": len(completions),
        "correct_actions": correct_actions,
        "completion_time_s": completion_time_s,
        "per_procedure_time_s": per_procedure,
        "guidance_total": len(guidance_payloads),
        "guidance_by_modality": guidance_by_modality,
        "guidance_by_load": guidance_by_load,
        "guidance_by_source": guidance_by_source,
        "exposure_s": (end_ns - task_start_ns) / 1e9,
    }


def parse_session_id(session_id: str) -> dict:
    """Bag session ids follow "condition|seed=N|cal=S" (docs/bag_format.md)."""
    parts = session_id.split("|")
    out = {"condition": parts[0]}
    for part in parts[1:]:
        key, _, value = part.partition("=")
        out[key] = value
    return out


def metrics_from_bag(bag: Bag) -> dict:
    """Recompute session metrics using only the bag contents."""
    meta = parse_session_id(bag.session_id)
    condition = meta["condition"]
    seed = int(meta.get("seed", 0))
    task_start_ns = None
    end_ns = bag.envelopes[-1].timestamp_ns if bag.envelopes else 0
    workload = []
    events = []
    guidance = []
    acks = []
    for env in bag.envelopes:
        obj = json.loads(env.payload.decode("utf-8"))
        if env.topic == "clock" and task_start_ns is None and obj.get("phase") == "task":
            task_start_ns = env.timestamp_ns
        elif env.topic == "workload":
            workload.append(obj)
        elif env.topic == "engine_events":
            events.append(EngineEvent.from_payload(obj))
        elif env.topic == "guidance":
            guidance.append(obj)
        elif env.topic == "frontend_acks":
            acks.append(ActionAck.from_payload(obj))
    if task_start_ns is None:
        task_start_ns = 0
    return compute_metrics(
        workload, events, guidance, acks, task_start_ns, end_ns, condition, seed
    )
