"""Multi-session study harness: conditions x participants x seeds, Latin-square
ordered, with per-condition aggregation and descriptive comparison tables.

Outputs are synthetic-agent model-consistency numbers, not human findings; the
report header restates the agent's guidance-response knobs for that reason.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from ..bus import Bag
from .agent import AgentProfile
from .generator import LoadScript
from .metrics import metrics_from_bag
from .session import CONDITIONS, SessionConfig, run_session
from .stats import ZeroDenominatorRate, error_rate_ratio, latin_square, optimal_log_odds
from .training import DEFAULT_MODEL_SEED, train_fixture_models

__all__ = ["StudyConfig", "run_study", "report_from_bags", "aggregate_report"]


@dataclass
class StudyConfig:
    participants: int = 6
    seeds_per_participant: int = 1
    conditions: tuple = CONDITIONS
    checklist: dict | None = None
    agent: AgentProfile = field(default_factory=lambda: AgentProfile(
        base_error_prob=0.06, latency_mean_s=11.0, latency_sigma=0.3))
    load_script: LoadScript | None = None
    late_prob: float = 0.0
    base_seed: int = 1000
    model_seed: int = DEFAULT_MODEL_SEED
    time_cap_s: float = 1800.0


def run_study(cfg: StudyConfig, out_dir: str) -> dict:
    """Run every session, write bags + line-delimited metrics, return report."""
    os.makedirs(out_dir, exist_ok=True)
    ordering = latin_square(list(cfg.conditions), cfg.participants)
    models = train_fixture_models(SessionConfig().pipeline, cfg.model_seed)
    session_rows = []
    for participant, row in enumerate(ordering):
        for seed_idx in range(cfg.seeds_per_participant):
            for condition in row:
                seed = (
                    cfg.base_seed
                    + participant * 100
                    + seed_idx * 10
                )
                scfg = SessionConfig(
                    condition=condition,
                    seed=seed,
                    checklist=cfg.checklist,
                    agent=cfg.agent,
                    load_script=cfg.load_script,
                    late_prob=cfg.late_prob,
                    model_seed=cfg.model_seed,
                    time_cap_s=cfg.time_cap_s,
                )
                bag_path = os.path.join(
                    out_dir, f"p{participant}_s{seed_idx}_{condition}.bag"
                )
                result = run_session(scfg, models=models, bag_path=bag_path)
                row_record = {
                    "participant": participant,
                    "seed_index": seed_idx,
                    "condition": condition,
                    "seed": seed,
                    "bag": os.path.basename(bag_path),
                    "completed": result.completed,
                    "metrics": result.metrics,
                }
                session_rows.append(row_record)
    with open(os.path.join(out_dir, "sessions.jsonl"), "w", encoding="utf-8") as fh:
        for row_record in session_rows:
            fh.write(json.dumps(row_record, sort_keys=True) + "\n")
    report = aggregate_report(
        [r["metrics"] for r in session_rows],
        ordering=ordering,
        agent=cfg.agent.to_payload(),
    )
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
    return report


def aggregate_report(metrics_list, ordering=None, agent=None) -> dict:
    """Per-condition aggregation plus adaptive-vs-other comparison tables."""
    by_condition: dict[str, list] = {}
    for m in metrics_list:
        by_condition.setdefault(m["condition"], []).append(m)

    aggregates = {}
    for condition, rows in sorted(by_condition.items()):
        counts = {}
        for facet in ("memory", "attention", "perception"):
            opt = sum(r["optimal_incidence"][facet]["optimal_ticks"] for r in rows)
            tot = sum(r["optimal_incidence"][facet]["total_ticks"] for r in rows)
            counts[facet] = {
                "optimal": opt,
                "non": tot - opt,
                "incidence": opt / tot if tot else 0.0,
            }
        aggregates[condition] = {
            "sessions": len(rows),
            "optimal_counts": counts,
            "error_count": sum(r["error_count"] for r in rows),
            "false_error_count": sum(r["false_error_count"] for r in rows),
            "exposure_s": sum(r["exposure_s"] for r in rows),
            "mean_completion_time_s": (
                sum(r["completion_time_s"] or 0.0 for r in rows) / len(rows)
            ),
            "guidance_total": sum(r["guidance_total"] for r in rows),
        }

    comparisons = {}
    if "adaptive" in aggregates:
        for other in sorted(by_condition):
            if other == "adaptive":
                continue
            comp: dict = {}
            for facet in ("memory", "attention", "perception"):
                a = aggregates["adaptive"]["optimal_counts"][facet]
                b = aggregates[other]["optimal_counts"][facet]
                res = optimal_log_odds(
                    {"optimal": a["optimal"], "non": a["non"]},
                    {"optimal": b["optimal"], "non": b["non"]},
                )
                comp[f"log_odds_{facet}"] = {
                    "value": res.log_odds,
                    "haldane_corrected": res.corrected,
                }
            try:
                comp["error_rate_ratio"] = error_rate_ratio(
                    aggregates["adaptive"]["error_count"],
                    aggregates["adaptive"]["exposure_s"],
                    aggregates[other]["error_count"],
                    aggregates[other]["exposure_s"],
                )
            except ZeroDenominatorRate:
                comp["error_rate_ratio"] = None  # undefined: zero comparison rate
            comparisons[f"adaptive_vs_{other}"] = comp

    return {
        "note": (
            "Synthetic-agent model-consistency results; agent guidance response "
            "is configured, not measured from humans."
        ),
        "agent": agent,
        "ordering": ordering,
        "per_condition": aggregates,
        "comparisons": comparisons,
    }


def report_from_bags(out_dir: str) -> dict:
    """Regenerate the aggregate report from the recorded bags alone."""
    metrics_list = []
    for name in sorted(os.listdir(out_dir)):
        if not name.endswith(".bag"):
            continue
        bag = Bag.open(os.path.join(out_dir, name))
        metrics_list.append(metrics_from_bag(bag))
    return aggregate_report(metrics_list)
