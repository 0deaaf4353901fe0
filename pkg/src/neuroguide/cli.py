"""Command line interface.

Subcommands: run (one session), study (cohort), replay (bag-driven rerun and
metrics), bagdump (human-readable bag listing), serve (operator gateway).
"""

from __future__ import annotations

import argparse
import json
import sys

from .bus import Bag, bagdump_lines
from .sim import (
    AgentProfile,
    LoadScript,
    SessionConfig,
    StudyConfig,
    metrics_from_bag,
    rerun_from_bag,
    run_session,
    run_study,
)


def _add_run(sub) -> None:
    p = sub.add_parser("run", help="run one closed-loop session and record a bag")
    p.add_argument("--condition", choices=("baseline", "random", "adaptive"),
                   default="adaptive")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--checklist", help="checklist JSON path (default: packaged fixture)")
    p.add_argument("--out", required=True, help="bag output path")
    p.add_argument("--script", choices=("optimal", "underload", "overload"),
                   default="optimal", help="constant load script")
    p.add_argument("--late-prob", type=float, default=0.0,
                   help="probability an action is delivered late (reordered)")
    p.add_argument("--latency-mean", type=float, default=4.0,
                   help="agent action latency mean, seconds")
    p.add_argument("--error-prob", type=float, default=0.04)


def _add_study(sub) -> None:
    p = sub.add_parser("study", help="run conditions x participants x seeds")
    p.add_argument("--participants", type=int, default=6)
    p.add_argument("--seeds", type=int, default=1, help="seeds per participant")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--late-prob", type=float, default=0.0)
    p.add_argument("--script", choices=("optimal", "underload", "overload"),
                   default="optimal")


def _add_replay(sub) -> None:
    p = sub.add_parser("replay", help="recompute metrics (and optionally re-derive "
                                      "downstream topics) from a bag")
    p.add_argument("--bag", required=True)
    p.add_argument("--report", action="store_true", help="print recomputed metrics")
    p.add_argument("--verify", action="store_true",
                   help="re-derive downstream topics from the sidecar config and "
                        "check them against the recording")
    p.add_argument("--speed", type=float, default=None,
                   help="wall-time replay speed multiplier (default: as fast as possible)")


def _add_bagdump(sub) -> None:
    p = sub.add_parser("bagdump", help="print a bag as line-delimited records")
    p.add_argument("--bag", required=True)


def _add_serve(sub) -> None:
    p = sub.add_parser("serve", help="start the operator gateway")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--static", help="directory of console assets to serve")


def _load_checklist_arg(path: str | None) -> dict | None:
    if path is None:
        return None
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="neuroguide")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)
    _add_study(sub)
    _add_replay(sub)
    _add_bagdump(sub)
    _add_serve(sub)
    args = parser.parse_args(argv)

    if args.command == "run":
        cfg = SessionConfig(
            condition=args.condition,
            seed=args.seed,
            checklist=_load_checklist_arg(args.checklist),
            agent=AgentProfile(base_error_prob=args.error_prob,
                               latency_mean_s=args.latency_mean),
            load_script=LoadScript.constant(args.script),
            late_prob=args.late_prob,
        )
        result = run_session(cfg, bag_path=args.out)
        print(json.dumps(result.metrics, indent=1, sort_keys=True))
        print(f"bag written to {args.out} ({len(result.bag_bytes)} bytes); "
              f"config sidecar {args.out}.json", file=sys.stderr)
        return 0

    if args.command == "study":
        cfg = StudyConfig(
            participants=args.participants,
            seeds_per_participant=args.seeds,
            late_prob=args.late_prob,
            load_script=LoadScript.constant(args.script),
        )
        report = run_study(cfg, args.out)
        print(json.dumps(report["comparisons"], indent=1, sort_keys=True))
        print(f"study artifacts in {args.out}/", file=sys.stderr)
        return 0

    if args.command == "replay":
        bag = Bag.open(args.bag)
        if args.verify:
            with open(args.bag + ".json", encoding="utf-8") as fh:
                cfg = SessionConfig.from_jsonable(json.load(fh))
            derived = rerun_from_bag(bag, cfg)
            ok = True
            for topic, rows in derived.items():
                recorded = [(e.seq, e.timestamp_ns, e.payload) for e in bag.by_topic(topic)]
                match = recorded == rows
                ok &= match
                print(f"{topic}: {'MATCH' if match else 'MISMATCH'} ({len(rows)} envelopes)")
            if not ok:
                return 1
        if args.report or not args.verify:
            print(json.dumps(metrics_from_bag(bag), indent=1, sort_keys=True))
        return 0

    if args.command == "bagdump":
        try:
            for line in bagdump_lines(Bag.open(args.bag)):
                print(line)
        except BrokenPipeError:
            sys.stderr.close()  # downstream pager closed; not an error
        return 0

    if args.command == "serve":
        from .gateway import serve

        serve(args.host, args.port, static_dir=args.static)
        return 0

    return 2  # pragma: no cover


if __name__ == "__main__":
    raise SystemExit(main())
