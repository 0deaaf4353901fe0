"""neuroguide: closed-loop neuroadaptive checklist guidance.

Streaming fNIRS preprocessing, per-facet workload classification, procedural
task tracking, rule-based (optionally reasoner-backed) guidance selection, and
a deterministic record/replay bus, runnable fully headless with simulated
pilots or human-in-the-loop through the gateway and web console.
"""

__version__ = "0.1.0"
