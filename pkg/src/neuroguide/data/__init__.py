"""Packaged fixtures: checklist documents, guidance rule table, and the
reasoner prompt corpora. All content ships as data so study-specific material
can be swapped without code changes."""

from __future__ import annotations

import json
from importlib import resources

__all__ = [
    "checklist_path",
    "load_fixture_checklist",
    "rule_table_path",
    "load_rule_table",
    "instruction_corpus",
    "few_shot_corpus",
]


def _read_text(name: str) -> str:
    return resources.files(__package__).joinpath(name).read_text(encoding="utf-8")


def checklist_path(name: str = "uh60_preflight") -> str:
    return str(resources.files(__package__).joinpath(f"checklist_{name}.json"))


def load_fixture_checklist(name: str = "uh60_preflight") -> dict:
    return json.loads(_read_text(f"checklist_{name}.json"))


def rule_table_path() -> str:
    return str(resources.files(__package__).joinpath("rule_table.json"))


def load_rule_table():
    from ..policy import RuleTable

    return RuleTable.from_json(_read_text("rule_table.json"))


def instruction_corpus() -> str:
    return _read_text("instructions.txt")


def few_shot_corpus() -> list:
    return json.loads(_read_text("few_shot.json"))
