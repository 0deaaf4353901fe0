"""Guidance selection: cognitive context in, modality/load decision out.

A complete 28-rule table (27 facet-state combinations plus one error-context
override) maps the rolling workload summary to a modality subset and an
information load. Decisions follow worst-facet-dominates precedence: any
overloaded facet pulls guidance toward sparse visual cueing with essential
content; otherwise any underloaded facet pulls toward rich multimodal,
comprehensive content; an all-optimal pilot gets the balanced visual+audio mix.

An external reasoner can sit in front of the table: it receives a prompt
bundle (instructions, few-shot examples, serialized real-time context) and
must answer in the labeled grammar REASONING/MODALITY/LOAD/MESSAGE. Anything
else - malformed output, bad modality tokens, timeouts, transport errors -
falls back to the rule table, so the adaptive condition always produces a
decision inside the cadence budget.
"""

from __future__ import annotations

import itertools
import json
import os
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass, field

from .classifier import CLASSES, FACETS, OPTIMAL, OVERLOAD, UNDERLOAD
from .tasks import StepSpec

__all__ = [
    "VISUAL",
    "AUDIO",
    "TEXT",
    "MODALITY_SUBSETS",
    "LOADS",
    "GuidanceDecision",
    "StrategyRule",
    "RuleTable",
    "build_default_rule_table",
    "CognitiveContext",
    "select_strategy",
    "compose_message",
    "PromptBundle",
    "build_prompt",
    "render_realtime",
    "parse_realtime",
    "parse_reasoner_output",
    "decide",
    "HttpReasonerBackend",
    "TranscriptRecorder",
    "TranscriptReplayBackend",
    "RuleTableError",
    "NoMatchingRule",
    "MissingVariant",
    "CorpusMissing",
    "ParseFailure",
    "InvalidModalityToken",
]

VISUAL = "visual"
AUDIO = "audio"
TEXT = "text"
_MODALITY_ORDER = (VISUAL, AUDIO, TEXT)
# The seven nonempty subsets of {visual, audio, text}, canonical order.
MODALITY_SUBSETS = tuple(
    tuple(m for m in _MODALITY_ORDER if m in combo)
    for size in (1, 2, 3)
    for combo in itertools.combinations(_MODALITY_ORDER, size)
)

ESSENTIAL = "essential"
STANDARD = "standard"
COMPREHENSIVE = "comprehensive"
LOADS = (ESSENTIAL, STANDARD, COMPREHENSIVE)

SOURCE_RULES = "rule_table"
SOURCE_REASONER = "reasoner"
SOURCE_RANDOM = "random"


class RuleTableError(ValueError):
    pass


class NoMatchingRule(LookupError):
    pass


class MissingVariant(KeyError):
    pass


class CorpusMissing(ValueError):
    pass


class ParseFailure(ValueError):
    pass


class InvalidModalityToken(ParseFailure):
    pass


@dataclass(frozen=True)
class GuidanceDecision:
    modalities: tuple
    load: str
    message_text: str
    visual_target: str | None
    reasoning: str
    source: str

    def validate(self) -> None:
        if not self.modalities:
            raise ValueError("modalities must be a nonempty subset")
        for m in self.modalities:
            if m not in _MODALITY_ORDER:
                raise ValueError(f"unknown modality {m!r}")
        if self.load not in LOADS:
            raise ValueError(f"unknown load {self.load!r}")
        if VISUAL in self.modalities and not self.visual_target:
            raise ValueError("visual modality requires a visual_target")
        if (TEXT in self.modalities or AUDIO in self.modalities) and not self.message_text:
            raise ValueError("text/audio modalities require message_text")

    def to_payload(self) -> dict:
        return {
            "modalities": list(self.modalities),
            "load": self.load,
            "message_text": self.message_text,
            "visual_target": self.visual_target,
            "reasoning": self.reasoning,
            "source": self.source,
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "GuidanceDecision":
        return cls(
            tuple(obj["modalities"]), obj["load"], obj["message_text"],
            obj.get("visual_target"), obj.get("reasoning", ""), obj["source"],
        )


@dataclass(frozen=True)
class StrategyRule:
    """Pattern over per-facet states (or "*") plus an optional error-context
    flag; higher priority wins among matches."""

    name: str
    memory: str
    attention: str
    perception: str
    error_context: bool | None
    modalities: tuple
    load: str
    priority: int
    drop_audio_on_gaze: bool = False

    def matches(self, summary: dict, error_context: bool) -> bool:
        if self.error_context is not None and self.error_context != error_context:
            return False
        for facet, want in (
            ("memory", self.memory),
            ("attention", self.attention),
            ("perception", self.perception),
        ):
            if want != "*" and summary[facet] != want:
                return False
        return True

    def to_jsonable(self) -> dict:
        return {
            "name": self.name,
            "pattern": {
                "memory": self.memory,
                "attention": self.attention,
                "perception": self.perception,
                "error_context": self.error_context,
            },
            "decision": {"modalities": list(self.modalities), "load": self.load},
            "priority": self.priority,
            "drop_audio_on_gaze": self.drop_audio_on_gaze,
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "StrategyRule":
        pat = obj["pattern"]
        dec = obj["decision"]
        return cls(
            name=obj["name"],
            memory=pat["memory"],
            attention=pat["attention"],
            perception=pat["perception"],
            error_context=pat.get("error_context"),
            modalities=tuple(dec["modalities"]),
            load=dec["load"],
            priority=obj["priority"],
            drop_audio_on_gaze=obj.get("drop_audio_on_gaze", False),
        )


class RuleTable:
    def __init__(self, rules):
        self.rules = sorted(rules, key=lambda r: -r.priority)
        self.validate()

    def validate(self) -> None:
        priorities = [r.priority for r in self.rules]
        if len(set(priorities)) != len(priorities):
            raise RuleTableError("rule priorities must be unique")
        for combo in itertools.product(CLASSES, repeat=3):
            summary = dict(zip(FACETS, combo))
            for error_context in (False, True):
                if not any(r.matches(summary, error_context) for r in self.rules):
                    raise RuleTableError(
                        f"no rule covers {summary} error_context={error_context}"
                    )

    def select(self, summary: dict, error_context: bool) -> StrategyRule:
        for rule in self.rules:
            if rule.matches(summary, error_context):
                return rule
        raise NoMatchingRule(str(summary))  # unreachable after validate()

    def to_json(self) -> str:
        return json.dumps(
            {"rules": [r.to_jsonable() for r in self.rules]}, indent=1, sort_keys=True
        )

    @classmethod
    def from_json(cls, text: str) -> "RuleTable":
        obj = json.loads(text)
        return cls([StrategyRule.from_jsonable(r) for r in obj["rules"]])

    @classmethod
    def load(cls, path: str) -> "RuleTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _combo_decision(memory: str, attention: str, perception: str):
    states = (memory, attention, perception)
    n_over = states.count(OVERLOAD)
    n_under = states.count(UNDERLOAD)
    if n_over >= 2:
        return (VISUAL,), ESSENTIAL, False
    if n_over == 1:
        # Single overloaded facet: visual plus minimal audio (essential text
        # spoken, nothing written).
        return (VISUAL, AUDIO), ESSENTIAL, False
    if n_under == 3:
        return (VISUAL, AUDIO, TEXT), COMPREHENSIVE, False
    if n_under >= 1:
        return (VISUAL, TEXT), COMPREHENSIVE, False
    # All optimal: balanced visual+audio; skip the audio nudge when the pilot
    # already looks at the target.
    return (VISUAL, AUDIO), STANDARD, True


def build_default_rule_table() -> RuleTable:
    """27 facet-combination rules plus the error-context override (28 rules).

    The published strategy table is supplementary material; this construction
    instantiates the documented scenario principles so the real table can be
    dropped in via RuleTable.load().
    """
    rules = []
    priority = 1
    for memory, attention, perception in itertools.product(CLASSES, repeat=3):
        modalities, load, gaze_drop = _combo_decision(memory, attention, perception)
        rules.append(
            StrategyRule(
                name=f"s{priority:02d}_{memory[:2]}_{attention[:2]}_{perception[:2]}",
                memory=memory,
                attention=attention,
                perception=perception,
                error_context=None,
                modalities=modalities,
                load=load,
                priority=priority,
                drop_audio_on_gaze=gaze_drop,
            )
        )
        priority += 1
    # Error override: immediate corrective cue, integrated audio+visual, terse.
    rules.append(
        StrategyRule(
            name="s28_error_correction",
            memory="*",
            attention="*",
            perception="*",
            error_context=True,
            modalities=(VISUAL, AUDIO),
            load=ESSENTIAL,
            priority=100,
        )
    )
    return RuleTable(rules)


@dataclass
class CognitiveContext:
    """Real-time context for one guidance decision."""

    workload_summary: dict  # facet -> state over the trailing 10 s
    procedure_id: str
    step_id: str
    instruction: str
    gaze_focus: str | None = None
    recent_events: list = field(default_factory=list)
    error_context: bool = False


def compose_message(step: StepSpec, load: str) -> str:
    """Load-level message for a step; the three variants are prefix-contained
    (command <= +context <= +environment) by construction."""
    if load not in LOADS:
        raise MissingVariant(load)
    for block in ("command", "context", "environment"):
        if not getattr(step, block, None):
            raise MissingVariant(f"step {step.id} lacks message block {block!r}")
    return step.message(load)


def select_strategy(ctx: CognitiveContext, rules: RuleTable, step: StepSpec) -> GuidanceDecision:
    rule = rules.select(ctx.workload_summary, ctx.error_context)
    modalities = rule.modalities
    if (
        rule.drop_audio_on_gaze
        and ctx.gaze_focus is not None
        and ctx.gaze_focus == step.target_control
        and AUDIO in modalities
        and len(modalities) > 1
    ):
        modalities = tuple(m for m in modalities if m != AUDIO)
    decision = GuidanceDecision(
        modalities=modalities,
        load=rule.load,
        message_text=compose_message(step, rule.load),
        visual_target=step.target_control if VISUAL in modalities else None,
        reasoning=(
            f"rule {rule.name}: memory={ctx.workload_summary['memory']} "
            f"attention={ctx.workload_summary['attention']} "
            f"perception={ctx.workload_summary['perception']} "
            f"error_context={ctx.error_context}"
        ),
        source=SOURCE_RULES,
    )
    decision.validate()
    return decision


# -- prompting ----------------------------------------------------------------


@dataclass(frozen=True)
class PromptBundle:
    instructions: str
    few_shot: tuple
    realtime: str

    def render(self) -> str:
        shots = "\n\n".join(
            f"EXAMPLE {i + 1}\nINPUT:\n{s['input']}\nREASONING: {s['reasoning']}\n"
            f"MODALITY: {s['modality']}\nLOAD: {s['load']}\nMESSAGE: {s['message']}"
            for i, s in enumerate(self.few_shot)
        )
        return (
            f"{self.instructions.rstrip()}\n\n{shots}\n\nCURRENT:\n{self.realtime}\n"
            "Answer with REASONING, MODALITY, LOAD and MESSAGE lines."
        )

    def to_payload(self) -> dict:
        return {
            "instructions": self.instructions,
            "few_shot": list(self.few_shot),
            "realtime": self.realtime,
        }


def render_realtime(ctx: CognitiveContext) -> str:
    """Fixed field order; parse_realtime() is its inverse."""
    return (
        "WORKLOAD: "
        f"memory={ctx.workload_summary['memory']} "
        f"attention={ctx.workload_summary['attention']} "
        f"perception={ctx.workload_summary['perception']}\n"
        f"TASK: procedure={ctx.procedure_id} step={ctx.step_id} "
        f"instruction={ctx.instruction}\n"
        f"GAZE: {ctx.gaze_focus if ctx.gaze_focus is not None else 'none'}\n"
        f"ERROR_CONTEXT: {'yes' if ctx.error_context else 'no'}"
    )


def parse_realtime(text: str) -> CognitiveContext:
    fields = {}
    for line in text.strip().splitlines():
        key, _, value = line.partition(":")
        fields[key.strip()] = value.strip()
    try:
        workload = dict(
            part.split("=", 1) for part in fields["WORKLOAD"].split()
        )
        task = fields["TASK"]
        proc, rest = task.split(" step=", 1)
        step_id, instruction = rest.split(" instruction=", 1)
        gaze = fields["GAZE"]
        return CognitiveContext(
            workload_summary=workload,
            procedure_id=proc.removeprefix("procedure="),
            step_id=step_id,
            instruction=instruction,
            gaze_focus=None if gaze == "none" else gaze,
            error_context=fields.get("ERROR_CONTEXT", "no") == "yes",
        )
    except (KeyError, ValueError) as exc:
        raise ParseFailure(f"malformed realtime section: {exc}") from exc


def build_prompt(ctx: CognitiveContext, instructions: str, few_shot) -> PromptBundle:
    if not instructions or not instructions.strip():
        raise CorpusMissing("instruction corpus is empty")
    shots = tuple(few_shot)
    if not shots:
        raise CorpusMissing("few-shot corpus is empty")
    for shot in shots:
        missing = {"input", "reasoning", "modality", "load", "message"} - set(shot)
        if missing:
            raise CorpusMissing(f"few-shot example missing {sorted(missing)}")
    return PromptBundle(instructions=instructions, few_shot=shots,
                        realtime=render_realtime(ctx))


# -- reasoner output ------------------------------------------------------------

_TOKEN_TO_MODALITY = {
    "visual": VISUAL,
    "audio": AUDIO,
    "auditory": AUDIO,
    "voice": AUDIO,
    "text": TEXT,
    "textual": TEXT,
}


def parse_reasoner_output(text: str) -> dict:
    """Parse the labeled grammar into {reasoning, modalities, load, message}.

    Raises ParseFailure (or its subtype InvalidModalityToken) on anything that
    does not conform; callers fall back to the rule table.
    """
    if not isinstance(text, str) or not text.strip():
        raise ParseFailure("empty reasoner output")
    fields: dict[str, str] = {}
    current: str | None = None
    for raw_line in text.splitlines():
        line = raw_line.strip()
        if not line:
            continue
        head, sep, rest = line.partition(":")
        key = head.strip().upper()
        if sep and key in ("REASONING", "MODALITY", "LOAD", "MESSAGE"):
            fields[key] = rest.strip()
            current = key
        elif current == "REASONING":
            fields[current] += " " + line
        # stray text outside the grammar is ignored unless it precedes any label
    for required in ("MODALITY", "LOAD"):
        if required not in fields:
            raise ParseFailure(f"missing {required} field")
    tokens = [
        t for t in fields["MODALITY"].replace("+", " ").replace(",", " ").replace("/", " ").split()
        if t
    ]
    if not tokens:
        raise ParseFailure("no modality tokens")
    modalities = []
    for token in tokens:
        norm = token.strip().lower()
        if norm in ("minimal", "and", "with", "cue", "cues", "only", "prompt", "prompts"):
            continue
        if norm not in _TOKEN_TO_MODALITY:
            raise InvalidModalityToken(token)
        m = _TOKEN_TO_MODALITY[norm]
        if m not in modalities:
            modalities.append(m)
    if not modalities:
        raise ParseFailure("no modality tokens")
    load = fields["LOAD"].strip().lower()
    if load not in LOADS:
        raise ParseFailure(f"unknown load {fields['LOAD']!r}")
    return {
        "reasoning": fields.get("REASONING", ""),
        "modalities": tuple(m for m in _MODALITY_ORDER if m in modalities),
        "load": load,
        "message": fields.get("MESSAGE", ""),
    }


# -- backends -------------------------------------------------------------------


class HttpReasonerBackend:
    """POSTs the prompt bundle as JSON to an external endpoint and returns the
    raw completion text. Endpoint and model come from the environment unless
    given explicitly (NEUROGUIDE_REASONER_URL / NEUROGUIDE_REASONER_MODEL)."""

    def __init__(self, url: str | None = None, model: str | None = None,
                 timeout_s: float = 2.0):
        self.url = url or os.environ.get("NEUROGUIDE_REASONER_URL", "")
        self.model = model or os.environ.get("NEUROGUIDE_REASONER_MODEL", "phi-3")
        self.timeout_s = timeout_s
        if not self.url:
            raise ValueError("reasoner URL not configured")

    def query(self, bundle: PromptBundle) -> str:
        body = json.dumps(
            {"model": self.model, "prompt": bundle.to_payload()}
        ).encode("utf-8")
        req = urllib.request.Request(
            self.url, data=body, headers={"Content-Type": "application/json"}
        )
        with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
            payload = json.loads(resp.read().decode("utf-8"))
        return payload.get("text", "")


class TranscriptRecorder:
    """Wraps a backend, recording (prompt, response) pairs for replay."""

    def __init__(self, backend, path: str):
        self.backend = backend
        self.path = path
        self._fh = open(path, "a", encoding="utf-8")

    def query(self, bundle: PromptBundle) -> str:
        text = self.backend.query(bundle)
        self._fh.write(
            json.dumps({"prompt": bundle.render(), "response": text},
                       sort_keys=True) + "\n"
        )
        self._fh.flush()
        return text

    def close(self) -> None:
        self._fh.close()


class TranscriptReplayBackend:
    """Replays recorded responses in order, verifying prompt agreement."""

    def __init__(self, path: str):
        with open(path, encoding="utf-8") as fh:
            self._entries = [json.loads(line) for line in fh if line.strip()]
        self._cursor = 0

    def query(self, bundle: PromptBundle) -> str:
        if self._cursor >= len(self._entries):
            raise ParseFailure("transcript exhausted")
        entry = self._entries[self._cursor]
        self._cursor += 1
        if entry["prompt"] != bundle.render():
            raise ParseFailure("transcript prompt mismatch")
        return entry["response"]


# -- top-level decision ----------------------------------------------------------

_EXECUTOR: ThreadPoolExecutor | None = None


def _executor() -> ThreadPoolExecutor:
    global _EXECUTOR
    if _EXECUTOR is None:
        _EXECUTOR = ThreadPoolExecutor(max_workers=2)
    return _EXECUTOR


def decide(
    ctx: CognitiveContext,
    step: StepSpec,
    condition: str,
    rules: RuleTable,
    rng=None,
    backend=None,
    prompt_corpus: tuple | None = None,
    timeout_s: float = 2.0,
    random_mode: str = "subsets",
) -> GuidanceDecision | None:
    """Condition-dependent decision.

    baseline: no guidance (error dashboard only). random: seeded uniform draw
    over the seven nonempty modality subsets (or three singletons when
    random_mode="singletons") at standard load. adaptive: reasoner backend when
    configured, rule table otherwise and on any backend failure or timeout.
    """
    if condition == "baseline":
        return None
    if condition == "random":
        if rng is None:
            raise ValueError("random condition requires a seeded rng")
        pool = (
            MODALITY_SUBSETS
            if random_mode == "subsets"
            else tuple((m,) for m in _MODALITY_ORDER)
        )
        modalities = pool[int(rng.integers(len(pool)))]
        decision = GuidanceDecision(
            modalities=modalities,
            load=STANDARD,
            message_text=compose_message(step, STANDARD),
            visual_target=step.target_control if VISUAL in modalities else None,
            reasoning="random condition draw",
            source=SOURCE_RANDOM,
        )
        decision.validate()
        return decision
    if condition != "adaptive":
        raise ValueError(f"unknown condition {condition!r}")

    if backend is not None:
        try:
            instructions, few_shot = prompt_corpus if prompt_corpus else _default_corpus()
            bundle = build_prompt(ctx, instructions, few_shot)
            future = _executor().submit(backend.query, bundle)
            text = future.result(timeout=timeout_s)
            parsed = parse_reasoner_output(text)
            message = parsed["message"] or compose_message(step, parsed["load"])
            decision = GuidanceDecision(
                modalities=parsed["modalities"],
                load=parsed["load"],
                message_text=message,
                visual_target=step.target_control
                if VISUAL in parsed["modalities"]
                else None,
                reasoning=parsed["reasoning"],
                source=SOURCE_REASONER,
            )
            decision.validate()
            return decision
        except (ParseFailure, FutureTimeout, ValueError, OSError):
            pass  # fall back to the deterministic table
    return select_strategy(ctx, rules, step)


def _default_corpus():
    from . import data

    return data.instruction_corpus(), data.few_shot_corpus()
