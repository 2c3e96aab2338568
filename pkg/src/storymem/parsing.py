"""Lenient extraction of structured verdicts from model completions.

Completions mix JSON and Python-literal conventions, wrap payloads in
code fences, and lead with prose. The extractor scans for balanced
list/dict regions (string-aware, so brackets inside quoted values do not
confuse it), tries each region as JSON, then as a Python literal, then
as a Python literal with bare json keywords mapped, and returns the
first region that also matches the expected verdict shape.

Failures are typed: ParseFailure when no literal exists at all,
SchemaMismatch when literals exist but none has the right shape.
Nothing is ever silently invented.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterator

from .errors import ParseFailure, SchemaMismatch
from .prompts import PromptKind

_OPENERS = {"[": "]", "{": "}", "(": ")"}
_CLOSERS = {"]", "}", ")"}


# --- verdict types ----------------------------------------------------------------


@dataclass(frozen=True)
class InitStory:
    owner: str
    topic: str
    content: tuple[str, ...]


@dataclass(frozen=True)
class BindingDecision:
    message_excerpt: str
    action: str  # "extend_story" | "create_new_story"
    owner: str
    topic: str


@dataclass(frozen=True)
class SubstorySpec:
    sub_topic: str
    interval: tuple[int, int]  # inclusive, window-relative


@dataclass(frozen=True)
class ConsolidationVerdict:
    substories: tuple[SubstorySpec, ...]
    new_topic: str | None = None


@dataclass(frozen=True)
class FactItem:
    fact: str
    timestamp: str | None = None


@dataclass(frozen=True)
class RetrievalChoice:
    owner: str
    topic: str


@dataclass(frozen=True)
class TriplePattern:
    subject: str
    predicate: str
    obj: str


class Judgment(Enum):
    CORRECT = "CORRECT"
    WRONG = "WRONG"


# --- literal extraction ------------------------------------------------------------


def _scan_balanced(text: str, start: int) -> int | None:
    """Index of the closer matching text[start], or None if unbalanced."""
    stack: list[str] = []
    quote: str | None = None
    escaped = False
    for i in range(start, len(text)):
        c = text[i]
        if quote is not None:
            if escaped:
                escaped = False
            elif c == "\\":
                escaped = True
            elif c == quote:
                quote = None
            continue
        if c in ("'", '"'):
            quote = c
        elif c in _OPENERS:
            stack.append(_OPENERS[c])
        elif c in _CLOSERS:
            if not stack or c != stack[-1]:
                return None
            stack.pop()
            if not stack:
                return i
    return None


def iter_literal_regions(text: str) -> Iterator[str]:
    """Yield balanced [..]/{..} substrings, outermost first, overlapping allowed."""
    i = 0
    while i < len(text):
        if text[i] in "[{":
            end = _scan_balanced(text, i)
            if end is not None:
                yield text[i : end + 1]
        i += 1


def _map_bare_json_words(text: str) -> str:
    """Rewrite null/true/false outside string literals so ast can eat them."""
    out: list[str] = []
    quote: str | None = None
    escaped = False
    seg_start = 0
    repl = {"null": "None", "true": "True", "false": "False"}

    def fix(segment: str) -> str:
        return re.sub(
            r"\b(null|true|false)\b", lambda m: repl[m.group(1)], segment
        )

    for i, c in enumerate(text):
        if quote is not None:
            if escaped:
                escaped = False
            elif c == "\\":
                escaped = True
            elif c == quote:
                out.append(text[seg_start : i + 1])
                quote = None
                seg_start = i + 1
            continue
        if c in ("'", '"'):
            out.append(fix(text[seg_start:i]))
            quote = c
            seg_start = i
    out.append(text[seg_start:] if quote is not None else fix(text[seg_start:]))
    return "".join(out)


def try_parse_literal(region: str):
    """JSON first, then Python literal, then Python literal with json words."""
    for attempt in (
        lambda: json.loads(region),
        lambda: ast.literal_eval(region),
        lambda: ast.literal_eval(_map_bare_json_words(region)),
    ):
        try:
            return attempt()
        except (ValueError, SyntaxError, TypeError, MemoryError, RecursionError):
            continue
    raise ValueError("not a literal")


# --- per-kind coercion --------------------------------------------------------------


class _Mismatch(Exception):
    pass


def _as_text(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, float)):
        return str(value)
    raise _Mismatch(f"expected text, got {type(value).__name__}")


def _as_items(value, what: str) -> list:
    if isinstance(value, (list, tuple)):
        return list(value)
    if isinstance(value, dict):
        return [value]  # a bare object where a list was asked for
    raise _Mismatch(f"{what}: expected a list")


def _coerce_init(value) -> list[InitStory]:
    stories = []
    for item in _as_items(value, "stories"):
        if not isinstance(item, dict):
            raise _Mismatch("story is not a dict")
        try:
            raw_content = item["content"]
        except KeyError:
            raise _Mismatch("story missing 'content'") from None
        if isinstance(raw_content, (list, tuple)):
            content = tuple(_as_text(c) for c in raw_content)
        else:
            content = (_as_text(raw_content),)
        try:
            stories.append(
                InitStory(
                    owner=_as_text(item["owner"]).strip(),
                    topic=_as_text(item["topic"]).strip(),
                    content=content,
                )
            )
        except KeyError as exc:
            raise _Mismatch(f"story missing {exc}") from None
    return stories


_ACTIONS = {"extend_story", "create_new_story"}


def _coerce_binding(value) -> list[BindingDecision]:
    decisions = []
    for item in _as_items(value, "decisions"):
        if not isinstance(item, dict):
            raise _Mismatch("decision is not a dict")
        action = str(item.get("action", "")).strip().casefold()
        if action not in _ACTIONS:
            raise _Mismatch(f"unknown action {item.get('action')!r}")
        try:
            decisions.append(
                BindingDecision(
                    message_excerpt=_as_text(item.get("message_excerpt", "")),
                    action=action,
                    owner=_as_text(item["owner"]).strip(),
                    topic=_as_text(item["topic"]).strip(),
                )
            )
        except KeyError as exc:
            raise _Mismatch(f"decision missing {exc}") from None
    return decisions


def _coerce_interval(value) -> tuple[int, int]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise _Mismatch(f"interval must be a pair, got {value!r}")
    try:
        a, b = int(value[0]), int(value[1])
    except (TypeError, ValueError):
        raise _Mismatch(f"non-integer interval {value!r}") from None
    if a > b:
        raise _Mismatch(f"inverted interval ({a}, {b})")
    return (a, b)


def _coerce_consolidation(value) -> ConsolidationVerdict:
    if isinstance(value, list) and len(value) == 1 and isinstance(value[0], dict):
        value = value[0]
    if not isinstance(value, dict) or "substories" not in value:
        raise _Mismatch("expected a dict with 'substories'")
    subs = []
    for item in _as_items(value["substories"], "substories"):
        if not isinstance(item, dict):
            raise _Mismatch("substory is not a dict")
        topic = item.get("sub_topic", item.get("topic"))
        if topic is None:
            raise _Mismatch("substory missing 'sub_topic'")
        interval = item.get("indice", item.get("indices", item.get("interval")))
        if interval is None:
            raise _Mismatch("substory missing 'indice'")
        subs.append(
            SubstorySpec(sub_topic=_as_text(topic).strip(), interval=_coerce_interval(interval))
        )
    new_topic = value.get("new_topic")
    if isinstance(new_topic, str) and not new_topic.strip():
        new_topic = None
    if new_topic is not None and not isinstance(new_topic, str):
        raise _Mismatch(f"new_topic must be text or None, got {new_topic!r}")
    return ConsolidationVerdict(substories=tuple(subs), new_topic=new_topic)


def _coerce_facts(value) -> list[FactItem]:
    facts = []
    for item in _as_items(value, "facts"):
        if not isinstance(item, dict) or "fact" not in item:
            raise _Mismatch("fact item is not a dict with 'fact'")
        stamp = item.get("timestamp")
        facts.append(
            FactItem(
                fact=_as_text(item["fact"]).strip(),
                timestamp=None if stamp is None else _as_text(stamp).strip(),
            )
        )
    return facts


def _coerce_choices(value) -> list[RetrievalChoice]:
    choices = []
    for item in _as_items(value, "choices"):
        if not isinstance(item, dict):
            raise _Mismatch("choice is not a dict")
        try:
            choices.append(
                RetrievalChoice(
                    owner=_as_text(item["owner"]).strip(),
                    topic=_as_text(item["topic"]).strip(),
                )
            )
        except KeyError as exc:
            raise _Mismatch(f"choice missing {exc}") from None
    return choices


def _coerce_patterns(value) -> list[TriplePattern]:
    patterns = []
    for item in _as_items(value, "patterns"):
        if not isinstance(item, dict):
            raise _Mismatch("pattern is not a dict")
        keys = {"subject", "predicate", "object", "obj"}
        if not keys & item.keys():
            raise _Mismatch("pattern has no triple keys")
        patterns.append(
            TriplePattern(
                subject=_as_text(item.get("subject", "?")).strip() or "?",
                predicate=_as_text(item.get("predicate", "?")).strip() or "?",
                obj=_as_text(item.get("object", item.get("obj", "?"))).strip() or "?",
            )
        )
    return patterns


def _coerce_judgment(value) -> Judgment:
    if not isinstance(value, dict):
        raise _Mismatch("judge output must be a dict")
    label = None
    for key, val in value.items():
        if str(key).strip().casefold() == "label":
            label = val
            break
    if label is None:
        raise _Mismatch("judge dict has no 'label'")
    word = str(label).strip().casefold()
    if word == "correct":
        return Judgment.CORRECT
    if word == "wrong":
        return Judgment.WRONG
    raise _Mismatch(f"label must be CORRECT or WRONG, got {label!r}")


_COERCERS = {
    PromptKind.STORY_INIT: _coerce_init,
    PromptKind.MEMORY_BINDING: _coerce_binding,
    PromptKind.CONSOLIDATION: _coerce_consolidation,
    PromptKind.SEMANTICIZATION: _coerce_facts,
    PromptKind.COHERENCE_RETRIEVE: _coerce_choices,
    PromptKind.GRAPH_QUERY_TRANSLATE: _coerce_patterns,
    PromptKind.JUDGE: _coerce_judgment,
}


def parse_structured(kind: PromptKind, raw: str):
    """Extract the typed verdict for `kind` from a raw completion.

    Tries every balanced literal region in order and returns the first
    one that matches the expected shape. Answer completions are free
    text and pass through unchanged.
    """
    if kind is PromptKind.ANSWER:
        return raw
    coerce = _COERCERS[kind]
    found_literal = False
    last_reason = "wrong shape"
    for region in iter_literal_regions(raw):
        try:
            value = try_parse_literal(region)
        except ValueError:
            continue
        found_literal = True
        try:
            return coerce(value)
        except _Mismatch as exc:
            last_reason = str(exc)
            continue
    if found_literal:
        raise SchemaMismatch(f"{kind.value}: {last_reason}")
    raise ParseFailure(f"{kind.value}: no structured payload in completion")


# --- canonical serialization (for round-trip checks and scripted fixtures) -----------


def to_canonical(kind: PromptKind, verdict) -> str:
    """Render a verdict the way the templates ask for it (Python literals)."""
    if kind is PromptKind.STORY_INIT:
        return repr(
            [
                {"owner": s.owner, "topic": s.topic, "content": list(s.content)}
                for s in verdict
            ]
        )
    if kind is PromptKind.MEMORY_BINDING:
        return repr(
            [
                {
                    "message_excerpt": d.message_excerpt,
                    "action": d.action,
                    "topic": d.topic,
                    "owner": d.owner,
                }
                for d in verdict
            ]
        )
    if kind is PromptKind.CONSOLIDATION:
        return repr(
            {
                "substories": [
                    {"sub_topic": s.sub_topic, "indice": tuple(s.interval)}
                    for s in verdict.substories
                ],
                "new_topic": verdict.new_topic,
            }
        )
    if kind is PromptKind.SEMANTICIZATION:
        return repr([{"fact": f.fact, "timestamp": f.timestamp} for f in verdict])
    if kind is PromptKind.COHERENCE_RETRIEVE:
        return repr([{"owner": c.owner, "topic": c.topic} for c in verdict])
    if kind is PromptKind.GRAPH_QUERY_TRANSLATE:
        return repr(
            [
                {"subject": p.subject, "predicate": p.predicate, "object": p.obj}
                for p in verdict
            ]
        )
    if kind is PromptKind.JUDGE:
        return json.dumps({"label": verdict.value})
    return str(verdict)
