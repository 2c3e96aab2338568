"""Semantic memory: a small in-process triple store.

Facts are (subject, predicate, object) with an optional timestamp label
and the narrative they were distilled from. Matching is exact on
whitespace-collapsed, casefolded fields; ``None`` (or ``"?"``) acts as a
wildcard. Insertion order is preserved and duplicate triples collapse,
so query results are deterministic.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import MalformedInput

logger = logging.getLogger(__name__)


def normalize_term(text: str) -> str:
    return " ".join(str(text).split()).casefold()


@dataclass(frozen=True)
class TripleFact:
    subject: str
    predicate: str
    obj: str
    timestamp: str | None = None
    source: tuple[str, str] | None = None  # (owner, topic) it was distilled from

    def identity(self) -> tuple[str, str, str, str]:
        return (
            normalize_term(self.subject),
            normalize_term(self.predicate),
            normalize_term(self.obj),
            self.timestamp or "",
        )

    def render(self) -> str:
        stamp = f" ({self.timestamp})" if self.timestamp else ""
        return f"{self.subject} | {self.predicate} | {self.obj}{stamp}"


def _is_wildcard(term: str | None) -> bool:
    return term is None or str(term).strip() in ("", "?", "*")


class TripleStore:
    def __init__(self) -> None:
        self._facts: list[TripleFact] = []
        self._seen: set[tuple[str, str, str, str]] = set()

    def __len__(self) -> int:
        return len(self._facts)

    def facts(self) -> list[TripleFact]:
        return list(self._facts)

    def add(self, fact: TripleFact) -> bool:
        """Insert a fact; returns False when an identical one is present."""
        key = fact.identity()
        if key in self._seen:
            return False
        self._seen.add(key)
        self._facts.append(fact)
        return True

    def add_all(self, facts: Iterable[TripleFact]) -> int:
        return sum(1 for f in facts if self.add(f))

    def query(
        self,
        subject: str | None = None,
        predicate: str | None = None,
        obj: str | None = None,
    ) -> list[TripleFact]:
        """Exact-match query; wildcard fields may be None, '', '?' or '*'."""
        want_s = None if _is_wildcard(subject) else normalize_term(subject)
        want_p = None if _is_wildcard(predicate) else normalize_term(predicate)
        want_o = None if _is_wildcard(obj) else normalize_term(obj)
        out = []
        for f in self._facts:
            if want_s is not None and normalize_term(f.subject) != want_s:
                continue
            if want_p is not None and normalize_term(f.predicate) != want_p:
                continue
            if want_o is not None and normalize_term(f.obj) != want_o:
                continue
            out.append(f)
        return out

    def entity_neighborhood(self, entity: str) -> list[TripleFact]:
        """Facts whose subject or object mentions the entity.

        Exact normalized match first; when that comes up empty, fall back
        to whole-token containment so 'Caroline' still reaches facts about
        'Caroline Mercer'.
        """
        needle = normalize_term(entity)
        if not needle:
            return []
        exact = [
            f
            for f in self._facts
            if normalize_term(f.subject) == needle or normalize_term(f.obj) == needle
        ]
        if exact:
            return exact
        return [
            f
            for f in self._facts
            if needle in normalize_term(f.subject).split()
            or needle in normalize_term(f.obj).split()
        ]

    # --- serialization ---------------------------------------------------------

    def to_jsonl(self) -> str:
        lines = []
        for f in self._facts:
            lines.append(
                json.dumps(
                    {
                        "subject": f.subject,
                        "predicate": f.predicate,
                        "object": f.obj,
                        "timestamp": f.timestamp,
                        "source": list(f.source) if f.source else None,
                    },
                    sort_keys=True,
                    ensure_ascii=False,
                )
            )
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_jsonl(cls, text: str) -> TripleStore:
        store = cls()
        for ln, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                fact = TripleFact(
                    subject=d["subject"],
                    predicate=d["predicate"],
                    obj=d["object"],
                    timestamp=d.get("timestamp"),
                    source=tuple(d["source"]) if d.get("source") else None,
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise MalformedInput(f"bad triple on line {ln}: {exc}") from exc
            store.add(fact)
        return store

    @classmethod
    def load(cls, path: str | Path) -> TripleStore:
        return cls.from_jsonl(Path(path).read_text())


_LINKING_VERBS = (
    " is ", " are ", " was ", " were ", " has ", " have ", " had ",
    " likes ", " loves ", " wants ", " lives in ", " works at ", " became ",
)


def fact_to_triple(
    fact_text: str,
    owner: str,
    timestamp: str | None = None,
    source: tuple[str, str] | None = None,
) -> TripleFact:
    """Split a one-sentence fact into a triple on its first linking verb.

    Falls back to (owner, 'mentioned', fact) when no split point exists,
    so nothing distilled is ever dropped.
    """
    text = " ".join(str(fact_text).split()).rstrip(".")
    lowered = text.casefold()
    best: tuple[int, str] | None = None
    for verb in _LINKING_VERBS:
        pos = lowered.find(verb)
        if pos > 0 and (best is None or pos < best[0]):
            best = (pos, verb)
    if best is not None:
        pos, verb = best
        subject = text[:pos].strip()
        obj = text[pos + len(verb):].strip()
        if subject and obj:
            return TripleFact(
                subject=subject,
                predicate=verb.strip(),
                obj=obj,
                timestamp=timestamp,
                source=source,
            )
    return TripleFact(
        subject=owner, predicate="mentioned", obj=text, timestamp=timestamp, source=source
    )
