"""Text assembly for prompt sections, plus small token utilities.

Everything the engine writes into a prompt slot is formatted here so the
scripted backend, the heuristic backend, and the tests all agree on the
exact byte layout (digests depend on it).
"""

from __future__ import annotations

import re
from datetime import datetime
from typing import Iterable, Sequence

from .episodic import Fragment, MemoryBank, Narrative, Subplot
from .semantic import TripleFact
from .transcript import Turn

STOPWORDS = frozenset(
    """a an and are about as at be but by did do does for from had has have he her his
    how i in is it its me my of on or our she so that the their them they this to was
    we were what when where which who why will with you your say said tell""".split()
)


def tokenize(text: str) -> list[str]:
    return re.findall(r"[a-z0-9']+", text.casefold())


def content_tokens(text: str) -> set[str]:
    return {t for t in tokenize(text) if t not in STOPWORDS}


def format_stamp(ts: datetime) -> str:
    return ts.strftime("%Y-%m-%d %H:%M")


def format_turn(turn: Turn) -> str:
    return f"[{format_stamp(turn.timestamp)}] {turn.speaker}: {turn.text}"


def format_history(turns: Iterable[Turn]) -> str:
    return "\n".join(format_turn(t) for t in turns)


def format_fragment(fragment: Fragment) -> str:
    return f"[{format_stamp(fragment.timestamp)}] {fragment.text}"


def format_numbered_items(fragments: Sequence[Fragment]) -> str:
    """Window-relative, 0-based numbering; consolidation intervals index these."""
    return "\n".join(f"{i}. {format_fragment(f)}" for i, f in enumerate(fragments))


def binding_headlines(bank: MemoryBank) -> str:
    lines = [f"- owner: {n.owner} | topic: {n.topic}" for n in bank.narratives()]
    return "\n".join(lines) if lines else "(none)"


def coherence_headlines(bank: MemoryBank) -> str:
    """Plot headlines plus subplot headlines, in bank order.

    A subplot line carries its own headline as the topic; the suffix is
    informational and not part of the choice key.
    """
    lines: list[str] = []
    for n in bank.narratives():
        lines.append(f"- owner: {n.owner} | topic: {n.topic}")
        for s in n.subplots:
            lines.append(
                f"- owner: {n.owner} | topic: {s.headline} [sub-story of: {n.topic}]"
            )
    return "\n".join(lines) if lines else "(none)"


def substories_text(narrative: Narrative) -> str | None:
    """Existing substory listing, or None when the caller should use the
    template's fixed empty-state phrase."""
    if not narrative.subplots:
        return None
    return "\n".join(f"- {s.headline}" for s in narrative.subplots)


def story_block(narrative: Narrative) -> str:
    lines = [f"Story (owner: {narrative.owner}): {narrative.topic}"]
    lines += [f"  {format_fragment(f)}" for f in narrative.fragments]
    return "\n".join(lines)


def subplot_block(narrative: Narrative, subplot: Subplot) -> str:
    lines = [
        f"Story (owner: {narrative.owner}): {subplot.headline}"
        f" [part of: {narrative.topic}]"
    ]
    lines += [f"  {format_fragment(f)}" for f in narrative.subplot_fragments(subplot)]
    return "\n".join(lines)


def facts_text(facts: Sequence[TripleFact]) -> str:
    return "\n".join(f"- {f.render()}" for f in facts)
