"""Episodic memory: narratives organized as plot and subplot fragment trees.

A narrative tracks one owner/topic pair as an append-only list of
timestamped plot fragments. Consolidation groups a recent window of plot
fragments into headlined subplots; the fragments themselves never move
or mutate, subplots reference them by position.

The bank is the single mutable store. All mutation happens under one
lock so an offline worker thread and snapshot serialization can safely
interleave.
"""

from __future__ import annotations

import hashlib
import logging
import threading
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable

from .errors import CorruptSnapshot

logger = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1


def normalize_label(text: str) -> str:
    """Whitespace-collapse and casefold, for owner/topic matching."""
    return " ".join(str(text).split()).casefold()


def fragment_id_for(text: str, timestamp: datetime) -> str:
    digest = hashlib.sha256(f"{timestamp.isoformat()}|{text}".encode()).hexdigest()
    return digest[:12]


@dataclass(frozen=True)
class Fragment:
    """One timestamped piece of narrative text, traceable to source turns."""

    fragment_id: str
    text: str
    timestamp: datetime
    turn_ids: tuple[str, ...] = ()

    @classmethod
    def create(cls, text: str, timestamp: datetime, turn_ids: Iterable[str] = ()) -> Fragment:
        return cls(
            fragment_id=fragment_id_for(text, timestamp),
            text=text,
            timestamp=timestamp,
            turn_ids=tuple(turn_ids),
        )


@dataclass
class Subplot:
    headline: str
    # absolute indices into Narrative.fragments, in order
    fragment_indices: tuple[int, ...]


@dataclass
class Narrative:
    owner: str
    topic: str
    fragments: list[Fragment] = field(default_factory=list)
    subplots: list[Subplot] = field(default_factory=list)
    last_bound_iteration: int = 0
    consolidated_through: int = 0

    @property
    def key(self) -> tuple[str, str]:
        return (normalize_label(self.owner), normalize_label(self.topic))

    def is_inactive(self, current_iteration: int) -> bool:
        """A narrative is inactive once a full tick has passed without binding."""
        return self.last_bound_iteration < current_iteration - 1

    def append_fragments(self, fragments: Iterable[Fragment], iteration: int) -> None:
        self.fragments.extend(fragments)
        self.last_bound_iteration = max(self.last_bound_iteration, iteration)

    def unconsolidated_count(self) -> int:
        return len(self.fragments) - self.consolidated_through

    def consolidation_window(self, max_fragments: int) -> tuple[int, list[Fragment]]:
        """Return (window_start, fragments) for the next consolidation pass.

        The window covers unconsolidated fragments, capped to the most
        recent ``max_fragments``.
        """
        start = max(self.consolidated_through, len(self.fragments) - max_fragments)
        return start, self.fragments[start:]

    def apply_consolidation(
        self, window_start: int, items: list[tuple[str, int, int]]
    ) -> list[Subplot]:
        """Create subplots from (headline, start, end) window-relative intervals.

        Intervals are inclusive and 0-based within the window. Out-of-range
        ends are clipped; empty or fully invalid intervals are dropped with
        a warning. The window counts as consolidated regardless of coverage.
        """
        window_end = len(self.fragments)
        created: list[Subplot] = []
        for headline, lo, hi in items:
            a = window_start + lo
            b = window_start + hi
            if b >= window_end:
                logger.warning(
                    "narrative (%s, %s): clipping subplot interval [%d, %d]",
                    self.owner, self.topic, lo, hi,
                )
                b = window_end - 1
            if a < window_start:
                logger.warning(
                    "narrative (%s, %s): clipping subplot interval [%d, %d]",
                    self.owner, self.topic, lo, hi,
                )
                a = window_start
            if a > b or not str(headline).strip():
                logger.warning(
                    "narrative (%s, %s): dropping invalid subplot interval [%d, %d]",
                    self.owner, self.topic, lo, hi,
                )
                continue
            sub = Subplot(headline=str(headline).strip(), fragment_indices=tuple(range(a, b + 1)))
            self.subplots.append(sub)
            created.append(sub)
        self.consolidated_through = window_end
        return created

    def subplot_fragments(self, subplot: Subplot) -> list[Fragment]:
        return [self.fragments[i] for i in subplot.fragment_indices if i < len(self.fragments)]


class MemoryBank:
    """All narratives for one conversation, keyed by normalized (owner, topic)."""

    def __init__(self) -> None:
        self._narratives: dict[tuple[str, str], Narrative] = {}
        self._lock = threading.RLock()

    @property
    def lock(self) -> threading.RLock:
        return self._lock

    def __len__(self) -> int:
        with self._lock:
            return len(self._narratives)

    def narratives(self) -> list[Narrative]:
        with self._lock:
            return list(self._narratives.values())

    def find(self, owner: str, topic: str) -> Narrative | None:
        with self._lock:
            return self._narratives.get((normalize_label(owner), normalize_label(topic)))

    def get_or_create(self, owner: str, topic: str) -> Narrative:
        with self._lock:
            key = (normalize_label(owner), normalize_label(topic))
            narrative = self._narratives.get(key)
            if narrative is None:
                narrative = Narrative(owner=" ".join(str(owner).split()),
                                      topic=" ".join(str(topic).split()))
                self._narratives[key] = narrative
            return narrative

    def extend(
        self,
        owner: str,
        topic: str,
        texts: Iterable[str],
        timestamp: datetime,
        turn_ids: Iterable[str],
        iteration: int,
    ) -> Narrative:
        """Create-or-get the narrative and append one fragment per text.

        Appending the same texts twice appends twice; deduplication is
        deliberately not the bank's job.
        """
        turn_ids = tuple(turn_ids)
        with self._lock:
            narrative = self.get_or_create(owner, topic)
            fragments = [
                Fragment.create(text=str(t).strip(), timestamp=timestamp, turn_ids=turn_ids)
                for t in texts
                if str(t).strip()
            ]
            narrative.append_fragments(fragments, iteration)
            return narrative

    def inactive_narratives(self, current_iteration: int) -> list[Narrative]:
        with self._lock:
            return [n for n in self._narratives.values() if n.is_inactive(current_iteration)]

    def rename_topic(self, narrative: Narrative, new_topic: str) -> bool:
        """Re-key a narrative under a broader topic (consolidation may widen it).

        Refuses a rename that would collide with another narrative.
        """
        with self._lock:
            new_key = (normalize_label(narrative.owner), normalize_label(new_topic))
            old_key = narrative.key
            if new_key == old_key:
                return False
            if new_key in self._narratives:
                logger.warning(
                    "topic rename (%s -> %s) collides with an existing narrative; keeping old",
                    narrative.topic, new_topic,
                )
                return False
            del self._narratives[old_key]
            narrative.topic = " ".join(str(new_topic).split())
            self._narratives[new_key] = narrative
            return True

    # --- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        with self._lock:
            return {
                "version": SNAPSHOT_VERSION,
                "narratives": [
                    {
                        "owner": n.owner,
                        "topic": n.topic,
                        "last_bound_iteration": n.last_bound_iteration,
                        "consolidated_through": n.consolidated_through,
                        "fragments": [
                            {
                                "fragment_id": f.fragment_id,
                                "text": f.text,
                                "timestamp": f.timestamp.isoformat(),
                                "turn_ids": list(f.turn_ids),
                            }
                            for f in n.fragments
                        ],
                        "subplots": [
                            {
                                "headline": s.headline,
                                "fragment_indices": list(s.fragment_indices),
                            }
                            for s in n.subplots
                        ],
                    }
                    for n in self._narratives.values()
                ],
            }

    @classmethod
    def from_dict(cls, data: dict) -> MemoryBank:
        if not isinstance(data, dict) or "narratives" not in data:
            raise CorruptSnapshot("snapshot missing 'narratives'")
        bank = cls()
        try:
            for nd in data["narratives"]:
                narrative = Narrative(
                    owner=nd["owner"],
                    topic=nd["topic"],
                    last_bound_iteration=int(nd.get("last_bound_iteration", 0)),
                    consolidated_through=int(nd.get("consolidated_through", 0)),
                )
                for fd in nd["fragments"]:
                    narrative.fragments.append(
                        Fragment(
                            fragment_id=fd["fragment_id"],
                            text=fd["text"],
                            timestamp=datetime.fromisoformat(fd["timestamp"]),
                            turn_ids=tuple(fd.get("turn_ids", [])),
                        )
                    )
                for sd in nd.get("subplots", []):
                    narrative.subplots.append(
                        Subplot(
                            headline=sd["headline"],
                            fragment_indices=tuple(int(i) for i in sd["fragment_indices"]),
                        )
                    )
                bank._narratives[narrative.key] = narrative
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptSnapshot(f"malformed snapshot: {exc}") from exc
        return bank
