"""Answer-time memory selection.

Two retrievers over the same narrative bank:

* coherence: the reasoning backend picks headlines it judges relevant
  (plot or subplot), and graph patterns translated from the question run
  against the semantic store.
* embedding: cosine similarity between the query and leaf headlines,
  episodic only. This is the comparison baseline, deliberately blind to
  narrative structure beyond the headline text.

A leaf is a subplot where subplots exist, else the whole narrative.
Choices resolve to fragment blocks by exact (owner, topic) match after
whitespace normalization; a subplot's headline is its topic. Unresolved
choices are dropped with a warning, never substituted.
"""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import requests

from .episodic import MemoryBank, Narrative, Subplot, normalize_label
from .errors import BackendError, BackendUnavailable
from .formatting import facts_text as _facts_text
from .formatting import coherence_headlines, story_block, subplot_block, tokenize
from .parsing import RetrievalChoice, TriplePattern
from .reasoner import Reasoner
from .semantic import TripleFact, TripleStore
from .transcript import count_tokens

logger = logging.getLogger(__name__)

DEFAULT_EMBEDDING_DIM = 256


@dataclass(frozen=True)
class RetrievedBlock:
    owner: str
    topic: str  # the chosen headline (subplot headline for subplot blocks)
    kind: str  # "plot" | "subplot"
    parent_topic: str | None
    text: str
    turn_ids: tuple[str, ...]
    fragment_count: int
    score: float | None = None  # embedding path only


@dataclass
class RetrievalResult:
    query: str
    retriever: str  # "coherence" | "embedding"
    k: int
    blocks: list[RetrievedBlock] = field(default_factory=list)
    facts: list[TripleFact] = field(default_factory=list)

    @property
    def retrieved_turn_ids(self) -> set[str]:
        ids = {t for b in self.blocks for t in b.turn_ids}
        return ids

    def stories_text(self) -> str:
        return "\n\n".join(b.text for b in self.blocks)

    def facts_as_text(self) -> str:
        return _facts_text(self.facts)

    @property
    def retrieved_token_count(self) -> int:
        return count_tokens(self.stories_text()) + count_tokens(self.facts_as_text())

    def trace(self) -> dict:
        return {
            "query": self.query,
            "retriever": self.retriever,
            "k": self.k,
            "choices": [
                {
                    "owner": b.owner,
                    "topic": b.topic,
                    "kind": b.kind,
                    "parent_topic": b.parent_topic,
                    "fragments": b.fragment_count,
                    "score": b.score,
                }
                for b in self.blocks
            ],
            "facts": [f.render() for f in self.facts],
            "retrieved_turn_ids": sorted(self.retrieved_turn_ids),
            "retrieved_tokens": self.retrieved_token_count,
        }


def _plot_block(n: Narrative, score: float | None = None) -> RetrievedBlock:
    seen: list[str] = []
    for f in n.fragments:
        for t in f.turn_ids:
            if t not in seen:
                seen.append(t)
    return RetrievedBlock(
        owner=n.owner,
        topic=n.topic,
        kind="plot",
        parent_topic=None,
        text=story_block(n),
        turn_ids=tuple(seen),
        fragment_count=len(n.fragments),
        score=score,
    )


def _sub_block(n: Narrative, s: Subplot, score: float | None = None) -> RetrievedBlock:
    frags = n.subplot_fragments(s)
    seen: list[str] = []
    for f in frags:
        for t in f.turn_ids:
            if t not in seen:
                seen.append(t)
    return RetrievedBlock(
        owner=n.owner,
        topic=s.headline,
        kind="subplot",
        parent_topic=n.topic,
        text=subplot_block(n, s),
        turn_ids=tuple(seen),
        fragment_count=len(frags),
        score=score,
    )


def resolve_choices(
    bank: MemoryBank, choices: list[RetrievalChoice], k: int
) -> list[RetrievedBlock]:
    """Exact-match choice resolution, deduplicated, truncated to k."""
    narratives = bank.narratives()
    blocks: list[RetrievedBlock] = []
    seen: set[tuple[str, str, str]] = set()
    for choice in choices:
        owner = normalize_label(choice.owner)
        topic = normalize_label(choice.topic)
        resolved: RetrievedBlock | None = None
        for n in narratives:
            if n.key == (owner, topic):
                resolved = _plot_block(n)
                break
        if resolved is None:
            for n in narratives:
                if normalize_label(n.owner) != owner:
                    continue
                for s in n.subplots:
                    if normalize_label(s.headline) == topic:
                        resolved = _sub_block(n, s)
                        break
                if resolved is not None:
                    break
        if resolved is None:
            logger.warning(
                "dropping unresolved retrieval choice (%s, %s)", choice.owner, choice.topic
            )
            continue
        key = (owner, topic, resolved.kind)
        if key in seen:
            continue
        seen.add(key)
        blocks.append(resolved)
        if len(blocks) == k:
            break
    return blocks


def _pattern_terms(patterns: list[TriplePattern]) -> list[str]:
    terms: list[str] = []
    for p in patterns:
        for term in (p.subject, p.obj):
            if term != "?" and term not in terms:
                terms.append(term)
    return terms


def retrieve_semantic(
    store: TripleStore, reasoner: Reasoner, question: str, k: int
) -> list[TripleFact]:
    """Graph-pattern retrieval with an entity-neighborhood fallback.

    Empty stores skip the translation call entirely. When every pattern
    comes back empty, the non-wildcard terms get one neighborhood pass.
    """
    if len(store) == 0:
        return []
    patterns = reasoner.translate(question)
    if not patterns:
        return []
    facts: list[TripleFact] = []
    seen = set()

    def take(found: list[TripleFact]) -> None:
        for f in found:
            key = f.identity()
            if key not in seen:
                seen.add(key)
                facts.append(f)

    for p in patterns:
        take(store.query(subject=p.subject, predicate=p.predicate, obj=p.obj))
    if not facts:
        for term in _pattern_terms(patterns):
            take(store.entity_neighborhood(term))
    return facts[:k]


def retrieve_coherence(
    bank: MemoryBank,
    store: TripleStore,
    reasoner: Reasoner,
    question: str,
    k: int,
) -> RetrievalResult:
    result = RetrievalResult(query=question, retriever="coherence", k=k)
    if len(bank) > 0:
        choices = reasoner.choose_stories(k, question, coherence_headlines(bank))
        result.blocks = resolve_choices(bank, choices, k)
    result.facts = retrieve_semantic(store, reasoner, question, k)
    return result


# --- embedding baseline ---------------------------------------------------------


class HashedBagEmbedding:
    """Deterministic bag-of-words embedding for offline tests and baselines.

    Tokens hash into a fixed number of buckets (blake2b), counts are
    L2-normalized. Pure: the same text always embeds identically.
    """

    kind = "deterministic-test"

    def __init__(self, dimension: int = DEFAULT_EMBEDDING_DIM) -> None:
        self.dimension = dimension
        self._cache: dict[str, np.ndarray] = {}

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") % self.dimension

    def embed_one(self, text: str) -> np.ndarray:
        cached = self._cache.get(text)
        if cached is not None:
            return cached
        vec = np.zeros(self.dimension, dtype=np.float64)
        for token in tokenize(text):
            vec[self._bucket(token)] += 1.0
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec = vec / norm
        self._cache[text] = vec
        return vec

    def embed(self, texts: list[str]) -> np.ndarray:
        return np.stack([self.embed_one(t) for t in texts]) if texts else np.zeros((0, self.dimension))


class LiveEmbeddingProvider:
    """Generic text-embedding HTTP client: {model, input} -> data[i].embedding."""

    kind = "live"

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "STORYMEM_API_KEY",
        timeout: float = 30.0,
        dimension: int | None = None,
    ) -> None:
        self._endpoint = endpoint
        self._model = model
        self._api_key_env = api_key_env
        self._timeout = timeout
        self.dimension = dimension or 0
        self._session = requests.Session()

    def embed(self, texts: list[str]) -> np.ndarray:
        token = os.environ.get(self._api_key_env)
        if not token:
            raise BackendUnavailable(f"credential env var {self._api_key_env} is not set")
        try:
            resp = self._session.post(
                self._endpoint,
                json={"model": self._model, "input": texts},
                headers={"Authorization": f"Bearer {token}"},
                timeout=self._timeout,
            )
        except requests.RequestException as exc:
            raise BackendUnavailable(f"embedding transport failure: {exc}") from exc
        if resp.status_code >= 400:
            raise BackendError(f"embedding HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()["data"]
            vectors = [row["embedding"] for row in data]
        except (ValueError, KeyError, TypeError) as exc:
            raise BackendError(f"malformed embedding response: {exc}") from exc
        arr = np.asarray(vectors, dtype=np.float64)
        if self.dimension == 0 and arr.size:
            self.dimension = arr.shape[1]
        return arr

    def embed_one(self, text: str) -> np.ndarray:
        return self.embed([text])[0]


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def _leaves(bank: MemoryBank) -> list[tuple[Narrative, Subplot | None]]:
    leaves: list[tuple[Narrative, Subplot | None]] = []
    for n in bank.narratives():
        if n.subplots:
            leaves.extend((n, s) for s in n.subplots)
        else:
            leaves.append((n, None))
    return leaves


def retrieve_embedding(
    bank: MemoryBank, provider, question: str, k: int
) -> RetrievalResult:
    """Top-k leaves by cosine(query, leaf headline); ties keep bank order."""
    result = RetrievalResult(query=question, retriever="embedding", k=k)
    leaves = _leaves(bank)
    if not leaves:
        return result
    qvec = provider.embed_one(question)
    scored = []
    for idx, (n, s) in enumerate(leaves):
        headline = s.headline if s is not None else n.topic
        score = cosine(qvec, provider.embed_one(headline))
        scored.append((-score, idx, n, s))
    scored.sort(key=lambda row: (row[0], row[1]))
    for neg_score, _, n, s in scored[:k]:
        if s is None:
            result.blocks.append(_plot_block(n, score=-neg_score))
        else:
            result.blocks.append(_sub_block(n, s, score=-neg_score))
    return result


def similarity_report(question: str, choice_a: str, choice_b: str, provider) -> tuple[float, float]:
    qvec = provider.embed_one(question)
    return (
        cosine(qvec, provider.embed_one(choice_a)),
        cosine(qvec, provider.embed_one(choice_b)),
    )
