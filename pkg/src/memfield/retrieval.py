"""Composite-score retrieval: similarity, field amplitude, importance, recency.

Candidates come from an exhaustive cosine scan (top 4k), then each is
rescored as w1*sim + w2*field + w3*importance + w4*recency with all four
components normalized to [0, 1].  With weights (1, 0, 0, 0) the whole
pipeline collapses to plain cosine ranking, which is the ablation baseline.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .embedding import embed
from .errors import ClockSkew, ConfigError, EmptyQuery, EmptyStore

if TYPE_CHECKING:
    from .memory_store import MemoryRecord, MemoryStore

# e-folding time of the recency component, in store time units.
RECENCY_TAU = 86400.0

# Rescoring pool size as a multiple of k: wide enough that the field and
# importance terms can promote near-miss candidates, small enough to stay
# cheap.  Pure top-k-by-cosine would make the other weights cosmetic.
CANDIDATE_MULTIPLIER = 4


@dataclass(frozen=True)
class RetrievalWeights:
    """Component weights (similarity, field, importance, recency).

    Defaults are the reference operating point; they must be non-negative
    and sum to 1 so scores stay in [0, 1].
    """

    w_sim: float = 0.60
    w_field: float = 0.15
    w_importance: float = 0.15
    w_recency: float = 0.10

    def __post_init__(self):
        vals = self.as_tuple()
        if any(w < 0 for w in vals):
            raise ConfigError(f"weights must be non-negative, got {vals}")
        total = math.fsum(vals)
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"weights must sum to 1, got {total!r}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.w_sim, self.w_field, self.w_importance, self.w_recency)

    @classmethod
    def baseline(cls) -> "RetrievalWeights":
        """Pure-similarity ablation: reduces retrieval to cosine ranking."""
        return cls(1.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ScoredResult:
    memory_id: int
    score: float
    components: tuple[float, float, float, float]  # (sim, field, importance, recency)


@dataclass(frozen=True)
class RetrievalMetrics:
    """recall/precision over evidence ids, token F1 and containment vs answer.

    Fields are None where undefined (no evidence, no results, no answer).
    """

    recall: float | None
    precision: float | None
    token_f1: float | None
    exact_match: bool | None


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def candidate_search(store: "MemoryStore", query_embedding: np.ndarray,
                     k: int) -> list["MemoryRecord"]:
    """Top-k records by raw cosine similarity; ties go to the lower id."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if not store.records:
        raise EmptyStore("no memories to search")
    m = store.embedding_matrix()
    q = np.asarray(query_embedding, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1) * float(np.linalg.norm(q))
    norms[norms == 0.0] = 1.0
    cos = (m @ q) / norms
    order = np.lexsort((np.arange(len(cos)), -cos))
    return [store.records[i] for i in order[:k]]


def score(record: "MemoryRecord", query_embedding: np.ndarray, store: "MemoryStore",
          weights: RetrievalWeights, now: float, tau: float = RECENCY_TAU) -> ScoredResult:
    """Score one record against a query at time `now`.

    Components: cosine mapped to [0,1] via (c+1)/2; |phi| at the record's
    cell clamped by the importance cap; mask value over its hard ceiling;
    exp(-(now - last_access)/tau).  The total is the correctly-rounded
    weighted sum.
    """
    if now < record.last_access:
        raise ClockSkew(
            f"scoring time {now} precedes last access {record.last_access}")
    sim = (_cosine(query_embedding, record.embedding) + 1.0) / 2.0
    fld = min(store.field_amplitude_at(record) / store.params.i_cap, 1.0)
    imp = store.mask.value_at(record.position.cell) / store.params.importance_max
    rec = math.exp(-(now - record.last_access) / tau)
    w = weights.as_tuple()
    comps = (sim, fld, imp, rec)
    total = math.fsum(wi * ci for wi, ci in zip(w, comps))
    return ScoredResult(record.id, total, comps)


def retrieve(store: "MemoryStore", query_text: str, k: int,
             weights: RetrievalWeights | None = None, now: float | None = None,
             tau: float = RECENCY_TAU, update_access: bool = True) -> list[ScoredResult]:
    """Rank the top-k memories for a query.

    Embeds the query, pulls 4k candidates by cosine, rescores with the
    composite formula and returns the best k (ties to lower id).  Returned
    memories get an access bump (importance reinforcement) unless
    update_access is False.
    """
    if not query_text or not query_text.strip():
        raise EmptyQuery("query text is empty")
    if not store.records:
        raise EmptyStore("no memories to search")
    if weights is None:
        weights = getattr(store, "default_weights", None) or RetrievalWeights()
    if now is None:
        now = store.clock
    q = embed(store.provider, query_text)
    pool = candidate_search(store, q, CANDIDATE_MULTIPLIER * k)
    scored = [score(r, q, store, weights, now, tau) for r in pool]
    scored.sort(key=lambda s: (-s.score, s.memory_id))
    top = scored[:k]
    if update_access:
        for result in top:
            store.record_access(result.memory_id, when=now)
    return top


def evaluate(results: Sequence[ScoredResult] | Sequence[int], evidence_ids: Iterable[int],
             answer: str | None = None, store: "MemoryStore | None" = None) -> RetrievalMetrics:
    """Grade a ranked result list against evidence ids and an answer string.

    recall and precision are set-based over memory ids.  When both `answer`
    and `store` are given, token_f1 compares the concatenated retrieved
    texts with the answer (unigram overlap) and exact_match checks answer
    containment.
    """
    ids = [r.memory_id if isinstance(r, ScoredResult) else int(r) for r in results]
    evidence = set(evidence_ids)
    hits = len(evidence.intersection(ids))
    recall = hits / len(evidence) if evidence else None
    precision = hits / len(ids) if ids else None
    token_f1 = None
    exact = None
    if answer is not None and store is not None:
        text = " ".join(store.get(i).text for i in ids)
        token_f1 = _token_f1(text, answer)
        exact = answer.strip().lower() in text.lower()
    return RetrievalMetrics(recall, precision, token_f1, exact)


def _token_f1(pred_text: str, answer: str) -> float:
    pred = pred_text.lower().split()
    gold = answer.lower().split()
    if not pred or not gold:
        return 0.0
    common = sum((Counter(pred) & Counter(gold)).values())
    if common == 0:
        return 0.0
    p = common / len(pred)
    r = common / len(gold)
    return 2 * p * r / (p + r)
