"""Synthetic workloads: the anchor/distractor fixture and corpus generation.

The fixture builds one store per seed containing a single early "anchor"
memory that gets re-accessed in two later sessions, a handful of "hot"
distractors that are lexically closer to the probe query than the anchor
is, and a few hundred cold distractors injected late.  Cosine-only
ranking prefers the hot distractors; the composite score can recover the
anchor through its field amplitude, importance and recency.  Comparing
the two modes per seed is the substance of the fixture.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .field_engine import FieldParams
from .embedding import LocalProvider
from .memory_store import MemoryStore
from .retrieval import RetrievalWeights, retrieve

ANCHOR_QUERY = "where did the team hide the launch key before the demo"
ANCHOR_TEXT = "the team hid the launch key under the blue planter before the demo"
HOT_DISTRACTORS = (
    "where did the team hide the launch plan before the demo",
    "where did the team store the launch notes before the demo",
    "when did the team hide the launch banner before the demo",
    "where did the crew hide the launch cake before the demo",
    "where did the team hide the launch badge after the demo",
)

_COLD_WORDS = (
    "garden window coffee ladder violet harbor pencil marble lantern stone "
    "river cricket meadow copper saddle barrel willow ribbon tunnel hammer "
    "velvet orchard sparrow gravel candle mirror walnut thimble quartz fern "
    "anchor breeze canyon drizzle ember fable glacier hollow island juniper"
).split()

HOUR = 3600.0
DAY = 24 * HOUR


@dataclass(frozen=True)
class MultiSessionFixture:
    """One seeded store plus the probe that targets its anchor memory."""
    store: MemoryStore
    query: str
    anchor_id: int
    query_time: float
    k: int


def fixture_params(grid_size: int = 64) -> FieldParams:
    # Timescales in seconds: 5-minute steps, day-scale decay, slow mask fade.
    return FieldParams(grid_size=grid_size, diffusion=5e-4, decay=1e-5,
                       dt=300.0, alpha=2.0, beta=1e-6, gamma=0.5,
                       sigma0=1.0, prune_eps=1e-3, i_cap=1.0)


def multi_session_fixture(seed: int, n_cold: int = 495, k: int = 3,
                          grid_size: int = 64) -> MultiSessionFixture:
    """Anchor injected early and re-accessed twice, distractors layered on."""
    rng = np.random.default_rng(seed)
    store = MemoryStore(params=fixture_params(grid_size),
                        provider=LocalProvider(), seed=seed)
    anchor = store.inject(ANCHOR_TEXT, importance=1.0, when=0.0, session_id="s1")
    for i, text in enumerate(HOT_DISTRACTORS):
        store.inject(text, importance=0.3, when=1.0 + i, session_id="s1")
    store.tick(12 * HOUR)
    store.record_access(anchor.id, when=12 * HOUR)
    store.tick(DAY)
    store.record_access(anchor.id, when=DAY)
    for _ in range(n_cold):
        words = rng.choice(_COLD_WORDS, size=6, replace=True)
        store.inject(" ".join(words), importance=0.1, when=DAY, session_id="s3")
    query_time = DAY + HOUR
    store.tick(query_time)
    return MultiSessionFixture(store, ANCHOR_QUERY, anchor.id, query_time, k)


def anchor_recall(fixture: MultiSessionFixture,
                  weights: RetrievalWeights | None = None) -> float:
    """1.0 when the anchor makes the top-k under `weights`, else 0.0."""
    results = retrieve(fixture.store, fixture.query, k=fixture.k,
                       weights=weights, now=fixture.query_time,
                       update_access=False)
    return 1.0 if any(r.memory_id == fixture.anchor_id for r in results) else 0.0


@dataclass
class ModeComparison:
    """Per-seed recall of composite scoring vs cosine-only scoring."""
    seeds: list[int]
    field_recall: list[float]
    baseline_recall: list[float]

    @property
    def n_improved(self) -> int:
        return sum(f > b for f, b in zip(self.field_recall, self.baseline_recall))

    @property
    def n_regressed(self) -> int:
        return sum(f < b for f, b in zip(self.field_recall, self.baseline_recall))

    @property
    def mean_field(self) -> float:
        return float(np.mean(self.field_recall))

    @property
    def mean_baseline(self) -> float:
        return float(np.mean(self.baseline_recall))


def compare_modes(seeds, n_cold: int = 495, k: int = 3,
                  grid_size: int = 64) -> ModeComparison:
    out = ModeComparison(list(seeds), [], [])
    for seed in out.seeds:
        fixture = multi_session_fixture(seed, n_cold=n_cold, k=k,
                                        grid_size=grid_size)
        out.field_recall.append(anchor_recall(fixture))
        out.baseline_recall.append(anchor_recall(fixture, RetrievalWeights.baseline()))
    return out


_FILLER = (
    "we talked about the weather for a while",
    "lunch plans came up again today",
    "someone mentioned the broken printer",
    "the meeting ran long as usual",
    "notes from the standup were shared",
    "a long thread about scheduling followed",
    "the coffee machine is still acting up",
    "someone posted photos from the offsite",
    "reminders about the deadline went out",
    "the new hire introduced themselves",
)

_FACT_NOUNS = ("locker", "archive", "backup", "vault", "relay", "badge",
               "gateway", "cabinet", "terminal", "beacon")
_FACT_WORDS = ("amber", "cobalt", "crimson", "ivory", "jade", "onyx",
               "pearl", "sable", "teal", "umber")


@dataclass
class SyntheticCorpus:
    """Turn rows and question rows shaped like the ingest/bench file formats."""
    turns: list[dict] = dc_field(default_factory=list)
    questions: list[dict] = dc_field(default_factory=list)


def synth_corpus(seed: int = 0, n_sessions: int = 4,
                 turns_per_session: int = 10) -> SyntheticCorpus:
    """Sessions of filler chatter with planted facts and questions about them.

    Every fact turn yields a single-evidence question; one final question
    spans two facts so multi-evidence recall gets exercised too.
    """
    rng = np.random.default_rng(seed)
    corpus = SyntheticCorpus()
    turn_id = 0
    facts = []
    t = 0.0
    for s in range(n_sessions):
        session = f"session-{s}"
        fact_slots = set(rng.choice(turns_per_session, size=2, replace=False).tolist())
        for i in range(turns_per_session):
            t += float(rng.integers(20, 120))
            if i in fact_slots and len(_FACT_NOUNS) > len(facts):
                noun = _FACT_NOUNS[len(facts)]
                word = _FACT_WORDS[int(rng.integers(len(_FACT_WORDS)))]
                code = f"{word}-{int(rng.integers(10, 100))}"
                text = f"for the record the {noun} code is {code}"
                corpus.turns.append({"session": session, "turn": turn_id,
                                     "role": "user", "text": text, "time": t,
                                     "importance": 0.9})
                facts.append((turn_id, noun, code))
            else:
                text = _FILLER[int(rng.integers(len(_FILLER)))]
                corpus.turns.append({"session": session, "turn": turn_id,
                                     "role": "assistant", "text": text, "time": t})
            turn_id += 1
        t += HOUR
    for turn, noun, code in facts:
        corpus.questions.append({
            "question": f"what is the {noun} code",
            "answer": code,
            "evidence_turns": [turn],
            "type": "single-evidence",
        })
    if len(facts) >= 2:
        (t1, n1, c1), (t2, n2, c2) = facts[0], facts[-1]
        corpus.questions.append({
            "question": f"what are the codes for the {n1} and the {n2}",
            "answer": f"{c1} and {c2}",
            "evidence_turns": [t1, t2],
            "type": "multi-evidence",
        })
    return corpus
