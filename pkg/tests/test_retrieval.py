import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memfield.embedding import LocalProvider, embed
from memfield.errors import ClockSkew, ConfigError, EmptyQuery, EmptyStore
from memfield.field_engine import FieldParams
from memfield.memory_store import MemoryStore
from memfield.retrieval import (
    CANDIDATE_MULTIPLIER,
    RetrievalWeights,
    ScoredResult,
    candidate_search,
    evaluate,
    retrieve,
    score,
)

WORDS = ("ocean kitchen violin market compass lantern meadow circuit "
         "harbor thimble walnut prairie saddle comet mirror anchor").split()


def tiny_store(n=0, seed=2, **kw):
    params = kw.pop("params", None) or FieldParams(
        grid_size=32, diffusion=0.0, decay=0.02, dt=0.1, alpha=0.0)
    s = MemoryStore(params=params, seed=seed, **kw)
    for i in range(n):
        text = f"{WORDS[i % len(WORDS)]} note number {i}"
        s.inject(text, importance=0.5, when=0.0)
    return s


class TestRetrievalWeights:
    def test_defaults(self):
        w = RetrievalWeights()
        assert w.as_tuple() == (0.60, 0.15, 0.15, 0.10)

    def test_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            RetrievalWeights(0.5, 0.5, 0.5, 0.5)
        with pytest.raises(ConfigError):
            RetrievalWeights(0.4, 0.3, 0.3, 0.1)

    def test_tolerance(self):
        RetrievalWeights(0.25, 0.25, 0.25, 0.25 + 5e-10)  # inside 1e-9

    def test_non_negative(self):
        with pytest.raises(ConfigError):
            RetrievalWeights(1.5, -0.5, 0.0, 0.0)

    def test_baseline(self):
        assert RetrievalWeights.baseline().as_tuple() == (1.0, 0.0, 0.0, 0.0)


class TestCandidateSearch:
    def test_single_record(self):
        s = tiny_store(1)
        q = embed(s.provider, "anything at all")
        assert [r.id for r in candidate_search(s, q, 5)] == [0]

    def test_exact_match_ranks_first(self):
        s = tiny_store(10)
        q = s.records[7].embedding
        assert candidate_search(s, q, 3)[0].id == 7

    def test_matches_bruteforce_oracle(self):
        s = tiny_store(100)
        q = embed(s.provider, "compass bearings near the harbor")
        got = [r.id for r in candidate_search(s, q, 10)]
        cos = [(float(r.embedding @ q), r.id) for r in s.records]
        expect = [i for _, i in sorted(cos, key=lambda t: (-t[0], t[1]))[:10]]
        assert got == expect

    def test_ties_break_by_lower_id(self):
        s = tiny_store()
        s.inject("identical twin", importance=0.5, when=0.0)
        s.inject("identical twin", importance=0.5, when=0.0)
        q = embed(s.provider, "identical twin")
        assert [r.id for r in candidate_search(s, q, 2)] == [0, 1]

    def test_empty_store(self):
        with pytest.raises(EmptyStore):
            candidate_search(tiny_store(), np.ones(256), 1)

    def test_bad_k(self):
        with pytest.raises(ConfigError):
            candidate_search(tiny_store(1), np.ones(256), 0)


class TestScore:
    def test_reference_arithmetic(self):
        # weighted sum of (0.5, 0.2, 0.4, 1.0) under default weights
        w = RetrievalWeights()
        total = math.fsum(wi * ci for wi, ci in zip(w.as_tuple(), (0.5, 0.2, 0.4, 1.0)))
        assert total == 0.49

    def test_perfect_components_score_one(self):
        s = tiny_store()
        rec = s.inject("perfect", importance=1.0, when=0.0)
        for _ in range(50):  # drive mask to its ceiling
            s.record_access(rec.id, when=0.0)
        s.field.set(rec.position.cell, 5.0)  # clamps to 1 in the score
        out = score(rec, rec.embedding, s, RetrievalWeights(), now=0.0)
        assert out.components == (1.0, 1.0, 1.0, 1.0)
        assert out.score == 1.0

    def test_sim_only_equals_one_for_own_embedding(self):
        s = tiny_store(3)
        rec = s.records[1]
        out = score(rec, rec.embedding, s, RetrievalWeights.baseline(), now=0.0)
        assert out.score == pytest.approx(1.0, abs=1e-12)

    def test_decomposition(self):
        s = tiny_store(5)
        q = embed(s.provider, "market day")
        w = RetrievalWeights()
        for rec in s.records:
            out = score(rec, q, s, w, now=100.0)
            expect = math.fsum(wi * ci for wi, ci in zip(w.as_tuple(), out.components))
            assert abs(out.score - expect) <= 1e-12

    def test_recency_decay(self):
        s = tiny_store(1)
        rec = s.records[0]
        out = score(rec, rec.embedding, s, RetrievalWeights(), now=86400.0, tau=86400.0)
        assert out.components[3] == pytest.approx(math.exp(-1.0))

    def test_clock_skew(self):
        s = tiny_store(1)
        s.record_access(0, when=10.0)
        with pytest.raises(ClockSkew):
            score(s.records[0], s.records[0].embedding, s, RetrievalWeights(), now=5.0)

    def test_field_component_clamped(self):
        s = tiny_store(1)
        rec = s.records[0]
        s.field.set(rec.position.cell, 7.5)
        out = score(rec, rec.embedding, s, RetrievalWeights(), now=0.0)
        assert out.components[1] == 1.0


class TestRetrieve:
    def test_baseline_reduces_to_cosine(self):
        s = tiny_store(60)
        q_text = "walnut saddle inventory"
        got = [r.memory_id for r in
               retrieve(s, q_text, k=10, weights=RetrievalWeights.baseline(), now=0.0)]
        q = embed(s.provider, q_text)
        cos = [(float(r.embedding @ q), r.id) for r in s.records]
        expect = [i for _, i in sorted(cos, key=lambda t: (-t[0], t[1]))[:10]]
        assert got == expect

    def test_same_text_twins_tie_to_lower_id(self):
        # identical texts share one cell, so every component ties
        s = tiny_store(params=FieldParams(grid_size=32, diffusion=0.0, decay=0.1,
                                          dt=0.5, alpha=0.0, gamma=0.0))
        a = s.inject("the shared secret phrase", importance=1.0, when=0.0)
        b = s.inject("the shared secret phrase", importance=1.0, when=0.0)
        assert a.position.cell == b.position.cell
        s.tick(50.0)
        out = retrieve(s, "the shared secret phrase", k=2,
                       weights=RetrievalWeights(0.5, 0.5, 0.0, 0.0),
                       now=50.0, update_access=False)
        assert [r.memory_id for r in out] == [0, 1]

    def test_reinforced_field_beats_decayed_twin(self):
        # equal similarity (shared embedding), different cells: the record
        # whose field region is still alive must outrank the decayed one
        s = tiny_store(params=FieldParams(grid_size=32, diffusion=0.0, decay=0.1,
                                          dt=0.5, alpha=0.0, gamma=0.0))
        a = s.inject("memory alpha site", importance=1.0, when=0.0)
        b = s.inject("memory beta site", importance=1.0, when=0.0)
        assert a.position.cell != b.position.cell
        shared = embed(s.provider, "the shared secret phrase")
        a.embedding = shared
        b.embedding = shared
        s._matrix = None  # invalidate the cached embedding matrix
        s.tick(80.0)  # both bumps decay to ~0.0003
        s.field.set(b.position.cell, 0.9)  # b's region got reinforced
        out = retrieve(s, "the shared secret phrase", k=2,
                       weights=RetrievalWeights(0.5, 0.5, 0.0, 0.0),
                       now=80.0, update_access=False)
        assert [r.memory_id for r in out] == [b.id, a.id]
        assert out[0].components[0] == out[1].components[0]  # sim really tied

    def test_k_larger_than_store(self):
        s = tiny_store(3)
        out = retrieve(s, "anything", k=50, now=0.0)
        assert len(out) == 3

    def test_scores_sorted_desc(self):
        s = tiny_store(30)
        out = retrieve(s, "prairie comet", k=10, now=0.0)
        assert all(a.score >= b.score for a, b in zip(out, out[1:]))

    def test_access_recorded_for_returned_only(self):
        s = tiny_store(20)
        out = retrieve(s, "ocean kitchen", k=3, now=5.0)
        returned = {r.memory_id for r in out}
        for rec in s.records:
            if rec.id in returned:
                assert rec.access_count == 1
                assert rec.last_access == 5.0
            else:
                assert rec.access_count == 0

    def test_access_boosts_mask(self):
        s = tiny_store(5)
        out = retrieve(s, "violin market", k=1, now=0.0)
        cell = s.records[out[0].memory_id].position.cell
        assert s.mask.value_at(cell) > 0.5  # injected importance, plus gamma

    def test_update_access_off(self):
        s = tiny_store(5)
        retrieve(s, "violin market", k=2, now=0.0, update_access=False)
        assert all(r.access_count == 0 for r in s.records)

    def test_empty_query(self):
        with pytest.raises(EmptyQuery):
            retrieve(tiny_store(3), "  ", k=1)

    def test_empty_store(self):
        with pytest.raises(EmptyStore):
            retrieve(tiny_store(), "question", k=1)

    def test_pool_is_4k(self):
        assert CANDIDATE_MULTIPLIER == 4

    def test_rank_monotone_in_mask_component(self):
        # raising one record's mask (others fixed) must not lower its rank
        w = RetrievalWeights(0.4, 0.2, 0.3, 0.1)
        s = tiny_store(12)
        q = "circuit lantern repair"
        before = [r.memory_id for r in retrieve(s, q, k=12, weights=w, now=0.0,
                                                update_access=False)]
        target = before[6]
        cell = s.records[target].position.cell
        s.mask.cells[cell] = s.params.importance_max  # max out its importance
        after = [r.memory_id for r in retrieve(s, q, k=12, weights=w, now=0.0,
                                               update_access=False)]
        assert after.index(target) <= before.index(target)


class TestEvaluate:
    def test_perfect_retrieval(self):
        m = evaluate([ScoredResult(0, 1.0, (1, 1, 1, 1)),
                      ScoredResult(1, 0.9, (1, 1, 1, 1))], {0, 1})
        assert m.recall == 1.0 and m.precision == 1.0

    def test_disjoint(self):
        m = evaluate([ScoredResult(5, 0.5, (0, 0, 0, 0))], {0, 1})
        assert m.recall == 0.0 and m.precision == 0.0

    def test_partial(self):
        results = [ScoredResult(i, 0.5, (0, 0, 0, 0)) for i in range(10)]
        m = evaluate(results, {0, 1, 40, 41})
        assert m.recall == 0.5
        assert m.precision == 0.2

    def test_plain_int_ids_accepted(self):
        m = evaluate([3, 4], {3})
        assert m.recall == 1.0 and m.precision == 0.5

    def test_no_evidence_recall_absent(self):
        m = evaluate([ScoredResult(0, 1.0, (0, 0, 0, 0))], set())
        assert m.recall is None
        assert m.precision == 0.0

    def test_no_results_precision_absent(self):
        m = evaluate([], {1, 2})
        assert m.precision is None
        assert m.recall == 0.0

    def test_token_f1_and_exact_match(self):
        s = tiny_store()
        s.inject("the capital of france is paris", importance=0.5, when=0.0)
        s.inject("bananas are yellow", importance=0.5, when=0.0)
        m = evaluate([0, 1], {0}, answer="paris", store=s)
        assert m.exact_match is True
        assert m.token_f1 == pytest.approx(2 * (1 / 9) * 1.0 / (1 / 9 + 1.0))
        m2 = evaluate([1], {1}, answer="paris", store=s)
        assert m2.exact_match is False
        assert m2.token_f1 == 0.0

    def test_answer_without_store_skips_text_metrics(self):
        m = evaluate([1], {1}, answer="paris", store=None)
        assert m.token_f1 is None and m.exact_match is None


@settings(max_examples=40, deadline=None)
@given(
    comps=st.tuples(*[st.floats(0, 1) for _ in range(4)]),
    bump=st.floats(0.001, 1.0),
    idx=st.integers(0, 3),
)
def test_score_monotone_in_each_component(comps, bump, idx):
    w = (0.60, 0.15, 0.15, 0.10)
    base = math.fsum(wi * ci for wi, ci in zip(w, comps))
    raised = list(comps)
    raised[idx] = min(1.0, raised[idx] + bump)
    higher = math.fsum(wi * ci for wi, ci in zip(w, raised))
    assert higher >= base
