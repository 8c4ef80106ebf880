import io

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import bm25_exhaustive, join_parallel, scan_context, step_sum_ap, top_k

from relint.augment import estimate_source_given_target
from relint.bm25 import Bm25Index, bag
from relint.collective import make_fold_plan
from relint.evaluation import auc, metrics_at_precision, sweep
from relint.graph import SOURCE, TARGET, build_parallel_data, graph_from_triples, normalize_name
from relint.neural import ModelParams, checkpoint_bytes, load_checkpoint

entity = st.sampled_from([f"e{i}" for i in range(6)])
triples = st.lists(st.tuples(entity, st.sampled_from(["a", "b", "c"]), entity), min_size=1, max_size=30)
target_triples = st.lists(st.tuples(entity, st.sampled_from(["x", "y"]), entity), min_size=1, max_size=30)


@st.composite
def rankings(draw):
    n = draw(st.integers(2, 40))
    scores = draw(st.lists(st.sampled_from([i / 10 for i in range(11)]), min_size=n, max_size=n))
    labels = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    labels[draw(st.integers(0, n - 1))] = True
    return scores, labels


class TestGraphProperties:
    @given(triples, entity, entity)
    def test_context_matches_scan(self, rows, s, o):
        g = graph_from_triples(rows, SOURCE)
        ctx = g.neighbor_context((s, o))
        names = lambda ids: {g.vocab[i] for i in ids}  # noqa: E731
        assert (names(ctx.middle), names(ctx.subject_side), names(ctx.object_side)) == scan_context(rows, (s, o))

    @given(triples, target_triples)
    def test_parallel_data_is_the_join(self, src, tgt):
        data = build_parallel_data(graph_from_triples(src, SOURCE), graph_from_triples(tgt, TARGET))
        assert {ex.pair: {data.target_vocab[r] for r in ex.gold} for ex in data} == join_parallel(src, tgt)

    @given(st.text(max_size=20))
    def test_normalize_idempotent(self, name):
        assert normalize_name(normalize_name(name)) == normalize_name(name)


class TestTableProperties:
    @given(triples, target_triples)
    def test_raw_in_unit_interval_and_normalized_sums_to_one(self, src, tgt):
        s, t = graph_from_triples(src, SOURCE), graph_from_triples(tgt, TARGET)
        data = build_parallel_data(s, t)
        table = estimate_source_given_target(s, t, data)
        for row in table.raw.values():
            assert all(0 < v <= 1 for v in row.values())
        for row in table.normalized.values():
            assert abs(sum(row.values()) - 1.0) <= 1e-12
        assert set(table.raw) | set(table.unsynthesizable) == set(range(len(t.vocab)))


class TestRankingProperties:
    @given(rankings())
    def test_auc_matches_step_sum(self, case):
        scores, labels = case
        assert abs(auc(sweep(scores, labels)) - step_sum_ap(scores, labels)) <= 1e-12

    @given(rankings())
    def test_recall_monotone_and_complete(self, case):
        curve = sweep(*case)
        assert all(a <= b for a, b in zip(curve.recall, curve.recall[1:]))
        assert curve.recall[-1] == 1.0

    @given(rankings())
    def test_fixed_precision_recall_monotone(self, case):
        curve = sweep(*case)
        recs = [(metrics_at_precision(curve, p) or (0.0, 0.0))[0] for p in (0.8, 0.9, 0.95)]
        assert recs[0] >= recs[1] >= recs[2]

    @given(rankings())
    def test_monotone_transform(self, case):
        scores, labels = case
        base = auc(sweep(scores, labels))
        assert abs(auc(sweep([np.exp(3 * s) for s in scores], labels)) - base) <= 1e-12


class TestBm25Properties:
    @settings(max_examples=50)
    @given(
        st.lists(st.lists(st.sampled_from("abcdefg"), min_size=1, max_size=8), min_size=1, max_size=25),
        st.lists(st.sampled_from("abcdefgh"), min_size=1, max_size=5),
        st.integers(1, 6),
    )
    def test_matches_exhaustive(self, docs, query, k):
        got = Bm25Index([bag(d) for d in docs]).search(bag(query), k)
        expected = bm25_exhaustive(docs, query)
        assert [d for d, _ in got] == top_k(expected, k)
        assert all(abs(s - expected[d]) <= 1e-12 for d, s in got)


class TestFoldProperties:
    @given(st.integers(2, 200), st.integers(2, 10), st.integers(0, 1000))
    def test_partition(self, n, folds, seed):
        if n < folds:
            return
        plan = make_fold_plan(n, folds, seed)
        members = [plan.members(f) for f in range(folds)]
        assert sorted(i for m in members for i in m) == list(range(n))
        assert max(map(len, members)) - min(map(len, members)) <= 1


class TestCheckpointProperties:
    @settings(max_examples=25)
    @given(st.integers(1, 6), st.integers(1, 5), st.sampled_from([3, 6]), st.integers(0, 10_000))
    def test_roundtrip(self, n_source, n_out, arity, seed):
        p = ModelParams.init(
            n_source, n_out, arity, dim=3, hidden=(4,), n_target=n_out if arity == 6 else 0, seed=seed
        )
        blob = checkpoint_bytes(p, {"seed": seed})
        q, head = load_checkpoint(io.BytesIO(blob))
        assert checkpoint_bytes(q, {"seed": seed}) == blob and head["seed"] == seed
