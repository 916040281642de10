import math
import random

import numpy as np
import pytest

from wslrec.corpus import Corpus, filter_corpus
from wslrec.modelfree import (
    br_ranked,
    br_topk,
    build_similarity,
    build_weights,
    itemcf_ranked,
    itemcf_topk,
    load_similarity,
    save_similarity,
)


def random_corpus(rng, n_users=10, n_item_pool=15, min_len=5, max_len=12):
    """Small synthetic corpus with internal indices already dense."""
    sequences = []
    used = set()
    for _ in range(n_users):
        n = rng.randrange(min_len, max_len + 1)
        seq = tuple(rng.randrange(n_item_pool) for _ in range(n))
        used.update(seq)
        sequences.append(seq)
    n_items = max(used) + 1
    return Corpus(
        user_ids=tuple(f"u{j}" for j in range(n_users)),
        item_ids=tuple(f"i{j}" for j in range(n_items)),
        sequences=tuple(sequences),
    )


def dense_sim_oracle(corpus, train_users):
    """Straight double loop over item pairs, user contributions in
    ascending-user order."""
    users = sorted(train_users)
    weights = {}
    for u in users:
        seq = corpus.sequences[u]
        damp = math.log2(1 + len(seq))
        counts = {}
        for v in seq:
            counts[v] = counts.get(v, 0.0) + 1.0
        weights[u] = {v: c / damp for v, c in counts.items()}
    n = corpus.n_items
    sim = np.zeros((n, n))
    for v in range(n):
        for v2 in range(v + 1, n):
            num = 0.0
            n1 = 0.0
            n2 = 0.0
            for u in users:
                w1 = weights[u].get(v, 0.0)
                w2 = weights[u].get(v2, 0.0)
                num += w1 * w2
                n1 += w1 * w1
                n2 += w2 * w2
            if num > 0.0:
                s = num / (math.sqrt(n1) * math.sqrt(n2))
                if s > 1.0:
                    s = 1.0
                sim[v, v2] = sim[v2, v] = s
    return sim


def itemcf_oracle(history, sim, k, include_history=False):
    """argTopk over all items of max similarity to any history item."""
    hist = set(history)
    scores = {}
    for v in range(sim.shape[0]):
        if v in hist and not include_history:
            continue
        best = 0.0
        for v2 in hist:
            s = 1.0 if v == v2 else sim[v, v2]
            best = max(best, s)
        if best > 0.0:
            scores[v] = best
    ranked = sorted(scores, key=lambda v: (-scores[v], v))
    return ranked[:k]


class TestWeights:
    def test_single_occurrence(self):
        corpus = Corpus(("u",), ("a", "b", "c"), ((0, 1, 2),))
        w = build_weights(corpus, [0])
        assert w[0][0] == pytest.approx(1 / math.log2(4))
        assert w[0][0] == 0.5

    def test_double_occurrence(self):
        corpus = Corpus(("u",), tuple("abcdef"), ((0, 0, 1, 2, 3, 4, 5),))
        w = build_weights(corpus, [0])
        assert w[0][0] == pytest.approx(2 / 3)

    def test_absent_item_zero(self):
        corpus = Corpus(("u",), ("a", "b", "c"), ((0, 1),))
        w = build_weights(corpus, [0])
        assert 2 not in w[0]

    def test_row_nonzero_count(self):
        rng = random.Random(4)
        corpus = random_corpus(rng)
        w = build_weights(corpus, range(corpus.n_users))
        for u in range(corpus.n_users):
            assert len(w[u]) == len(set(corpus.sequences[u]))


class TestSimilarity:
    def test_parallel_single_user(self):
        corpus = Corpus(("u", "v"), tuple("abcdef"), ((0, 1, 2, 3, 4), (2, 3, 4, 5, 2)))
        table = build_similarity(build_weights(corpus, [0]), prune_n=10, n_items=6)
        assert table.sim(0, 1) == 1.0

    def test_disjoint_supports_absent(self):
        corpus = Corpus(
            ("u", "v"),
            tuple("abcdefgh"),
            ((0, 1, 2, 3, 0), (4, 5, 6, 7, 4)),
        )
        table = build_similarity(build_weights(corpus, [0, 1]), prune_n=10, n_items=8)
        assert table.sim(0, 4) == 0.0
        items, _ = table.row(0)
        assert 4 not in items

    def test_matches_dense_oracle(self):
        rng = random.Random(7)
        for _ in range(10):
            corpus = random_corpus(rng)
            train = list(range(corpus.n_users))
            table = build_similarity(build_weights(corpus, train), prune_n=corpus.n_items,
                                     n_items=corpus.n_items)
            oracle = dense_sim_oracle(corpus, train)
            for v in range(corpus.n_items):
                items, sims = table.row(v)
                dense_row = {v2: oracle[v, v2] for v2 in range(corpus.n_items) if oracle[v, v2] > 0 and v2 != v}
                assert set(items.tolist()) == set(dense_row)
                for v2, s in zip(items.tolist(), sims.tolist()):
                    assert abs(s - dense_row[v2]) <= 1e-12

    def test_symmetry_bounds_and_order(self):
        rng = random.Random(21)
        corpus = random_corpus(rng, n_users=15)
        table = build_similarity(build_weights(corpus, range(corpus.n_users)),
                                 prune_n=corpus.n_items, n_items=corpus.n_items)
        for v in range(corpus.n_items):
            items, sims = table.row(v)
            assert np.all(sims >= 0.0) and np.all(sims <= 1.0)
            assert v not in items
            keys = list(zip((-sims).tolist(), items.tolist()))
            assert keys == sorted(keys)
            for v2, s in zip(items.tolist(), sims.tolist()):
                assert table.sim(v2, v) == s

    def test_pruning_keeps_strongest(self):
        rng = random.Random(5)
        corpus = random_corpus(rng, n_users=20)
        w = build_weights(corpus, range(corpus.n_users))
        full = build_similarity(w, prune_n=corpus.n_items, n_items=corpus.n_items)
        pruned = build_similarity(w, prune_n=3, n_items=corpus.n_items)
        for v in range(corpus.n_items):
            items, sims = pruned.row(v)
            assert len(items) <= 3
            full_items, full_sims = full.row(v)
            np.testing.assert_array_equal(items, full_items[: len(items)])
            np.testing.assert_array_equal(sims, full_sims[: len(sims)])


class TestBrTopk:
    def test_last_two(self):
        assert br_topk(("a", "b", "c", "d"), 2) == {"c", "d"}

    def test_duplicate_collapses(self):
        assert br_topk(("a", "b", "b"), 2) == {"b"}

    def test_k_exceeds_history(self):
        assert br_topk(("a",), 5) == {"a"}

    def test_subset_of_history(self):
        rng = random.Random(2)
        for _ in range(20):
            hist = [rng.randrange(10) for _ in range(rng.randrange(1, 15))]
            k = rng.randrange(1, 8)
            top = br_topk(hist, k)
            assert top <= set(hist)
            assert len(top) <= k

    def test_ranked_most_recent_first(self):
        assert br_ranked((1, 2, 3, 2), 3) == [2, 3, 1]


class TestItemcfTopk:
    def make_table(self, rows, n_items):
        corpus_rows = {v: sorted(pairs, key=lambda p: (-p[1], p[0])) for v, pairs in rows.items()}
        neighbors = []
        sims = []
        for v in range(n_items):
            row = corpus_rows.get(v, [])
            neighbors.append(np.array([x for x, _ in row], dtype=np.int64))
            sims.append(np.array([s for _, s in row], dtype=np.float64))
        from wslrec.modelfree import SimilarityTable

        return SimilarityTable(n_items=n_items, neighbors=neighbors, similarities=sims)

    def test_single_row(self):
        table = self.make_table({0: [(1, 0.9), (2, 0.4)]}, 3)
        assert itemcf_topk((0,), table, 1) == {1}

    def test_max_aggregation(self):
        table = self.make_table({0: [(2, 0.3)], 1: [(2, 0.8)]}, 3)
        assert itemcf_ranked((0, 1), table, 1) == [2]

    def test_matches_dense_oracle(self):
        rng = random.Random(13)
        for _ in range(10):
            corpus = random_corpus(rng)
            train = list(range(corpus.n_users))
            table = build_similarity(build_weights(corpus, train), prune_n=corpus.n_items,
                                     n_items=corpus.n_items)
            sim = dense_sim_oracle(corpus, train)
            for user in range(corpus.n_users):
                history = corpus.sequences[user][:6]
                k = rng.randrange(1, 10)
                assert itemcf_ranked(history, table, k) == itemcf_oracle(history, sim, k)
                assert itemcf_ranked(history, table, k, include_history=True) == \
                    itemcf_oracle(history, sim, k, include_history=True)

    def test_excludes_history(self):
        rng = random.Random(17)
        corpus = random_corpus(rng)
        table = build_similarity(build_weights(corpus, range(corpus.n_users)),
                                 prune_n=corpus.n_items, n_items=corpus.n_items)
        for user in range(corpus.n_users):
            history = corpus.sequences[user]
            assert not itemcf_topk(history, table, 5) & set(history)


def test_similarity_persistence_roundtrip(tmp_path):
    rng = random.Random(31)
    corpus = random_corpus(rng)
    table = build_similarity(build_weights(corpus, range(corpus.n_users)),
                             prune_n=5, n_items=corpus.n_items)
    path = tmp_path / "sim.tsv"
    save_similarity(table, path)
    loaded = load_similarity(path, n_items=corpus.n_items)
    for v in range(corpus.n_items):
        items, sims = table.row(v)
        litems, lsims = loaded.row(v)
        np.testing.assert_array_equal(items, litems)
        np.testing.assert_array_equal(sims, lsims)  # repr round-trips exactly
