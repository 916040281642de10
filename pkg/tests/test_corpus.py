import random

import pytest

from wslrec.corpus import (
    EmptyCorpusError,
    InteractionEvent,
    ParseError,
    build_sequences,
    eval_split,
    filter_corpus,
    ingest_events,
    load_corpus,
    load_split,
    save_corpus,
    save_split,
    split_users,
    training_instances,
)


def make_corpus(raw):
    """Build a filtered corpus from {user: [item, ...]} external-id data."""
    return filter_corpus({u: list(items) for u, items in raw.items()})


@pytest.fixture
def healthy_raw():
    # 6 users x 6 shared items, all lengths 6: already satisfies 5/5.
    items = [f"i{j}" for j in range(6)]
    return {f"u{j}": list(items) for j in range(6)}


class TestIngest:
    def test_single_record(self):
        events = ingest_events("u1\ti1\t100\n")
        assert events == [InteractionEvent("u1", "i1", 100)]

    def test_empty_input(self):
        assert ingest_events("") == []
        assert ingest_events(b"") == []

    def test_malformed_line_number(self):
        text = "u1\ti1\t1\nu2\ti2\tnope\nu3\ti3\t3\n"
        with pytest.raises(ParseError) as err:
            ingest_events(text)
        assert err.value.line_no == 2

    def test_negative_timestamp_rejected(self):
        with pytest.raises(ParseError):
            ingest_events("u1\ti1\t-5\n")

    def test_bytes_input_order_preserved(self):
        events = ingest_events(b"u1\ti2\t7\nu1\ti1\t7\n")
        assert [e.item for e in events] == ["i2", "i1"]


class TestBuildSequences:
    def test_sort_by_time(self):
        seqs = build_sequences([
            InteractionEvent("u1", "i2", 200),
            InteractionEvent("u1", "i1", 100),
        ])
        assert seqs == {"u1": ["i1", "i2"]}

    def test_tie_broken_by_input_order(self):
        seqs = build_sequences([
            InteractionEvent("u1", "i1", 100),
            InteractionEvent("u1", "i2", 100),
        ])
        assert seqs == {"u1": ["i1", "i2"]}

    def test_interleaved_users_independent(self):
        seqs = build_sequences([
            InteractionEvent("a", "x", 2),
            InteractionEvent("b", "y", 1),
            InteractionEvent("a", "z", 1),
            InteractionEvent("b", "w", 2),
        ])
        assert seqs == {"a": ["z", "x"], "b": ["y", "w"]}

    def test_permutation_of_events(self):
        rng = random.Random(11)
        events = [
            InteractionEvent(f"u{rng.randrange(5)}", f"i{rng.randrange(20)}", rng.randrange(100))
            for _ in range(200)
        ]
        seqs = build_sequences(events)
        per_user = {}
        for ev in events:
            per_user.setdefault(ev.user, []).append(ev.item)
        assert set(seqs) == set(per_user)
        for user, items in per_user.items():
            assert sorted(seqs[user]) == sorted(items)


def fixpoint_oracle(raw, min_user=5, min_item=5):
    """Independent scan-and-delete loop until nothing changes."""
    seqs = {u: list(v) for u, v in raw.items()}
    while True:
        changed = False
        for u in list(seqs):
            if len(seqs[u]) < min_user:
                del seqs[u]
                changed = True
        counts = {}
        for items in seqs.values():
            for item in set(items):
                counts[item] = counts.get(item, 0) + 1
        bad = {item for item, n in counts.items() if n < min_item}
        if bad:
            changed = True
            for u in seqs:
                seqs[u] = [v for v in seqs[u] if v not in bad]
        if not changed:
            return seqs


class TestFilterCorpus:
    def test_healthy_corpus_unchanged(self, healthy_raw):
        corpus = make_corpus(healthy_raw)
        assert corpus.n_users == 6
        assert corpus.n_items == 6
        assert all(len(s) == 6 for s in corpus.sequences)

    def test_short_user_removed_and_cascade(self, healthy_raw):
        healthy_raw["short"] = ["i0", "i1", "i2", "extra"]  # 4 items
        corpus = make_corpus(healthy_raw)
        assert "short" not in corpus.user_index
        assert "extra" not in corpus.item_index  # only one user had it

    def test_empty_result_raises(self):
        with pytest.raises(EmptyCorpusError):
            filter_corpus({"u": ["a", "b"]})

    def test_matches_bruteforce_fixpoint_on_random_corpora(self):
        rng = random.Random(3)
        for trial in range(20):
            raw = {
                f"u{j}": [f"i{rng.randrange(25)}" for _ in range(rng.randrange(1, 12))]
                for j in range(50)
            }
            expected = fixpoint_oracle(raw)
            if not any(expected.values()):
                with pytest.raises(EmptyCorpusError):
                    filter_corpus(raw)
                continue
            corpus = filter_corpus(raw)
            assert set(corpus.user_ids) == set(expected)
            for user, items in expected.items():
                got = [corpus.item_ids[v] for v in corpus.sequences[corpus.user_index[user]]]
                assert got == items

    def test_invariants_after_filtering(self):
        rng = random.Random(9)
        raw = {
            f"u{j}": [f"i{rng.randrange(15)}" for _ in range(rng.randrange(3, 10))]
            for j in range(40)
        }
        corpus = filter_corpus(raw)
        assert min(len(s) for s in corpus.sequences) >= 5
        users_per_item = {}
        for seq in corpus.sequences:
            for item in set(seq):
                users_per_item[item] = users_per_item.get(item, 0) + 1
        assert set(users_per_item) == set(range(corpus.n_items))
        assert min(users_per_item.values()) >= 5


class TestSplitUsers:
    def test_exact_ratio(self, healthy_raw):
        raw = {f"u{j}": [f"i{i}" for i in range(6)] for j in range(10)}
        split = split_users(make_corpus(raw), seed=7)
        assert (len(split.train_users), len(split.valid_users), len(split.test_users)) == (8, 1, 1)

    def test_deterministic(self, healthy_raw):
        corpus = make_corpus(healthy_raw)
        assert split_users(corpus, seed=42) == split_users(corpus, seed=42)

    def test_floor_arithmetic_97_users(self):
        raw = {f"u{j}": [f"i{i}" for i in range(6)] for j in range(97)}
        split = split_users(make_corpus(raw), seed=0)
        sizes = (len(split.train_users), len(split.valid_users), len(split.test_users))
        assert sizes == (77, 10, 10)

    def test_partition_properties(self, healthy_raw):
        corpus = make_corpus(healthy_raw)
        split = split_users(corpus, seed=5)
        all_users = set(split.train_users) | set(split.valid_users) | set(split.test_users)
        assert all_users == set(range(corpus.n_users))
        assert not set(split.train_users) & set(split.valid_users)
        assert not set(split.train_users) & set(split.test_users)
        assert not set(split.valid_users) & set(split.test_users)

    def test_too_few_users(self):
        raw = {f"u{j}": [f"i{i}" for i in range(6)] for j in range(5)}
        corpus = make_corpus(raw)
        trimmed = type(corpus)(
            user_ids=corpus.user_ids[:2],
            item_ids=corpus.item_ids,
            sequences=corpus.sequences[:2],
        )
        with pytest.raises(ValueError):
            split_users(trimmed, seed=0)


class TestTrainingInstances:
    def test_minimum_length_sequence(self):
        insts = list(training_instances(0, (10, 11, 12, 13, 14), l_max=20))
        assert len(insts) == 1
        inst = insts[0]
        assert inst.t == 4
        assert inst.history == (10, 11, 12, 13)
        assert inst.next_item == 14
        assert inst.future == frozenset({14})

    def test_recency_truncation(self):
        items = tuple(range(1, 10))  # v_1..v_9
        insts = {inst.t: inst for inst in training_instances(0, items, l_max=3)}
        assert insts[7].history == (5, 6, 7)

    def test_instance_count(self):
        items = tuple(range(8))
        assert len(list(training_instances(0, items, l_max=20))) == 4

    def test_count_future_and_history_bounds(self):
        rng = random.Random(1)
        for _ in range(30):
            n = rng.randrange(5, 40)
            l_max = rng.randrange(1, 25)
            items = tuple(rng.randrange(50) for _ in range(n))
            insts = list(training_instances(0, items, l_max))
            assert len(insts) == n - 4
            for inst in insts:
                assert inst.future
                assert len(inst.history) <= l_max
                assert inst.next_item in inst.future

    def test_too_short_raises(self):
        with pytest.raises(ValueError):
            list(training_instances(0, (1, 2, 3, 4), l_max=5))


class TestEvalSplit:
    def test_even_split(self):
        history, truth = eval_split(tuple(range(10)))
        assert len(history) == 8
        assert truth == frozenset({8, 9})

    def test_floor_keeps_tail_nonempty(self):
        history, truth = eval_split((1, 2, 3, 4, 5))
        assert len(history) == 4
        assert truth == frozenset({5})

    def test_repeated_tail_deduplicated(self):
        history, truth = eval_split((1, 2, 3, 4, 5, 6, 7, 8, 9, 9))
        assert truth == frozenset({9})


def test_corpus_persistence_roundtrip(tmp_path, healthy_raw):
    healthy_raw["uX"] = ["i0", "i1", "i2", "i3", "i4", "i0"]
    corpus = make_corpus(healthy_raw)
    split = split_users(corpus, seed=13)
    save_corpus(corpus, tmp_path)
    save_split(split, tmp_path)
    loaded = load_corpus(tmp_path)
    assert loaded.user_ids == corpus.user_ids
    assert loaded.item_ids == corpus.item_ids
    assert loaded.sequences == corpus.sequences
    assert load_split(tmp_path) == split
