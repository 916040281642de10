import math

import numpy as np
import pytest

from wslrec.corpus import Corpus, SplitCorpus, TrainingInstance, training_instances
from wslrec.modelfree import build_similarity, build_weights
from wslrec.seqmodel import init_scorer
from wslrec.trainer import (
    MinedFineTune,
    NextAll,
    NextC,
    TrainConfig,
    WeakUnion,
    adam_init,
    adam_step,
    batch_loss_and_grads,
    build_labels,
    fit,
    sample_negatives,
    sampled_softmax_loss,
    uniform_log_q,
)


def toy_corpus(seed=0, n_users=12, n_items=14, min_len=6, max_len=10):
    rng = np.random.default_rng(seed)
    seqs = []
    for _ in range(n_users):
        n = int(rng.integers(min_len, max_len + 1))
        seqs.append(tuple(int(v) for v in rng.integers(0, n_items, size=n)))
    return Corpus(
        user_ids=tuple(f"u{j}" for j in range(n_users)),
        item_ids=tuple(f"i{j}" for j in range(n_items)),
        sequences=tuple(seqs),
    )


def first_instance(corpus, user=0, l_max=20):
    return next(training_instances(user, corpus.sequences[user], l_max))


class TestLabelStrategies:
    def test_next1_is_single_next_item(self):
        corpus = toy_corpus()
        inst = first_instance(corpus)
        assert build_labels(NextC(corpus, 1), inst) == (inst.next_item,)

    def test_nextc_window_capped_at_sequence_end(self):
        corpus = Corpus(("u",), tuple("abcdefg"), ((0, 1, 2, 3, 4, 5, 6),))
        insts = {i.t: i for i in training_instances(0, corpus.sequences[0], 20)}
        assert build_labels(NextC(corpus, 3), insts[4]) == (4, 5, 6)
        assert build_labels(NextC(corpus, 10), insts[6]) == (6,)

    def test_nextall_is_future_set(self):
        corpus = toy_corpus()
        inst = first_instance(corpus, user=3)
        assert set(build_labels(NextAll(), inst)) == inst.future

    def test_weak_union_of_sources(self):
        corpus = toy_corpus(seed=5)
        table = build_similarity(build_weights(corpus, range(corpus.n_users)),
                                 prune_n=corpus.n_items, n_items=corpus.n_items)
        inst = first_instance(corpus, user=2)
        from wslrec.modelfree import br_topk, itemcf_topk

        strategy = WeakUnion(("br", "itemcf"), k_ws=3, table=table)
        expected = br_topk(inst.history, 3) | itemcf_topk(inst.history, table, 3)
        assert set(build_labels(strategy, inst)) == expected

    def test_weak_union_missing_artifacts(self):
        with pytest.raises(ValueError, match="similarity table"):
            WeakUnion(("itemcf",), k_ws=3)
        with pytest.raises(ValueError, match="reference"):
            WeakUnion(("original",), k_ws=3)
        with pytest.raises(ValueError):
            WeakUnion((), k_ws=3)

    def test_mined_finetune_intersection(self):
        inst = TrainingInstance(user=0, t=4, history=(1, 2, 3, 4), next_item=7,
                                future=frozenset({7, 8, 9}))
        mined = {(0, 4): frozenset({5, 8, 7})}
        assert build_labels(MinedFineTune(mined), inst) == (7, 8)

    def test_mined_finetune_degenerates_to_next_item(self):
        inst = TrainingInstance(user=0, t=4, history=(1, 2, 3, 4), next_item=7,
                                future=frozenset({7, 8, 9}))
        mined = {(0, 4): frozenset({1, 2})}
        assert build_labels(MinedFineTune(mined), inst) == (7,)

    def test_mined_finetune_missing_key(self):
        inst = TrainingInstance(user=0, t=4, history=(1,), next_item=7, future=frozenset({7}))
        with pytest.raises(KeyError, match="user=0, t=4"):
            build_labels(MinedFineTune({}), inst)

    def test_labels_never_empty(self):
        corpus = toy_corpus(seed=9)
        table = build_similarity(build_weights(corpus, range(corpus.n_users)),
                                 prune_n=corpus.n_items, n_items=corpus.n_items)
        strategies = [
            NextC(corpus, 1), NextC(corpus, 3), NextAll(),
            WeakUnion(("br", "itemcf"), k_ws=4, table=table),
        ]
        for user in range(corpus.n_users):
            for inst in training_instances(user, corpus.sequences[user], 20):
                for strategy in strategies:
                    assert len(build_labels(strategy, inst)) > 0


class TestSampleNegatives:
    def test_single_candidate(self):
        rng = np.random.default_rng(0)
        assert sample_negatives(rng, 2, 3, exclude={0}) == [1, 1, 1]

    def test_deterministic_under_seed(self):
        a = sample_negatives(np.random.default_rng(7), 50, 20, exclude={1, 2})
        b = sample_negatives(np.random.default_rng(7), 50, 20, exclude={1, 2})
        assert a == b

    def test_no_candidates_raises(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            sample_negatives(rng, 3, 1, exclude={0, 1, 2})

    def test_empirical_frequency_uniform(self):
        """Each item's frequency within 3 sigma of 1/|V| over 1e5 draws."""
        rng = np.random.default_rng(123)
        n_items, draws = 10, 100_000
        out = sample_negatives(rng, n_items, draws, exclude=())
        counts = np.bincount(out, minlength=n_items)
        p = 1.0 / n_items
        sigma = math.sqrt(draws * p * (1 - p))
        assert np.all(np.abs(counts - draws * p) <= 3 * sigma)

    def test_never_returns_excluded(self):
        rng = np.random.default_rng(5)
        out = sample_negatives(rng, 20, 500, exclude={3, 4, 5})
        assert not set(out) & {3, 4, 5}


def loss_only(model, instance, positives, negatives, log_q=None):
    value, _ = sampled_softmax_loss(model, instance, positives, negatives, log_q=log_q)
    return value


class TestSampledSoftmaxLoss:
    def make_instance(self, history=(1, 2, 3), next_item=4):
        return TrainingInstance(user=0, t=4, history=tuple(history),
                                next_item=next_item, future=frozenset({next_item}))

    def test_empty_negative_set_is_exactly_zero(self):
        model = init_scorer(10, 4, "meanpool", seed=0)
        value, grads = sampled_softmax_loss(model, self.make_instance(), [4], [])
        assert value == 0.0
        for g in grads.values():
            np.testing.assert_array_equal(g, np.zeros_like(g))

    def test_symmetric_two_way_softmax_is_log2(self):
        model = init_scorer(6, 3, "meanpool", seed=1)
        # make positive and negative items score identically
        model.params["embeddings"][5] = model.params["embeddings"][4]
        value, _ = sampled_softmax_loss(model, self.make_instance(), [4], [5])
        assert value == pytest.approx(math.log(2), rel=0, abs=1e-15)

    def test_uniform_proposal_correction_is_exact_noop(self):
        """f - log Q shifts every score equally; the loss must not move by
        even one ulp."""
        model = init_scorer(12, 4, "gru", seed=3)
        inst = self.make_instance(history=(0, 7, 7, 2), next_item=9)
        negs = [1, 3, 3, 8]
        plain = loss_only(model, inst, [9, 2], negs, log_q=None)
        corrected = loss_only(model, inst, [9, 2], negs, log_q=uniform_log_q(12))
        assert plain == corrected

    def test_loss_sums_over_positives(self):
        model = init_scorer(12, 4, "meanpool", seed=4)
        inst = self.make_instance()
        negs = [7, 8]
        both = loss_only(model, inst, [4, 5], negs)
        single_a = loss_only(model, inst, [4], negs)
        single_b = loss_only(model, inst, [5], negs)
        assert both == pytest.approx(single_a + single_b, rel=1e-12)

    def test_duplicate_negatives_count_twice(self):
        model = init_scorer(12, 4, "meanpool", seed=5)
        inst = self.make_instance()
        once = loss_only(model, inst, [4], [7])
        twice = loss_only(model, inst, [4], [7, 7])
        assert twice > once

    def test_positive_collision_filtered_from_pool(self):
        """Pool entries equal to a positive are ignored, not treated as
        negatives."""
        model = init_scorer(12, 4, "meanpool", seed=6)
        inst = self.make_instance()
        clean = loss_only(model, inst, [4], [7])
        collided = loss_only(model, inst, [4], [7, 4])
        assert collided == clean

    def test_non_finite_scores_raise_with_diagnostic(self):
        model = init_scorer(12, 4, "meanpool", seed=7)
        model.params["embeddings"][:] = 1e300  # inner products overflow
        with np.errstate(all="ignore"), pytest.raises(ValueError, match="non-finite"):
            sampled_softmax_loss(model, self.make_instance(), [4], [7])


def numeric_gradients(model, loss_fn, step=1e-6):
    grads = {}
    for name, arr in model.params.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            up = loss_fn()
            flat[idx] = orig - step
            down = loss_fn()
            flat[idx] = orig
            gflat[idx] = (up - down) / (2 * step)
        grads[name] = g
    return grads


def max_rel_error(analytic, numeric):
    worst = 0.0
    for name in analytic:
        denom = np.maximum(np.maximum(np.abs(analytic[name]), np.abs(numeric[name])), 1e-4)
        worst = max(worst, float((np.abs(analytic[name] - numeric[name]) / denom).max()))
    return worst


@pytest.mark.parametrize("encoder,m", [("meanpool", 1), ("gru", 1), ("multihead", 3)])
def test_gradients_match_central_differences(encoder, m):
    rng = np.random.default_rng(hash(encoder) % 2**32)
    model = init_scorer(9, 3, encoder, m=m, seed=17)
    inst = TrainingInstance(user=0, t=4, history=(1, 5, 2, 5), next_item=6,
                            future=frozenset({6, 7}))
    positives = [6, 7]
    negatives = [0, 3, 3, 8]
    _, analytic = sampled_softmax_loss(model, inst, positives, negatives)
    numeric = numeric_gradients(model, lambda: loss_only(model, inst, positives, negatives))
    assert max_rel_error(analytic, numeric) < 1e-4


class TestAdam:
    def test_zero_gradient_leaves_params_unchanged(self):
        params = {"w": np.array([1.0, -2.0, 3.0])}
        state = adam_init(params)
        adam_step(state, params, {"w": np.zeros(3)}, lr=0.1)
        np.testing.assert_array_equal(params["w"], [1.0, -2.0, 3.0])

    def test_first_step_bounded_by_lr(self):
        rng = np.random.default_rng(2)
        params = {"w": rng.normal(size=20)}
        before = params["w"].copy()
        state = adam_init(params)
        grad = rng.normal(size=20) * 100
        adam_step(state, params, {"w": grad}, lr=0.01)
        delta = params["w"] - before
        assert np.all(np.abs(delta) <= 0.01 * (1 + 1e-9))
        assert np.all(np.sign(delta[grad != 0]) == -np.sign(grad[grad != 0]))

    def test_matches_scalar_adam_on_quadratic(self):
        """10 steps on f(x) = sum (x - target)^2 vs a hand-coded scalar Adam."""
        target = np.array([1.0, -0.5, 2.0])
        params = {"x": np.zeros(3)}
        state = adam_init(params)
        for _ in range(10):
            adam_step(state, params, {"x": 2 * (params["x"] - target)}, lr=0.05)

        x = [0.0, 0.0, 0.0]
        m = [0.0] * 3
        v = [0.0] * 3
        b1, b2, eps = 0.9, 0.999, 1e-8
        for t in range(1, 11):
            for i in range(3):
                g = 2 * (x[i] - target[i])
                m[i] = b1 * m[i] + (1 - b1) * g
                v[i] = b2 * v[i] + (1 - b2) * g * g
                mhat = m[i] / (1 - b1 ** t)
                vhat = v[i] / (1 - b2 ** t)
                x[i] -= 0.05 * mhat / (math.sqrt(vhat) + eps)
        np.testing.assert_allclose(params["x"], x, rtol=1e-12)

    def test_shape_mismatch_raises(self):
        params = {"w": np.zeros(3)}
        state = adam_init(params)
        with pytest.raises(ValueError):
            adam_step(state, params, {"w": np.zeros(4)}, lr=0.1)


def make_split(corpus, n_valid=2, n_test=2):
    users = list(range(corpus.n_users))
    return SplitCorpus(
        train_users=tuple(users[: -n_valid - n_test]),
        valid_users=tuple(users[-n_valid - n_test: -n_test]),
        test_users=tuple(users[-n_test:]),
    )


class TestFit:
    def test_early_stopping_returns_second_eval_params(self):
        """Metric sequence .10/.12/.11 with patience 1: stop at the third
        evaluation and keep the second evaluation's parameters."""
        corpus = toy_corpus(seed=2)
        split = make_split(corpus)
        metrics = iter([0.10, 0.12, 0.11, 0.0, 0.0])
        snapshots = []

        def hook(model):
            snapshots.append(model.params["embeddings"].copy())
            return next(metrics)

        cfg = TrainConfig(batch_size=4, negatives_per_instance=2, max_iterations=100,
                          eval_interval=10, patience=1, seed=0, max_history=8)
        model = init_scorer(corpus.n_items, 4, "meanpool", seed=0)
        trained, log = fit(model, corpus, split, NextC(corpus, 1), cfg, eval_hook=hook)
        assert len(log) == 3
        assert [r["best"] for r in log] == [True, True, False]
        assert log[-1]["iter"] == 20
        np.testing.assert_array_equal(trained.params["embeddings"], snapshots[1])

    def test_deterministic_log_and_params(self):
        corpus = toy_corpus(seed=3)
        split = make_split(corpus)
        cfg = TrainConfig(batch_size=4, negatives_per_instance=3, max_iterations=30,
                          eval_interval=10, patience=50, seed=11, max_history=8, eval_k=5)
        runs = []
        for _ in range(2):
            model = init_scorer(corpus.n_items, 4, "gru", seed=1)
            trained, log = fit(model, corpus, split, NextC(corpus, 1), cfg)
            runs.append((trained, log))
        assert runs[0][1] == runs[1][1]
        for name in runs[0][0].params:
            np.testing.assert_array_equal(runs[0][0].params[name], runs[1][0].params[name])

    def test_zero_iterations_returns_initial_params(self):
        corpus = toy_corpus(seed=4)
        split = make_split(corpus)
        cfg = TrainConfig(batch_size=4, max_iterations=0, eval_interval=10, seed=0,
                          max_history=8, eval_k=5)
        model = init_scorer(corpus.n_items, 4, "multihead", m=2, seed=9)
        trained, log = fit(model, corpus, split, NextAll(), cfg)
        assert [r["iter"] for r in log] == [0]
        for name in model.params:
            np.testing.assert_array_equal(trained.params[name], model.params[name])

    def test_loss_finite_and_decreasing_on_planted_corpus(self):
        """First hundred iterations on a cluster-structured corpus: every
        logged loss finite, later window below the first."""
        from wslrec.corpus import build_sequences, filter_corpus, ingest_events, split_users
        from wslrec.synth import SynthConfig, generate

        synth = SynthConfig(n_users=60, n_items=40, n_clusters=4, p_in=0.8,
                            repeat_prob=0.3, min_len=8, max_len=14, seed=12)
        corpus = filter_corpus(build_sequences(ingest_events(generate(synth))))
        split = split_users(corpus, seed=1)
        cfg = TrainConfig(batch_size=8, negatives_per_instance=4, learning_rate=0.01,
                          max_iterations=100, eval_interval=25, patience=50, seed=3,
                          max_history=8, eval_k=5)
        model = init_scorer(corpus.n_items, 8, "meanpool", seed=2)
        _, log = fit(model, corpus, split, NextC(corpus, 1), cfg)
        losses = [r["loss_avg"] for r in log if r["loss_avg"] is not None]
        assert all(np.isfinite(v) for v in losses)
        assert losses[-1] < losses[0]

    def test_flat_negative_pooling(self):
        corpus = toy_corpus(seed=6)
        split = make_split(corpus)
        cfg = TrainConfig(batch_size=4, negatives_per_instance=3, max_iterations=5,
                          eval_interval=5, seed=0, max_history=8, eval_k=5,
                          negatives_pooling="flat")
        model = init_scorer(corpus.n_items, 4, "meanpool", seed=0)
        trained, log = fit(model, corpus, split, NextC(corpus, 1), cfg)
        assert len(log) == 2


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(proposal="unigram")
    with pytest.raises(ValueError):
        TrainConfig(negatives_pooling="bogus")
