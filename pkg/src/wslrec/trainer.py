"""Training: positive-label strategies, sampled softmax, Adam, fit loop.

The loss for one training instance sums, over its positive items, the
sampled-softmax negative log likelihood against a shared pool of uniformly
drawn negatives (each instance filters the pool against its own positives).
The per-positive term is computed in difference form,

    loss = M + log(exp(-M) + sum_n exp(d_n - M)),   d_n = f(neg_n) - f(pos),

with M = max(0, max_n d_n), which is the numerically stable evaluation of
log(exp(f_pos) + sum exp(f_neg)) - f_pos. Because only score differences
enter, the proposal-distribution correction f - log Q cancels exactly under
a uniform Q. Gradients are exact reverse-mode passes through the scorer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import Corpus, SplitCorpus, TrainingInstance, eval_split, training_instances
from .modelfree import SimilarityTable, br_topk, itemcf_topk
from .seqmodel import (
    SequenceScorer,
    encode_backward,
    encode_batch,
    ensure_compatible,
    pad_histories,
    scatter_add_rows,
    topk_batch,
    topk_items,
)

__all__ = [
    "TrainConfig",
    "AdamState",
    "NextC",
    "NextAll",
    "WeakUnion",
    "MinedFineTune",
    "build_labels",
    "sample_negatives",
    "sampled_softmax_loss",
    "batch_loss_and_grads",
    "adam_init",
    "adam_step",
    "uniform_log_q",
    "validation_recall_hook",
    "fit",
]

WEAK_SOURCES = ("br", "itemcf", "original")


@dataclass
class TrainConfig:
    batch_size: int = 256
    negatives_per_instance: int = 10
    learning_rate: float = 0.001
    max_iterations: int = 10_000
    patience: int = 5
    eval_interval: int = 1000
    seed: int = 0
    proposal: str = "uniform"
    eval_k: int = 50
    max_history: int = 20
    negatives_pooling: str = "scaled"  # "scaled": batch_size*n pool; "flat": n total

    def __post_init__(self):
        for name in ("batch_size", "negatives_per_instance", "learning_rate",
                     "patience", "eval_interval", "eval_k", "max_history"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")
        if self.proposal != "uniform":
            raise ValueError(f"unsupported proposal distribution {self.proposal!r}")
        if self.negatives_pooling not in ("scaled", "flat"):
            raise ValueError(f"unknown negatives_pooling {self.negatives_pooling!r}")

    def pool_size(self) -> int:
        if self.negatives_pooling == "scaled":
            return self.batch_size * self.negatives_per_instance
        return self.negatives_per_instance


# --- label strategies --------------------------------------------------------


class NextC:
    """Positives are the next c items of the sequence (c=1 is the standard
    next-item convention)."""

    def __init__(self, corpus: Corpus, c: int = 1):
        if c < 1:
            raise ValueError(f"c must be positive, got {c}")
        self.corpus = corpus
        self.c = c

    def positives(self, inst: TrainingInstance) -> tuple[int, ...]:
        seq = self.corpus.sequences[inst.user]
        return tuple(sorted(set(seq[inst.t:inst.t + self.c])))


class NextAll:
    """Positives are the entire future item set."""

    def positives(self, inst: TrainingInstance) -> tuple[int, ...]:
        return tuple(sorted(inst.future))


class WeakUnion:
    """Union of the configured model-free / model top-k sets for the history.

    Sources: "br" (recent history items), "itemcf" (similarity-table
    neighbors, needs ``table``), "original" (top-k of a reference scorer,
    needs ``ref_model``). Should every source come back empty (possible for
    a sparse similarity table), the next item stands in so the positive set
    is never empty.
    """

    def __init__(
        self,
        sources: Iterable[str],
        k_ws: int = 20,
        table: SimilarityTable | None = None,
        ref_model: SequenceScorer | None = None,
        include_history: bool = False,
    ):
        self.sources = tuple(dict.fromkeys(sources))
        if not self.sources:
            raise ValueError("weak-supervision source set must be nonempty")
        unknown = [s for s in self.sources if s not in WEAK_SOURCES]
        if unknown:
            raise ValueError(f"unknown weak-supervision sources {unknown}")
        if k_ws < 1:
            raise ValueError(f"k_ws must be positive, got {k_ws}")
        if "itemcf" in self.sources and table is None:
            raise ValueError("source 'itemcf' requires a similarity table")
        if "original" in self.sources and ref_model is None:
            raise ValueError("source 'original' requires a reference checkpoint")
        self.k_ws = k_ws
        self.table = table
        self.ref_model = ref_model
        self.include_history = include_history
        self._cache: dict[tuple[int, int], tuple[int, ...]] = {}

    def positives(self, inst: TrainingInstance) -> tuple[int, ...]:
        key = (inst.user, inst.t)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        out: set[int] = set()
        if "br" in self.sources:
            out |= br_topk(inst.history, self.k_ws)
        if "itemcf" in self.sources:
            out |= itemcf_topk(inst.history, self.table, self.k_ws,
                               include_history=self.include_history)
        if "original" in self.sources:
            out |= set(topk_items(self.ref_model, inst.history, self.k_ws))
        if not out:
            out = {inst.next_item}
        result = tuple(sorted(out))
        self._cache[key] = result
        return result


class MinedFineTune:
    """Next item plus the mined top-k items confirmed by the future set."""

    def __init__(self, mined: dict[tuple[int, int], frozenset[int]]):
        self.mined = mined

    def positives(self, inst: TrainingInstance) -> tuple[int, ...]:
        key = (inst.user, inst.t)
        try:
            mined_set = self.mined[key]
        except KeyError:
            raise KeyError(f"mined table has no entry for (user={inst.user}, t={inst.t})") from None
        return tuple(sorted({inst.next_item} | (mined_set & inst.future)))


def build_labels(strategy, inst: TrainingInstance) -> tuple[int, ...]:
    """Positive item set for one training instance under a strategy."""
    return strategy.positives(inst)


# --- negatives and loss ------------------------------------------------------


def sample_negatives(rng: np.random.Generator, n_items: int, count: int,
                     exclude: Iterable[int], proposal: str = "uniform") -> list[int]:
    """Draw ``count`` items i.i.d. from the proposal, rejecting ``exclude``."""
    if proposal != "uniform":
        raise ValueError(f"unsupported proposal distribution {proposal!r}")
    excl = {v for v in exclude if 0 <= v < n_items}
    if n_items - len(excl) < 1:
        raise ValueError("exclusion leaves no negative candidates")
    out: list[int] = []
    while len(out) < count:
        draw = int(rng.integers(0, n_items))
        if draw not in excl:
            out.append(draw)
    return out


def uniform_log_q(n_items: int) -> np.ndarray:
    """log Q(v) for a uniform proposal over the item set."""
    return np.full(n_items, -math.log(n_items))


def batch_loss_and_grads(
    model: SequenceScorer,
    histories: Sequence[Sequence[int]],
    positives: Sequence[Sequence[int]],
    pool: np.ndarray,
    scale: float = 1.0,
    log_q: np.ndarray | None = None,
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Per-instance losses and scaled gradients over all parameters.

    ``pool`` is the batch-shared negative candidate list; each instance
    ignores pool entries that collide with its own positives. Returns the
    unscaled per-instance loss vector and gradients of
    ``scale * sum(losses)``.
    """
    B = len(histories)
    if B == 0 or len(positives) != B:
        raise ValueError("histories and positives must be equal-length and nonempty")
    for pos in positives:
        if len(pos) == 0:
            raise ValueError("every instance needs at least one positive item")

    padded, mask = pad_histories(histories)
    H, cache = encode_batch(model, padded, mask)  # (B, m, d)
    E = model.params["embeddings"]
    m = model.m

    pool = np.asarray(pool, dtype=np.int64)
    P = pool.size
    counts = np.fromiter((len(p) for p in positives), dtype=np.intp, count=B)
    starts = np.zeros(B, dtype=np.intp)
    np.cumsum(counts[:-1], out=starts[1:])
    inst_idx = np.repeat(np.arange(B), counts)
    pos_items = np.concatenate([np.asarray(p, dtype=np.int64) for p in positives])

    # The proposal correction f - log Q enters only up to a global constant
    # (softmax losses are shift invariant), so it is applied normalized to
    # max 0; for a uniform Q that is an exact elementwise no-op.
    corr = None
    if log_q is not None:
        corr = log_q - log_q.max()

    if m == 1:
        h = H[:, 0, :]  # (B, d)
        f_pos = np.einsum("wd,wd->w", h[inst_idx], E[pos_items])
        head_pos = None
    else:
        head_scores_pos = np.einsum("wmd,wd->wm", H[inst_idx], E[pos_items])
        head_pos = head_scores_pos.argmax(axis=1)
        f_pos = head_scores_pos.max(axis=1)
    if corr is not None:
        f_pos = f_pos - corr[pos_items]

    # Per instance i: a_i = max valid pool score, T_i = sum exp(s_n - a_i).
    # Per positive w of i: loss_w = logsumexp(f_w, pool scores) - f_w, i.e.
    # log(exp(f_w - c_w) + exp(a_i - c_w) T_i) + c_w - f_w, c_w = max(f_w, a_i).
    if P:
        pool_E = E[pool]
        if m == 1:
            s_pool = H[:, 0, :] @ pool_E.T  # (B, P)
            head_pool = None
        else:
            head_scores_pool = np.einsum("bmd,pd->bmp", H, pool_E)
            head_pool = head_scores_pool.argmax(axis=1)  # (B, P)
            s_pool = head_scores_pool.max(axis=1)
        if corr is not None:
            s_pool = s_pool - corr[pool][None, :]
        # drop pool entries colliding with any positive of the same instance
        # (searchsorted over the sorted pool; avoids a (positives x pool) grid)
        pool_order = np.argsort(pool, kind="stable")
        pool_sorted = pool[pool_order]
        lo = np.searchsorted(pool_sorted, pos_items, side="left")
        hi = np.searchsorted(pool_sorted, pos_items, side="right")
        lens = hi - lo
        collide = np.zeros((B, P), dtype=bool)
        matched = np.flatnonzero(lens)
        if matched.size:
            mlens = lens[matched]
            rows = np.repeat(inst_idx[matched], mlens)
            offsets = np.repeat(np.cumsum(mlens) - mlens, mlens)
            ranks = np.arange(mlens.sum()) - offsets + np.repeat(lo[matched], mlens)
            collide[rows, pool_order[ranks]] = True
        s_pool = np.where(collide, -np.inf, s_pool)
        has_negs = ~collide.all(axis=1)
        a = np.where(has_negs, s_pool.max(axis=1, initial=-np.inf), 0.0)
        expd = np.exp(s_pool - a[:, None])  # zeros at excluded entries
        T = expd.sum(axis=1)
    else:
        has_negs = np.zeros(B, dtype=bool)
        a = np.zeros(B)
        T = np.zeros(B)

    a_w = a[inst_idx]
    c_w = np.maximum(f_pos, a_w)
    zpos = np.exp(f_pos - c_w)
    zneg = np.exp(a_w - c_w) * T[inst_idx]
    z_w = zpos + zneg
    term_losses = np.where(has_negs[inst_idx], np.log(z_w) + c_w - f_pos, 0.0)
    if not np.isfinite(term_losses).all():
        bad = int(np.flatnonzero(~np.isfinite(term_losses))[0])
        raise ValueError(
            f"non-finite loss for instance {int(inst_idx[bad])} "
            f"(positive item {int(pos_items[bad])}); scores may have diverged"
        )
    inst_losses = np.bincount(inst_idx, weights=term_losses, minlength=B)

    # gradients of scale * sum(term_losses)
    df_pos = (zpos / z_w - 1.0) * scale  # exact zero when no valid negatives
    dH = np.zeros_like(H)
    if P:
        ratio = np.exp(a_w - c_w) / z_w
        pool_coeff = np.bincount(inst_idx, weights=ratio, minlength=B) * scale
        d_s_pool = expd * pool_coeff[:, None]  # (B, P)

    if m == 1:
        dh = np.add.reduceat(df_pos[:, None] * E[pos_items], starts, axis=0)
        if P:
            dh += d_s_pool @ pool_E
        dH[:, 0, :] = dh
        grads = encode_backward(model, cache, dH)
        dE = grads["embeddings"]
        scatter_add_rows(dE, pos_items, df_pos[:, None] * H[inst_idx, 0, :])
        if P:
            scatter_add_rows(dE, pool, d_s_pool.T @ H[:, 0, :])
        return inst_losses, grads

    pool_emb_grad = np.zeros((P, E.shape[1])) if P else None
    for j in range(m):
        sel = head_pos == j
        if sel.any():
            scatter_add_rows(dH[:, j, :], inst_idx[sel], df_pos[sel, None] * E[pos_items[sel]])
        if P:
            d_head = np.where(head_pool == j, d_s_pool, 0.0)
            dH[:, j, :] += d_head @ pool_E
            pool_emb_grad += d_head.T @ H[:, j, :]
    grads = encode_backward(model, cache, dH)
    dE = grads["embeddings"]
    for j in range(m):
        sel = head_pos == j
        if sel.any():
            scatter_add_rows(dE, pos_items[sel], df_pos[sel, None] * H[inst_idx[sel], j, :])
    if P:
        scatter_add_rows(dE, pool, pool_emb_grad)
    return inst_losses, grads


def sampled_softmax_loss(
    model: SequenceScorer,
    instance: TrainingInstance,
    positives: Sequence[int],
    negatives: Sequence[int],
    log_q: np.ndarray | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and exact gradients for a single training instance.

    The loss sums the per-positive sampled-softmax terms; an empty negative
    list gives exactly zero.
    """
    losses, grads = batch_loss_and_grads(
        model, [instance.history], [tuple(positives)],
        np.asarray(list(negatives), dtype=np.int64), scale=1.0, log_q=log_q,
    )
    return float(losses[0]), grads


# --- Adam ---------------------------------------------------------------------


@dataclass
class AdamState:
    first: dict[str, np.ndarray]
    second: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: dict[str, np.ndarray], beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(
        first={name: np.zeros_like(arr) for name, arr in params.items()},
        second={name: np.zeros_like(arr) for name, arr in params.items()},
        beta1=beta1, beta2=beta2, eps=eps,
    )


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray], lr: float) -> dict[str, np.ndarray]:
    """Bias-corrected Adam update, in place."""
    for name, param in params.items():
        if name not in grads or grads[name].shape != param.shape:
            raise ValueError(f"gradient for {name!r} missing or shape-mismatched")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, param in params.items():
        g = grads[name]
        m = state.first[name]
        v = state.second[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        param -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


# --- fit loop -----------------------------------------------------------------


def validation_recall_hook(corpus: Corpus, users: Sequence[int], k: int = 50,
                           max_history: int = 20) -> Callable[[SequenceScorer], float]:
    """Mean recall@k over the users' 80/20 evaluation splits."""
    histories = []
    truths = []
    for user in sorted(users):
        hist, truth = eval_split(corpus.sequences[user])
        histories.append(hist[-max_history:])
        truths.append(truth)
    if not histories:
        raise ValueError("no users to evaluate")

    def hook(model: SequenceScorer) -> float:
        ranked = topk_batch(model, histories, k)
        return float(np.mean([len(set(r) & t) / len(t) for r, t in zip(ranked, truths)]))

    return hook


def fit(
    model: SequenceScorer,
    corpus: Corpus,
    split: SplitCorpus,
    strategy,
    config: TrainConfig,
    eval_hook: Callable[[SequenceScorer], float] | None = None,
) -> tuple[SequenceScorer, list[dict]]:
    """Minibatch training with periodic validation and early stopping.

    Shuffles the training instances each pass with the seeded generator,
    shares one uniform negative pool per batch, evaluates ``eval_hook``
    before training and every ``eval_interval`` iterations, and stops after
    ``patience`` consecutive non-improving evaluations or at
    ``max_iterations``. Returns the best-validation parameters plus the
    evaluation log.
    """
    ensure_compatible(model, corpus.n_items)
    model = model.copy()
    if eval_hook is None:
        eval_hook = validation_recall_hook(corpus, split.valid_users,
                                           k=config.eval_k, max_history=config.max_history)

    instances: list[TrainingInstance] = []
    for user in split.train_users:
        instances.extend(training_instances(user, corpus.sequences[user], config.max_history))
    if not instances:
        raise ValueError("the training split yields no instances")

    rng = np.random.default_rng(config.seed)
    adam = adam_init(model.params)
    pool_size = config.pool_size()
    metric_key = f"recall{config.eval_k}_val"

    order = np.arange(len(instances))
    cursor = len(instances)  # forces a shuffle before the first batch
    pos_arrays: dict[int, np.ndarray] = {}  # instance index -> positives
    log: list[dict] = []
    best_metric = -math.inf
    best_params = {name: arr.copy() for name, arr in model.params.items()}
    bad_evals = 0
    window: list[float] = []

    def run_eval(iteration: int) -> None:
        nonlocal best_metric, best_params, bad_evals
        metric = float(eval_hook(model))
        improved = metric > best_metric
        if improved:
            best_metric = metric
            best_params = {name: arr.copy() for name, arr in model.params.items()}
            bad_evals = 0
        else:
            bad_evals += 1
        log.append({
            "iter": iteration,
            "loss_avg": float(np.mean(window)) if window else None,
            metric_key: metric,
            "best": improved,
        })
        window.clear()

    run_eval(0)
    iteration = 0
    while iteration < config.max_iterations:
        if cursor >= len(order):
            rng.shuffle(order)
            cursor = 0
        batch_ids = order[cursor:cursor + config.batch_size]
        cursor += len(batch_ids)
        batch = [instances[i] for i in batch_ids]
        pool = rng.integers(0, corpus.n_items, size=pool_size)
        positives = []
        for i in batch_ids:
            arr = pos_arrays.get(i)
            if arr is None:
                arr = np.asarray(strategy.positives(instances[i]), dtype=np.int64)
                pos_arrays[int(i)] = arr
            positives.append(arr)
        losses, grads = batch_loss_and_grads(model, [b.history for b in batch],
                                             positives, pool, scale=1.0 / len(batch))
        adam_step(adam, model.params, grads, config.learning_rate)
        window.append(float(losses.mean()))
        iteration += 1
        if iteration % config.eval_interval == 0:
            run_eval(iteration)
            if bad_evals >= config.patience:
                break

    model.params = best_params
    return model, log
