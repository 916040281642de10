"""Three-stage training orchestration and the set-merging ensemble.

Stage 1 pre-trains a fresh scorer on the union of the configured weak
sources (recent-history retargeting, item-CF neighbors, optionally a
reference model's top-k). Stage 2 mines, for every training instance, the
exact unrestricted top-``mining_k`` under the pre-trained scorer. Stage 3
fine-tunes from the pre-trained parameters with positives = next item plus
the mined items confirmed by the future set. Intermediate artifacts are
persisted so any stage can be rerun or ablated in isolation.
"""

from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .corpus import Corpus, SplitCorpus, training_instances
from .modelfree import SimilarityTable
from .seqmodel import (
    SequenceScorer,
    ensure_compatible,
    init_scorer,
    save_checkpoint,
    topk_items,
)
from .trainer import MinedFineTune, TrainConfig, WeakUnion, fit

__all__ = [
    "WeakSupervisionConfig",
    "EncoderConfig",
    "WslrecResult",
    "pretrain",
    "mine_topk",
    "finetune",
    "run_wslrec",
    "ensemble_topk",
    "tune_ensemble",
    "save_mined",
    "load_mined",
    "save_recommendations",
    "load_recommendations",
]


@dataclass(frozen=True)
class WeakSupervisionConfig:
    sources: tuple[str, ...] = ("br", "itemcf")
    k_ws: int = 20
    mining_k: int = 50
    include_history: bool = False

    def __post_init__(self):
        if not self.sources:
            raise ValueError("weak-supervision source set must be nonempty")
        if self.k_ws < 1 or self.mining_k < 1:
            raise ValueError("k_ws and mining_k must be positive")


@dataclass(frozen=True)
class EncoderConfig:
    encoder: str = "gru"
    dim: int = 64
    m: int = 1


@dataclass
class WslrecResult:
    pretrained: SequenceScorer
    mined: dict[tuple[int, int], frozenset[int]]
    finetuned: SequenceScorer
    pretrain_log: list[dict]
    finetune_log: list[dict]


def pretrain(
    corpus: Corpus,
    split: SplitCorpus,
    weak_cfg: WeakSupervisionConfig,
    enc_cfg: EncoderConfig,
    train_cfg: TrainConfig,
    table: SimilarityTable | None = None,
    ref_model: SequenceScorer | None = None,
    init_seed: int | None = None,
    eval_hook=None,
) -> tuple[SequenceScorer, list[dict]]:
    """Train a freshly initialized scorer on the weak-source union."""
    strategy = WeakUnion(weak_cfg.sources, weak_cfg.k_ws, table=table,
                         ref_model=ref_model, include_history=weak_cfg.include_history)
    model = init_scorer(corpus.n_items, enc_cfg.dim, enc_cfg.encoder, m=enc_cfg.m,
                        seed=train_cfg.seed if init_seed is None else init_seed)
    return fit(model, corpus, split, strategy, train_cfg, eval_hook=eval_hook)


def mine_topk(
    model: SequenceScorer,
    corpus: Corpus,
    split: SplitCorpus,
    mining_k: int,
    max_history: int = 20,
    threads: int = 1,
) -> dict[tuple[int, int], frozenset[int]]:
    """Exact unrestricted top-k sets for every training instance.

    Mining is read-only over the model, so instances may be scored on a
    thread pool; results are merged in instance order either way.
    """
    ensure_compatible(model, corpus.n_items)
    if mining_k < 1:
        raise ValueError(f"mining_k must be positive, got {mining_k}")
    keys: list[tuple[int, int]] = []
    histories: list[tuple[int, ...]] = []
    for user in split.train_users:
        for inst in training_instances(user, corpus.sequences[user], max_history):
            keys.append((user, inst.t))
            histories.append(inst.history)

    def mine_one(history):
        return frozenset(topk_items(model, history, mining_k))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sets = list(pool.map(mine_one, histories, chunksize=64))
    else:
        sets = [mine_one(h) for h in histories]
    return dict(zip(keys, sets))


def finetune(
    pre_model: SequenceScorer,
    mined: dict[tuple[int, int], frozenset[int]],
    corpus: Corpus,
    split: SplitCorpus,
    train_cfg: TrainConfig,
    eval_hook=None,
) -> tuple[SequenceScorer, list[dict]]:
    """Continue training from the pre-trained parameters on mined labels."""
    missing = []
    for user in split.train_users:
        for inst in training_instances(user, corpus.sequences[user], train_cfg.max_history):
            if (user, inst.t) not in mined:
                missing.append((user, inst.t))
    if missing:
        shown = ", ".join(str(k) for k in missing[:10])
        more = f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""
        raise ValueError(f"mined table is missing instances: {shown}{more}")
    return fit(pre_model, corpus, split, MinedFineTune(mined), train_cfg, eval_hook=eval_hook)


def run_wslrec(
    corpus: Corpus,
    split: SplitCorpus,
    weak_cfg: WeakSupervisionConfig,
    enc_cfg: EncoderConfig,
    train_cfg: TrainConfig,
    table: SimilarityTable | None = None,
    ref_model: SequenceScorer | None = None,
    out_dir=None,
    threads: int = 1,
) -> WslrecResult:
    """Pre-train, mine, fine-tune; persist stage artifacts under ``out_dir``."""
    from .config import derive_seed

    root = train_cfg.seed
    pre_cfg = replace(train_cfg, seed=derive_seed(root, "pretrain"))
    fin_cfg = replace(train_cfg, seed=derive_seed(root, "finetune"))
    pre_model, pre_log = pretrain(corpus, split, weak_cfg, enc_cfg, pre_cfg,
                                  table=table, ref_model=ref_model,
                                  init_seed=derive_seed(root, "init"))
    mined = mine_topk(pre_model, corpus, split, weak_cfg.mining_k,
                      max_history=train_cfg.max_history, threads=threads)
    fin_model, fin_log = finetune(pre_model, mined, corpus, split, fin_cfg)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / "pretrained.ckpt", pre_model)
        save_mined(out / "mined.tsv", mined)
        save_checkpoint(out / "finetuned.ckpt", fin_model)
        _write_log(out / "pretrain.log.jsonl", pre_log)
        _write_log(out / "finetune.log.jsonl", fin_log)
    return WslrecResult(pretrained=pre_model, mined=mined, finetuned=fin_model,
                        pretrain_log=pre_log, finetune_log=fin_log)


def _write_log(path, records: list[dict]) -> None:
    import json

    with io.open(Path(path), "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


def ensemble_topk(
    br_list: list[int],
    itemcf_list: list[int],
    model_list: list[int],
    k: int,
    a: int,
    b: int,
    c: int,
) -> list[int]:
    """Merge the top-a/top-b/top-c lists, dedupe, backfill from the model.

    First occurrences win; when duplicates shrink the merge below k, the
    model's next-ranked items fill the gap (so ``model_list`` should be
    deeper than c). May return fewer than k items if the model list runs
    out.
    """
    if a < 0 or b < 0 or c < 0 or a + b + c != k:
        raise ValueError(f"need a+b+c == k, got {a}+{b}+{c} != {k}")
    merged: list[int] = []
    seen: set[int] = set()
    for item in list(br_list[:a]) + list(itemcf_list[:b]) + list(model_list[:c]):
        if item not in seen:
            seen.add(item)
            merged.append(item)
    for item in model_list[c:]:
        if len(merged) >= k:
            break
        if item not in seen:
            seen.add(item)
            merged.append(item)
    return merged[:k]


def tune_ensemble(
    per_user_lists: dict[int, tuple[list[int], list[int], list[int]]],
    truths: dict[int, frozenset],
    k: int,
    step: int | None = None,
) -> tuple[int, int, int]:
    """Grid-search (a, b, c) maximizing mean recall@k on the given users.

    Steps default to k/10; ties resolve to the first triple in (a, b)
    lexicographic order.
    """
    if step is None:
        step = max(1, k // 10)
    users = sorted(per_user_lists)
    best = None
    best_recall = -1.0
    for a in range(0, k + 1, step):
        for b in range(0, k - a + 1, step):
            c = k - a - b
            total = 0.0
            for user in users:
                br_list, icf_list, model_list = per_user_lists[user]
                merged = ensemble_topk(br_list, icf_list, model_list, k, a, b, c)
                truth = truths[user]
                total += len(set(merged) & truth) / len(truth)
            recall = total / len(users)
            if recall > best_recall:
                best_recall = recall
                best = (a, b, c)
    return best


# --- artifact files -----------------------------------------------------------
#
# Mined table: user<TAB>t<TAB>item,item,...  (items ascending; keys in
# (user, t) order). Recommendation lists: user<TAB>item,item,... in rank
# order, one user per line.


def save_mined(path, mined: dict[tuple[int, int], frozenset[int]]) -> None:
    with io.open(Path(path), "w", encoding="utf-8", newline="\n") as fh:
        for user, t in sorted(mined):
            items = ",".join(str(v) for v in sorted(mined[(user, t)]))
            fh.write(f"{user}\t{t}\t{items}\n")


def load_mined(path) -> dict[tuple[int, int], frozenset[int]]:
    mined: dict[tuple[int, int], frozenset[int]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        user, t, items = line.split("\t")
        mined[(int(user), int(t))] = frozenset(int(v) for v in items.split(",") if v)
    return mined


def save_recommendations(path, recs: dict[int, list[int]]) -> None:
    with io.open(Path(path), "w", encoding="utf-8", newline="\n") as fh:
        for user in sorted(recs):
            fh.write(f"{user}\t{','.join(str(v) for v in recs[user])}\n")


def load_recommendations(path) -> dict[int, list[int]]:
    recs: dict[int, list[int]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        user, _, items = line.partition("\t")
        recs[int(user)] = [int(v) for v in items.split(",") if v]
    return recs
