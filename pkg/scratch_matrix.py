"""Probe matrix: where does the pipeline lose relative to next-1?"""
import sys
import time

import numpy as np

from wslrec.config import derive_seed
from wslrec.corpus import (build_sequences, eval_split, filter_corpus, ingest_events,
                           split_users, training_instances)
from wslrec.modelfree import br_ranked, build_similarity, build_weights
from wslrec.pipeline import mine_topk
from wslrec.seqmodel import init_scorer, topk_items
from wslrec.synth import SynthConfig, generate
from wslrec.trainer import MinedFineTune, NextC, TrainConfig, WeakUnion, fit

MAX_HISTORY = int(sys.argv[1]) if len(sys.argv) > 1 else 15
LR = float(sys.argv[2]) if len(sys.argv) > 2 else 0.001
PAT = 10
DIM = int(sys.argv[3]) if len(sys.argv) > 3 else 64
BATCH = int(sys.argv[4]) if len(sys.argv) > 4 else 64

cfg = SynthConfig(n_users=1000, n_items=500, n_clusters=10, p_in=0.8, repeat_prob=0.3,
                  min_len=30, max_len=50, seed=0)
corpus = filter_corpus(build_sequences(ingest_events(generate(cfg))))
split = split_users(corpus, seed=derive_seed(0, "split"))
table = build_similarity(build_weights(corpus, split.train_users), prune_n=200,
                         n_items=corpus.n_items)


def test_recall(model, k=20):
    out = []
    for u in split.test_users:
        hist, truth = eval_split(corpus.sequences[u])
        out.append(len(set(topk_items(model, hist[-MAX_HISTORY:], k)) & truth) / len(truth))
    return float(np.mean(out))


def br_overlap(model, k=20):
    """How much of BR's top-k the model's top-k reproduces."""
    out = []
    for u in split.test_users[:40]:
        hist, _ = eval_split(corpus.sequences[u])
        br = set(br_ranked(hist[-MAX_HISTORY:], k))
        mod = set(topk_items(model, hist[-MAX_HISTORY:], k))
        out.append(len(br & mod) / len(br))
    return float(np.mean(out))


def tc(seed):
    return TrainConfig(batch_size=BATCH, negatives_per_instance=10, learning_rate=LR,
                       max_iterations=20000, patience=PAT, eval_interval=1000,
                       seed=seed, eval_k=50, max_history=MAX_HISTORY)


def train(tag, strategy, init_from=None, seed=0):
    t0 = time.time()
    if init_from is None:
        model = init_scorer(corpus.n_items, DIM, "meanpool", seed=derive_seed(seed, "init"))
    else:
        model = init_from
    trained, log = fit(model, corpus, split, strategy, tc(derive_seed(seed, tag)))
    r = test_recall(trained)
    print(f"{tag:24s} recall@20={r:.4f} iters={log[-1]['iter']:>5} "
          f"br_overlap={br_overlap(trained):.3f} ({time.time()-t0:.0f}s)", flush=True)
    return trained, r


print(f"max_history={MAX_HISTORY}", flush=True)
next1, r1 = train("next1", NextC(corpus, 1))
next3, r3 = train("next3", NextC(corpus, 3))
br_pre, _ = train("pre-br-only", WeakUnion(("br",), k_ws=20))
both_pre, _ = train("pre-br+itemcf", WeakUnion(("br", "itemcf"), k_ws=20, table=table))

mined = mine_topk(both_pre, corpus, split, 50, max_history=MAX_HISTORY)
sizes = [len(mined[(u, i.t)] & i.future) for u in split.train_users
         for i in training_instances(u, corpus.sequences[u], MAX_HISTORY)]
print(f"mined(both)∩future mean={np.mean(sizes):.2f} zero={np.mean(np.array(sizes)==0):.2f}")
train("fin-from-pre", MinedFineTune(mined), init_from=both_pre)
train("fin-from-fresh", MinedFineTune(mined))

mined_br = mine_topk(br_pre, corpus, split, 50, max_history=MAX_HISTORY)
sizes = [len(mined_br[(u, i.t)] & i.future) for u in split.train_users
         for i in training_instances(u, corpus.sequences[u], MAX_HISTORY)]
print(f"mined(br)∩future   mean={np.mean(sizes):.2f} zero={np.mean(np.array(sizes)==0):.2f}")
train("fin-from-brpre", MinedFineTune(mined_br), init_from=br_pre)
