"""Diagnose the WSLRec vs Next-1 gap on the planted corpus."""
import sys
import time

import numpy as np

from wslrec.config import derive_seed
from wslrec.corpus import (build_sequences, eval_split, filter_corpus, ingest_events,
                           split_users, training_instances)
from wslrec.modelfree import br_ranked, build_similarity, build_weights, itemcf_ranked
from wslrec.pipeline import EncoderConfig, WeakSupervisionConfig, mine_topk, pretrain
from wslrec.seqmodel import init_scorer, topk_items
from wslrec.synth import SynthConfig, generate
from wslrec.trainer import MinedFineTune, NextC, TrainConfig, fit

MIN_LEN, MAX_LEN, MAX_HISTORY = 30, 50, 15
LR = float(sys.argv[1]) if len(sys.argv) > 1 else 0.003
PATIENCE = int(sys.argv[2]) if len(sys.argv) > 2 else 5

cfg = SynthConfig(n_users=1000, n_items=500, n_clusters=10, p_in=0.8, repeat_prob=0.3,
                  min_len=MIN_LEN, max_len=MAX_LEN, seed=0)
corpus = filter_corpus(build_sequences(ingest_events(generate(cfg))))
split = split_users(corpus, seed=derive_seed(0, "split"))
table = build_similarity(build_weights(corpus, split.train_users), prune_n=200,
                         n_items=corpus.n_items)


def recall(recommend, users, k=20):
    out = []
    for u in users:
        hist, truth = eval_split(corpus.sequences[u])
        out.append(len(set(recommend(hist, k)) & truth) / len(truth))
    return float(np.mean(out))


print(f"BR     test recall@20: {recall(lambda h, k: br_ranked(h, k), split.test_users):.4f}")
print(f"ItemCF test recall@20: "
      f"{recall(lambda h, k: itemcf_ranked(h, table, k), split.test_users):.4f}", flush=True)


def tc(seed):
    return TrainConfig(batch_size=32, negatives_per_instance=10, learning_rate=LR,
                       max_iterations=20000, patience=PATIENCE, eval_interval=1000,
                       seed=seed, eval_k=50, max_history=MAX_HISTORY)


def show(tag, log):
    vals = [f"{r['recall50_val']:.3f}" for r in log]
    print(f"  {tag} trajectory: {' '.join(vals)}", flush=True)


seed = 0
model = init_scorer(corpus.n_items, 32, "meanpool", seed=derive_seed(seed, "init"))
m1, log1 = fit(model, corpus, split, NextC(corpus, 1), tc(derive_seed(seed, "next1")))
show("next1", log1)
print(f"next1 test recall@20: {recall(lambda h, k: topk_items(m1, h[-MAX_HISTORY:], k), split.test_users):.4f}")

weak = WeakSupervisionConfig(("br", "itemcf"), k_ws=20, mining_k=50)
pre, plog = pretrain(corpus, split, weak, EncoderConfig("meanpool", 32),
                     tc(derive_seed(seed, "pretrain")), table=table,
                     init_seed=derive_seed(seed, "init"))
show("pretrain", plog)
print(f"pretrain test recall@20: {recall(lambda h, k: topk_items(pre, h[-MAX_HISTORY:], k), split.test_users):.4f}")

mined = mine_topk(pre, corpus, split, 50, max_history=MAX_HISTORY)
sizes = []
for u in split.train_users:
    for inst in training_instances(u, corpus.sequences[u], MAX_HISTORY):
        sizes.append(len(mined[(u, inst.t)] & inst.future))
print(f"mined∩future sizes: mean={np.mean(sizes):.2f} p50={np.percentile(sizes, 50):.0f} "
      f"p90={np.percentile(sizes, 90):.0f} zero-frac={np.mean(np.array(sizes) == 0):.3f}", flush=True)

fin, flog = fit(pre, corpus, split, MinedFineTune(mined), tc(derive_seed(seed, "finetune")))
show("finetune", flog)
print(f"wslrec test recall@20: {recall(lambda h, k: topk_items(fin, h[-MAX_HISTORY:], k), split.test_users):.4f}")
