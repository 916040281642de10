"""Exploration: directional behavior across sequence-length settings."""
import sys
import time

import numpy as np

from wslrec.config import derive_seed
from wslrec.corpus import build_sequences, eval_split, filter_corpus, ingest_events, split_users
from wslrec.modelfree import build_similarity, build_weights
from wslrec.pipeline import EncoderConfig, WeakSupervisionConfig, run_wslrec
from wslrec.seqmodel import init_scorer, topk_items
from wslrec.synth import SynthConfig, generate
from wslrec.trainer import NextAll, NextC, TrainConfig, fit

MIN_LEN = int(sys.argv[1]) if len(sys.argv) > 1 else 30
MAX_LEN = int(sys.argv[2]) if len(sys.argv) > 2 else 50
SEEDS = [int(s) for s in (sys.argv[3].split(",") if len(sys.argv) > 3 else ["0"])]
MAX_HISTORY = 15

cfg = SynthConfig(n_users=1000, n_items=500, n_clusters=10, p_in=0.8, repeat_prob=0.3,
                  min_len=MIN_LEN, max_len=MAX_LEN, seed=0)
corpus = filter_corpus(build_sequences(ingest_events(generate(cfg))))
split = split_users(corpus, seed=derive_seed(0, "split"))
table = build_similarity(build_weights(corpus, split.train_users), prune_n=200,
                         n_items=corpus.n_items)
n_inst = sum(len(corpus.sequences[u]) - 4 for u in split.train_users)
print(f"lens [{MIN_LEN},{MAX_LEN}] corpus {corpus.n_users}u/{corpus.n_items}i {n_inst} instances",
      flush=True)


def test_recall(model, users, k=20):
    recalls = []
    for u in users:
        hist, truth = eval_split(corpus.sequences[u])
        top = topk_items(model, hist[-MAX_HISTORY:], k)
        recalls.append(len(set(top) & truth) / len(truth))
    return float(np.mean(recalls))


def train_cfg(seed, patience=5):
    return TrainConfig(batch_size=32, negatives_per_instance=10, learning_rate=0.003,
                       max_iterations=20000, patience=patience, eval_interval=1000,
                       seed=seed, eval_k=50, max_history=MAX_HISTORY)


for seed in SEEDS:
    row = {}
    for name, strategy in [("next1", NextC(corpus, 1)), ("next3", NextC(corpus, 3)),
                           ("nextall", NextAll())]:
        model = init_scorer(corpus.n_items, 32, "meanpool", seed=derive_seed(seed, "init"))
        t0 = time.time()
        trained, log = fit(model, corpus, split, strategy, train_cfg(derive_seed(seed, name)))
        row[name] = test_recall(trained, split.test_users)
        print(f"  seed {seed} {name}: recall@20={row[name]:.4f} "
              f"(iters {log[-1]['iter']}, {time.time()-t0:.0f}s)", flush=True)

    t0 = time.time()
    res = run_wslrec(corpus, split, WeakSupervisionConfig(("br", "itemcf"), k_ws=20, mining_k=50),
                     EncoderConfig("meanpool", dim=32), train_cfg(seed), table=table)
    row["wslrec"] = test_recall(res.finetuned, split.test_users)
    row["wslrec_pre"] = test_recall(res.pretrained, split.test_users)
    print(f"  seed {seed} wslrec: pre={row['wslrec_pre']:.4f} fin={row['wslrec']:.4f} "
          f"({time.time()-t0:.0f}s)", flush=True)
    ok5 = row["next1"] > row["nextall"] and row["next3"] > row["nextall"]
    ok6 = row["wslrec"] > row["next1"]
    print(f"  seed {seed} VERDICT: crit5={'PASS' if ok5 else 'FAIL'} "
          f"crit6={'PASS' if ok6 else 'FAIL'}", flush=True)
