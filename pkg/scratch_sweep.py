"""5-seed sweep of all arms to measure distributions, not point estimates."""
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

MIN_LEN = int(sys.argv[1])
MAX_LEN = int(sys.argv[2])
MODE = sys.argv[3]  # "c5a", "c5b", "c6"
SEEDS = [int(s) for s in sys.argv[4].split(",")]
MAX_HISTORY = 15

cfg = SynthConfig(n_users=1000, n_items=500, n_clusters=10, p_in=0.8, repeat_prob=0.3,
                  min_len=MIN_LEN, max_len=MAX_LEN, seed=0)
corpus = filter_corpus(build_sequences(ingest_events(generate(cfg))))
split = split_users(corpus, seed=derive_seed(0, "split"))
table = build_similarity(build_weights(corpus, split.train_users), prune_n=200,
                         n_items=corpus.n_items)
n_inst = sum(len(corpus.sequences[u]) - 4 for u in split.train_users)
print(f"[{MODE}] lens [{MIN_LEN},{MAX_LEN}] {n_inst} instances", flush=True)


def test_recall(model, k=20):
    out = []
    for u in split.test_users:
        hist, truth = eval_split(corpus.sequences[u])
        out.append(len(set(topk_items(model, hist[-MAX_HISTORY:], k)) & truth) / len(truth))
    return float(np.mean(out))


def make_cfg(seed):
    if MODE == "c5a":
        return 32, TrainConfig(batch_size=32, negatives_per_instance=10, learning_rate=0.003,
                               max_iterations=20000, patience=5, eval_interval=1000,
                               seed=seed, eval_k=50, max_history=MAX_HISTORY)
    if MODE == "c5b":
        return 32, TrainConfig(batch_size=64, negatives_per_instance=10, learning_rate=0.001,
                               max_iterations=20000, patience=8, eval_interval=1000,
                               seed=seed, eval_k=50, max_history=MAX_HISTORY)
    if MODE == "c6f":
        return 64, TrainConfig(batch_size=64, negatives_per_instance=10, learning_rate=0.0015,
                               max_iterations=20000, patience=6, eval_interval=1000,
                               seed=seed, eval_k=50, max_history=MAX_HISTORY)
    return 64, TrainConfig(batch_size=64, negatives_per_instance=10, learning_rate=0.001,
                           max_iterations=20000, patience=10, eval_interval=1000,
                           seed=seed, eval_k=50, max_history=MAX_HISTORY)


for seed in SEEDS:
    t0 = time.time()
    dim, _ = make_cfg(0)
    init_seed = derive_seed(seed, "init")
    row = {}
    if MODE.startswith("c5"):
        for name, strategy in [("next1", NextC(corpus, 1)), ("next3", NextC(corpus, 3)),
                               ("nextall", NextAll())]:
            _, tc = make_cfg(derive_seed(seed, name))
            model = init_scorer(corpus.n_items, dim, "meanpool", seed=init_seed)
            trained, log = fit(model, corpus, split, strategy, tc)
            row[name] = test_recall(trained)
        ok = row["next1"] > row["nextall"] and row["next3"] > row["nextall"]
        print(f"[{MODE}] seed {seed}: next1={row['next1']:.4f} next3={row['next3']:.4f} "
              f"nextall={row['nextall']:.4f} {'PASS' if ok else 'FAIL'} "
              f"({time.time()-t0:.0f}s)", flush=True)
    else:
        _, tc = make_cfg(derive_seed(seed, "baseline"))
        model = init_scorer(corpus.n_items, dim, "meanpool", seed=init_seed)
        base, _ = fit(model, corpus, split, NextC(corpus, 1), tc)
        row["next1"] = test_recall(base)
        _, tc_root = make_cfg(seed)
        res = run_wslrec(corpus, split, WeakSupervisionConfig(("br", "itemcf"), 20, 50),
                         EncoderConfig("meanpool", dim), tc_root, table=table)
        row["wslrec"] = test_recall(res.finetuned)
        row["pre"] = test_recall(res.pretrained)
        ok = row["wslrec"] > row["next1"]
        print(f"[{MODE}] seed {seed}: next1={row['next1']:.4f} pre={row['pre']:.4f} "
              f"wslrec={row['wslrec']:.4f} {'PASS' if ok else 'FAIL'} "
              f"({time.time()-t0:.0f}s)", flush=True)
