"""3-seed validation of the two directional acceptance runs."""
import time

import numpy as np

from wslrec.config import derive_seed
from wslrec.corpus import build_sequences, eval_split, filter_corpus, ingest_events, split_users
from wslrec.modelfree import build_similarity, build_weights
from wslrec.pipeline import EncoderConfig, WeakSupervisionConfig, run_wslrec
from wslrec.seqmodel import init_scorer, topk_items
from wslrec.synth import SynthConfig, generate
from wslrec.trainer import NextAll, NextC, TrainConfig, fit

MAX_HISTORY = 15
t_start = time.time()

cfg = SynthConfig(n_users=1000, n_items=500, n_clusters=10, p_in=0.8, repeat_prob=0.3,
                  min_len=30, max_len=50, seed=0)
corpus = filter_corpus(build_sequences(ingest_events(generate(cfg))))
split = split_users(corpus, seed=derive_seed(0, "split"))
table = build_similarity(build_weights(corpus, split.train_users), prune_n=200,
                         n_items=corpus.n_items)
print(f"setup {time.time()-t_start:.0f}s", flush=True)


def test_recall(model, k=20):
    out = []
    for u in split.test_users:
        hist, truth = eval_split(corpus.sequences[u])
        out.append(len(set(topk_items(model, hist[-MAX_HISTORY:], k)) & truth) / len(truth))
    return float(np.mean(out))


def cfg5(seed):
    return TrainConfig(batch_size=32, negatives_per_instance=10, learning_rate=0.003,
                       max_iterations=20000, patience=5, eval_interval=1000,
                       seed=seed, eval_k=50, max_history=MAX_HISTORY)


def cfg6(seed):
    return TrainConfig(batch_size=64, negatives_per_instance=10, learning_rate=0.001,
                       max_iterations=20000, patience=10, eval_interval=1000,
                       seed=seed, eval_k=50, max_history=MAX_HISTORY)


def train(strategy, tc, init_seed):
    model = init_scorer(corpus.n_items, tc_dim, "meanpool", seed=init_seed)
    trained, _ = fit(model, corpus, split, strategy, tc)
    return test_recall(trained)


print("=== criterion 5 (d=32, b=32, lr=3e-3, patience 5) ===", flush=True)
tc_dim = 32
votes5 = 0
t0 = time.time()
for seed in (0, 1, 2):
    init_seed = derive_seed(seed, "init")
    r1 = train(NextC(corpus, 1), cfg5(derive_seed(seed, "next1")), init_seed)
    r3 = train(NextC(corpus, 3), cfg5(derive_seed(seed, "next3")), init_seed)
    ra = train(NextAll(), cfg5(derive_seed(seed, "nextall")), init_seed)
    ok = r1 > ra and r3 > ra
    votes5 += ok
    print(f"  seed {seed}: next1={r1:.4f} next3={r3:.4f} nextall={ra:.4f} "
          f"{'PASS' if ok else 'FAIL'} ({time.time()-t0:.0f}s cum)", flush=True)
print(f"criterion 5 votes: {votes5}/3, elapsed {time.time()-t0:.0f}s", flush=True)

print("=== criterion 6 (d=64, b=64, lr=1e-3, patience 10) ===", flush=True)
tc_dim = 64
votes6 = 0
t0 = time.time()
weak = WeakSupervisionConfig(("br", "itemcf"), k_ws=20, mining_k=50)
for seed in (0, 1, 2):
    init_seed = derive_seed(seed, "init")
    r1 = train(NextC(corpus, 1), cfg6(derive_seed(seed, "baseline")), init_seed)
    res = run_wslrec(corpus, split, weak, EncoderConfig("meanpool", 64), cfg6(seed), table=table)
    rw = test_recall(res.finetuned)
    ok = rw > r1
    votes6 += ok
    print(f"  seed {seed}: next1={r1:.4f} wslrec={rw:.4f} "
          f"{'PASS' if ok else 'FAIL'} ({time.time()-t0:.0f}s cum)", flush=True)
print(f"criterion 6 votes: {votes6}/3, elapsed {time.time()-t0:.0f}s", flush=True)
print(f"TOTAL {time.time()-t_start:.0f}s", flush=True)
