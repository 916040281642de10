"""Per-iteration timing of the training loop at acceptance-scale."""
import time

from wslrec.config import derive_seed
from wslrec.corpus import build_sequences, filter_corpus, ingest_events, split_users
from wslrec.modelfree import build_similarity, build_weights
from wslrec.seqmodel import init_scorer
from wslrec.synth import SynthConfig, generate
from wslrec.trainer import NextAll, NextC, TrainConfig, WeakUnion, fit

t0 = time.time()
cfg = SynthConfig(n_users=1000, n_items=500, n_clusters=10, p_in=0.8, repeat_prob=0.3,
                  min_len=15, max_len=35, seed=0)
corpus = filter_corpus(build_sequences(ingest_events(generate(cfg))))
split = split_users(corpus, seed=derive_seed(0, "split"))
print(f"setup {time.time()-t0:.1f}s  corpus {corpus.n_users}u/{corpus.n_items}i", flush=True)

t0 = time.time()
table = build_similarity(build_weights(corpus, split.train_users), prune_n=200,
                         n_items=corpus.n_items)
print(f"similarity {time.time()-t0:.1f}s", flush=True)


def probe(name, strategy, iters=600):
    model = init_scorer(corpus.n_items, 32, "meanpool", seed=1)
    cfg = TrainConfig(batch_size=32, negatives_per_instance=10, learning_rate=0.003,
                      max_iterations=iters, patience=1000, eval_interval=1000,
                      seed=2, eval_k=50, max_history=15)
    t0 = time.time()
    fit(model, corpus, split, strategy, cfg)
    dt = time.time() - t0
    print(f"{name}: {iters} iters in {dt:.1f}s -> {iters/dt:.0f} it/s", flush=True)


probe("next1", NextC(corpus, 1))
probe("next3", NextC(corpus, 3))
probe("nextall", NextAll())
probe("weak-br-itemcf", WeakUnion(("br", "itemcf"), k_ws=20, table=table))
