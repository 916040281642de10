"""Command-line entry point.

Subcommands cover the whole pipeline: ``synth`` (planted-cluster event
stream), ``preprocess`` (events to corpus directory), ``itemcf``
(similarity table), ``train``/``pretrain``/``mine``/``finetune``/``run``
(training stages), ``evaluate``, ``hdr`` and ``ensemble``. Every command
takes an optional flat-JSON ``--config`` whose values sit between built-in
defaults and explicit flags, logs the fully-resolved configuration to
stderr, and derives stage seeds from the one ``--seed``. Exit status: 0 on
success, 1 on runtime failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import evalmetrics, modelfree, pipeline, report, seqmodel, synth, trainer
from .config import ConfigError, derive_seed, load_config_file, resolve_config, train_config_from

TRAIN_DEFAULTS = {
    "batch_size": 256,
    "negatives_per_instance": 10,
    "learning_rate": 0.001,
    "max_iterations": 10_000,
    "patience": 5,
    "eval_interval": 1000,
    "seed": 0,
    "proposal": "uniform",
    "eval_k": 50,
    "max_history": 20,
    "negatives_pooling": "scaled",
    "encoder": "gru",
    "dim": 64,
    "m": 1,
    "k_ws": 20,
    "mining_k": 50,
    "itemcf_include_history": False,
    "threads": 1,
}


def log_config(command: str, resolved: dict) -> None:
    print(f"{command} resolved config: {json.dumps(resolved, sort_keys=True)}", file=sys.stderr)


def resolved_for(args, extra_flags: dict) -> dict:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else None
    flags = {key: getattr(args, key, None) for key in TRAIN_DEFAULTS}
    flags.update(extra_flags)
    return resolve_config(TRAIN_DEFAULTS, file_values, flags)


def load_world(corpus_dir):
    corpus = corpus_mod.load_corpus(corpus_dir)
    split = corpus_mod.load_split(corpus_dir)
    return corpus, split


def parse_strategy(text: str, corpus, resolved, table=None, ref_model=None):
    if text == "next1":
        return trainer.NextC(corpus, 1)
    if text == "nextall":
        return trainer.NextAll()
    if text.startswith("nextc:"):
        return trainer.NextC(corpus, int(text.split(":", 1)[1]))
    if text.startswith("weak:"):
        parts = text.split(":")
        sources = tuple(s.strip() for s in parts[1].split(",") if s.strip())
        k_ws = int(parts[2]) if len(parts) > 2 else resolved["k_ws"]
        return trainer.WeakUnion(sources, k_ws, table=table, ref_model=ref_model,
                                 include_history=resolved["itemcf_include_history"])
    raise ConfigError(f"unknown strategy {text!r}; expected next1|nextc:<c>|nextall|weak:<sources>[:<k>]")


def model_recommender(model, max_history: int, exclude_history: bool = False):
    def recommend(history, k):
        exclude = set(history) if exclude_history else ()
        return seqmodel.topk_items(model, history[-max_history:], k, exclude=exclude)

    return recommend


def write_training_outputs(out_path, model, log, figures: bool) -> None:
    seqmodel.save_checkpoint(out_path, model)
    log_path = Path(str(out_path) + ".log.jsonl")
    with open(log_path, "w", encoding="utf-8", newline="\n") as fh:
        for record in log:
            fh.write(json.dumps(record) + "\n")
    if figures:
        report.save_training_curves(log, Path(str(out_path) + ".training.png"))


def cutoffs_from(text: str) -> tuple[int, ...]:
    try:
        cutoffs = tuple(int(v) for v in text.split(",") if v)
    except ValueError:
        raise ConfigError(f"bad cutoff list {text!r}") from None
    if not cutoffs:
        raise ConfigError("need at least one cutoff")
    return cutoffs


# --- commands ------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = synth.SynthConfig(n_users=args.users, n_items=args.items, n_clusters=args.clusters,
                            p_in=args.p_in, repeat_prob=args.repeat, min_len=args.min_len,
                            max_len=args.max_len, seed=args.seed)
    log_config("synth", cfg.__dict__)
    synth.generate_to(args.out, cfg)
    print(f"wrote {args.out}", file=sys.stderr)
    return 0


def cmd_preprocess(args) -> int:
    log_config("preprocess", {"input": args.input, "out": args.out, "min_user": args.min_user,
                              "min_item": args.min_item, "seed": args.seed, "ratios": args.ratios})
    with open(args.input, "rb") as fh:
        events = corpus_mod.ingest_events(fh)
    sequences = corpus_mod.build_sequences(events)
    corpus = corpus_mod.filter_corpus(sequences, min_user_len=args.min_user,
                                      min_item_users=args.min_item)
    ratios = tuple(int(v) for v in args.ratios.split(","))
    if len(ratios) != 3:
        raise ConfigError(f"ratios must have three parts, got {args.ratios!r}")
    split = corpus_mod.split_users(corpus, ratios=ratios, seed=derive_seed(args.seed, "split"))
    corpus_mod.save_corpus(corpus, args.out)
    corpus_mod.save_split(split, args.out)
    print(f"corpus: {corpus.n_users} users, {corpus.n_items} items, "
          f"split {len(split.train_users)}/{len(split.valid_users)}/{len(split.test_users)}",
          file=sys.stderr)
    return 0


def cmd_itemcf(args) -> int:
    log_config("itemcf", {"corpus": args.corpus, "prune": args.prune, "out": args.out})
    corpus, split = load_world(args.corpus)
    weights = modelfree.build_weights(corpus, split.train_users)
    table = modelfree.build_similarity(weights, prune_n=args.prune, n_items=corpus.n_items)
    modelfree.save_similarity(table, args.out)
    stored = sum(len(row) for row in table.neighbors)
    print(f"similarity table: {stored} pairs over {corpus.n_items} items", file=sys.stderr)
    return 0


def load_table_if(args, corpus):
    if getattr(args, "table", None):
        return modelfree.load_similarity(args.table, n_items=corpus.n_items)
    return None


def load_ref_if(args, corpus):
    if getattr(args, "ref_ckpt", None):
        ref = seqmodel.load_checkpoint(args.ref_ckpt)
        seqmodel.ensure_compatible(ref, corpus.n_items)
        return ref
    return None


def cmd_train(args) -> int:
    resolved = resolved_for(args, {})
    log_config("train", {**resolved, "strategy": args.strategy, "out": args.out})
    corpus, split = load_world(args.corpus)
    table = load_table_if(args, corpus)
    ref_model = load_ref_if(args, corpus)
    strategy = parse_strategy(args.strategy, corpus, resolved, table=table, ref_model=ref_model)
    root = resolved["seed"]
    model = seqmodel.init_scorer(corpus.n_items, resolved["dim"], resolved["encoder"],
                                 m=resolved["m"], seed=derive_seed(root, "init"))
    cfg = train_config_from({**resolved, "seed": derive_seed(root, "train")})
    trained, log = trainer.fit(model, corpus, split, strategy, cfg)
    write_training_outputs(args.out, trained, log, not args.no_figures)
    print(f"trained {resolved['encoder']} -> {args.out} "
          f"(best {log[-1].get('best')}, evals {len(log)})", file=sys.stderr)
    return 0


def cmd_pretrain(args) -> int:
    resolved = resolved_for(args, {"k_ws": args.kws})
    sources = tuple(s.strip() for s in args.weak.split(",") if s.strip())
    log_config("pretrain", {**resolved, "weak": sources, "out": args.out})
    corpus, split = load_world(args.corpus)
    table = load_table_if(args, corpus)
    ref_model = load_ref_if(args, corpus)
    root = resolved["seed"]
    weak_cfg = pipeline.WeakSupervisionConfig(sources=sources, k_ws=resolved["k_ws"],
                                              mining_k=resolved["mining_k"],
                                              include_history=resolved["itemcf_include_history"])
    enc_cfg = pipeline.EncoderConfig(resolved["encoder"], resolved["dim"], resolved["m"])
    cfg = train_config_from({**resolved, "seed": derive_seed(root, "pretrain")})
    model, log = pipeline.pretrain(corpus, split, weak_cfg, enc_cfg, cfg, table=table,
                                   ref_model=ref_model, init_seed=derive_seed(root, "init"))
    write_training_outputs(args.out, model, log, not args.no_figures)
    print(f"pretrained on {'+'.join(sources)} -> {args.out}", file=sys.stderr)
    return 0


def cmd_mine(args) -> int:
    resolved = resolved_for(args, {"mining_k": args.k})
    log_config("mine", {"ckpt": args.ckpt, "k": resolved["mining_k"],
                        "max_history": resolved["max_history"], "threads": resolved["threads"],
                        "out": args.out})
    corpus, split = load_world(args.corpus)
    model = seqmodel.load_checkpoint(args.ckpt)
    seqmodel.ensure_compatible(model, corpus.n_items)
    mined = pipeline.mine_topk(model, corpus, split, resolved["mining_k"],
                               max_history=resolved["max_history"], threads=resolved["threads"])
    pipeline.save_mined(args.out, mined)
    print(f"mined {len(mined)} instances -> {args.out}", file=sys.stderr)
    return 0


def cmd_finetune(args) -> int:
    resolved = resolved_for(args, {})
    log_config("finetune", {**resolved, "ckpt": args.ckpt, "mined": args.mined, "out": args.out})
    corpus, split = load_world(args.corpus)
    pre_model = seqmodel.load_checkpoint(args.ckpt)
    seqmodel.ensure_compatible(pre_model, corpus.n_items)
    mined = pipeline.load_mined(args.mined)
    cfg = train_config_from({**resolved, "seed": derive_seed(resolved["seed"], "finetune")})
    model, log = pipeline.finetune(pre_model, mined, corpus, split, cfg)
    write_training_outputs(args.out, model, log, not args.no_figures)
    print(f"finetuned -> {args.out}", file=sys.stderr)
    return 0


def cmd_run(args) -> int:
    resolved = resolved_for(args, {"k_ws": args.kws, "mining_k": args.mine_k})
    sources = tuple(s.strip() for s in args.weak.split(",") if s.strip())
    log_config("run", {**resolved, "weak": sources, "out_dir": args.out_dir})
    corpus, split = load_world(args.corpus)
    table = load_table_if(args, corpus)
    ref_model = load_ref_if(args, corpus)
    weak_cfg = pipeline.WeakSupervisionConfig(sources=sources, k_ws=resolved["k_ws"],
                                              mining_k=resolved["mining_k"],
                                              include_history=resolved["itemcf_include_history"])
    enc_cfg = pipeline.EncoderConfig(resolved["encoder"], resolved["dim"], resolved["m"])
    cfg = train_config_from(resolved)
    result = pipeline.run_wslrec(corpus, split, weak_cfg, enc_cfg, cfg, table=table,
                                 ref_model=ref_model, out_dir=args.out_dir,
                                 threads=resolved["threads"])
    if not args.no_figures:
        out = Path(args.out_dir)
        report.save_training_curves(result.pretrain_log, out / "pretrain.training.png")
        report.save_training_curves(result.finetune_log, out / "finetune.training.png")
    print(f"three-stage run complete -> {args.out_dir}", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    resolved = resolved_for(args, {})
    cutoffs = cutoffs_from(args.k)
    log_config("evaluate", {"ckpt": args.ckpt, "recommender": args.recommender,
                            "cutoffs": cutoffs, "split": args.split,
                            "exclude_history": args.exclude_history,
                            "ndcg_normalized": args.ndcg_normalized,
                            "max_history": resolved["max_history"], "out": args.out})
    corpus, split = load_world(args.corpus)
    users = {"test": split.test_users, "valid": split.valid_users}[args.split]

    if args.recommender == "model":
        if not args.ckpt:
            raise ConfigError("--ckpt is required for the model recommender")
        model = seqmodel.load_checkpoint(args.ckpt)
        seqmodel.ensure_compatible(model, corpus.n_items)
        recommend = model_recommender(model, resolved["max_history"], args.exclude_history)
    elif args.recommender == "br":
        recommend = lambda history, k: modelfree.br_ranked(history, k)
    elif args.recommender == "itemcf":
        table = load_table_if(args, corpus)
        if table is None:
            raise ConfigError("--table is required for the itemcf recommender")
        recommend = lambda history, k: modelfree.itemcf_ranked(
            history, table, k, include_history=resolved["itemcf_include_history"])
    else:
        raise ConfigError(f"unknown recommender {args.recommender!r}")

    eval_report = evalmetrics.evaluate(recommend, corpus, users, cutoffs=cutoffs,
                                       normalized_ndcg=args.ndcg_normalized)
    print(eval_report.to_json())
    print(eval_report.to_table(), file=sys.stderr)
    if args.out:
        Path(args.out).write_text(eval_report.to_json() + "\n", encoding="utf-8")
        if not args.no_figures:
            report.save_metric_bars(eval_report, Path(args.out).with_suffix(".png"),
                                    title=args.recommender)
    if args.save_recs:
        kmax = max(cutoffs)
        recs = {}
        for user in sorted(users):
            history, _ = corpus_mod.eval_split(corpus.sequences[user])
            recs[user] = list(recommend(history, kmax))
        pipeline.save_recommendations(args.save_recs, recs)
    return 0


def cmd_hdr(args) -> int:
    log_config("hdr", {"rec_a": args.rec_a, "rec_b": args.rec_b, "k": args.k})
    corpus, split = load_world(args.corpus)
    recs_a = pipeline.load_recommendations(args.rec_a)
    recs_b = pipeline.load_recommendations(args.rec_b)
    values = []
    for user in split.test_users:
        if user not in recs_a or user not in recs_b:
            raise ValueError(f"recommendation files do not cover test user {user}")
        _, truth = corpus_mod.eval_split(corpus.sequences[user])
        hits_a = evalmetrics.hit_set(recs_a[user], truth, args.k)
        hits_b = evalmetrics.hit_set(recs_b[user], truth, args.k)
        values.append(evalmetrics.hdr(hits_a, hits_b))
    payload = {
        "k": args.k,
        "mean_hdr": evalmetrics.mean_hdr(values),
        "users": len(values),
        "users_with_difference": sum(1 for v in values if v > 0),
    }
    print(json.dumps(payload, indent=2))
    return 0


def cmd_ensemble(args) -> int:
    resolved = resolved_for(args, {})
    log_config("ensemble", {"ckpt": args.ckpt, "table": args.table, "k": args.k,
                            "a": args.a, "b": args.b, "c": args.c, "out": args.out})
    corpus, split = load_world(args.corpus)
    table = load_table_if(args, corpus)
    if table is None:
        raise ConfigError("--table is required for the ensemble")
    model = seqmodel.load_checkpoint(args.ckpt)
    seqmodel.ensure_compatible(model, corpus.n_items)
    max_history = resolved["max_history"]
    k = args.k

    def user_lists(users):
        lists = {}
        truths = {}
        for user in users:
            history, truth = corpus_mod.eval_split(corpus.sequences[user])
            lists[user] = (
                modelfree.br_ranked(history, k),
                modelfree.itemcf_ranked(history, table, k,
                                        include_history=resolved["itemcf_include_history"]),
                seqmodel.topk_items(model, history[-max_history:], 2 * k),
            )
            truths[user] = truth
        return lists, truths

    if args.a is None or args.b is None or args.c is None:
        valid_lists, valid_truths = user_lists(split.valid_users)
        a, b, c = pipeline.tune_ensemble(valid_lists, valid_truths, k)
        print(f"grid-selected (a, b, c) = ({a}, {b}, {c})", file=sys.stderr)
    else:
        a, b, c = args.a, args.b, args.c

    test_lists, test_truths = user_lists(split.test_users)
    recs = {user: pipeline.ensemble_topk(*test_lists[user], k, a, b, c)
            for user in split.test_users}
    eval_report = evalmetrics.metrics_at_k(recs, test_truths, k)
    print(json.dumps({"a": a, "b": b, "c": c, **{str(kk): eval_report.metrics[kk]
                                                 for kk in eval_report.metrics}}, indent=2))
    print(eval_report.to_table(), file=sys.stderr)
    if args.out:
        Path(args.out).write_text(eval_report.to_json() + "\n", encoding="utf-8")
        if not args.no_figures:
            report.save_metric_bars(eval_report, Path(args.out).with_suffix(".png"),
                                    title=f"ensemble a={a} b={b} c={c}")
    return 0


# --- parser --------------------------------------------------------------------


def add_common_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON config file; flags override its values")
    p.add_argument("--seed", type=int, default=None, help="root seed; stage seeds derive from it")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--negatives", dest="negatives_per_instance", type=int, default=None,
                   help="negatives per instance feeding the shared batch pool")
    p.add_argument("--lr", dest="learning_rate", type=float, default=None)
    p.add_argument("--max-iterations", dest="max_iterations", type=int, default=None)
    p.add_argument("--patience", type=int, default=None,
                   help="non-improving evaluations before early stop")
    p.add_argument("--eval-interval", dest="eval_interval", type=int, default=None)
    p.add_argument("--eval-k", dest="eval_k", type=int, default=None,
                   help="validation recall cutoff for early stopping")
    p.add_argument("--max-history", dest="max_history", type=int, default=None,
                   help="history truncation length")
    p.add_argument("--negatives-pooling", dest="negatives_pooling",
                   choices=("scaled", "flat"), default=None)
    p.add_argument("--dim", type=int, default=None, help="embedding dimension")
    p.add_argument("--m", type=int, default=None, help="user vectors (multihead encoder)")
    p.add_argument("--no-figures", action="store_true", help="skip companion PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wslrec",
        description="Weakly supervised training pipeline for sequential recommenders.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("synth", help="generate a planted-cluster event stream")
    p.add_argument("--users", type=int, default=1000)
    p.add_argument("--items", type=int, default=500)
    p.add_argument("--clusters", type=int, default=10)
    p.add_argument("--p-in", dest="p_in", type=float, default=0.8,
                   help="probability the walk stays in the current cluster")
    p.add_argument("--repeat", type=float, default=0.3,
                   help="probability of re-consuming one of the last 5 items")
    p.add_argument("--min-len", dest="min_len", type=int, default=15)
    p.add_argument("--max-len", dest="max_len", type=int, default=45)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output TSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="ingest events into a corpus directory")
    p.add_argument("--input", required=True, help="TSV user<TAB>item<TAB>timestamp")
    p.add_argument("--out", required=True, help="corpus directory")
    p.add_argument("--min-user", dest="min_user", type=int, default=5)
    p.add_argument("--min-item", dest="min_item", type=int, default=5)
    p.add_argument("--ratios", default="8,1,1", help="train,valid,test user split ratios")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("itemcf", help="build the item-item similarity table")
    p.add_argument("--corpus", required=True)
    p.add_argument("--prune", type=int, default=200, help="neighbors kept per item")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_itemcf)

    p = sub.add_parser("train", help="train a scorer under a label strategy")
    p.add_argument("--corpus", required=True)
    p.add_argument("--encoder", choices=("gru", "meanpool", "multihead"), default=None)
    p.add_argument("--strategy", default="next1",
                   help="next1 | nextc:<c> | nextall | weak:<sources>[:<k>]")
    p.add_argument("--table", help="similarity table (weak:itemcf source)")
    p.add_argument("--ref-ckpt", dest="ref_ckpt", help="reference checkpoint (weak:original source)")
    p.add_argument("--itemcf-include-history", dest="itemcf_include_history",
                   action="store_const", const=True, default=None,
                   help="let item-CF recommend history items (self-similarity 1)")
    p.add_argument("--out", required=True, help="checkpoint output path")
    add_common_training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("pretrain", help="pre-train on weak-supervision sources")
    p.add_argument("--corpus", required=True)
    p.add_argument("--weak", default="br,itemcf", help="comma list of br,itemcf,original")
    p.add_argument("--kws", type=int, default=None, help="per-source top-k cutoff")
    p.add_argument("--encoder", choices=("gru", "meanpool", "multihead"), default=None)
    p.add_argument("--table", help="similarity table (itemcf source)")
    p.add_argument("--ref-ckpt", dest="ref_ckpt", help="reference checkpoint (original source)")
    p.add_argument("--itemcf-include-history", dest="itemcf_include_history",
                   action="store_const", const=True, default=None)
    p.add_argument("--out", required=True)
    add_common_training_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("mine", help="mine top-k sets under a pre-trained scorer")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--k", type=int, default=None, help="mined set size")
    p.add_argument("--max-history", dest="max_history", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("finetune", help="fine-tune from a checkpoint on mined labels")
    p.add_argument("--ckpt", required=True, help="pre-trained checkpoint")
    p.add_argument("--mined", required=True, help="mined table TSV")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    add_common_training_flags(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("run", help="pre-train, mine and fine-tune in one go")
    p.add_argument("--corpus", required=True)
    p.add_argument("--weak", default="br,itemcf")
    p.add_argument("--kws", type=int, default=None)
    p.add_argument("--mine-k", dest="mine_k", type=int, default=None)
    p.add_argument("--encoder", choices=("gru", "meanpool", "multihead"), default=None)
    p.add_argument("--table", help="similarity table (itemcf source)")
    p.add_argument("--ref-ckpt", dest="ref_ckpt")
    p.add_argument("--itemcf-include-history", dest="itemcf_include_history",
                   action="store_const", const=True, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    add_common_training_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="score a recommender on held-out users")
    p.add_argument("--ckpt", help="checkpoint (model recommender)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--k", default="20,50", help="comma list of cutoffs")
    p.add_argument("--recommender", choices=("model", "br", "itemcf"), default="model")
    p.add_argument("--table", help="similarity table (itemcf recommender)")
    p.add_argument("--split", choices=("test", "valid"), default="test")
    p.add_argument("--exclude-history", dest="exclude_history", action="store_true",
                   help="drop history items from model recommendations")
    p.add_argument("--ndcg-normalized", dest="ndcg_normalized", action="store_true",
                   help="divide DCG by the ideal DCG")
    p.add_argument("--itemcf-include-history", dest="itemcf_include_history",
                   action="store_const", const=True, default=None)
    p.add_argument("--max-history", dest="max_history", type=int, default=None)
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("--out", help="write the JSON report here (plus a PNG figure)")
    p.add_argument("--save-recs", dest="save_recs", help="persist per-user ranked lists (TSV)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("hdr", help="hits-difference rate between two recommendation files")
    p.add_argument("--rec-a", dest="rec_a", required=True)
    p.add_argument("--rec-b", dest="rec_b", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--k", type=int, default=50)
    p.set_defaults(func=cmd_hdr)

    p = sub.add_parser("ensemble", help="merge BR / item-CF / model top lists")
    p.add_argument("--corpus", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--a", type=int, default=None, help="BR slots (grid-searched when omitted)")
    p.add_argument("--b", type=int, default=None, help="item-CF slots")
    p.add_argument("--c", type=int, default=None, help="model slots")
    p.add_argument("--itemcf-include-history", dest="itemcf_include_history",
                   action="store_const", const=True, default=None)
    p.add_argument("--max-history", dest="max_history", type=int, default=None)
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_ensemble)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
