"""Weakly supervised training for sequential recommenders.

Pipeline: preprocess implicit-feedback events into a corpus, build an
item-item similarity table, pre-train a sequence scorer on model-free
supervision (recent-history retargeting and/or item-CF top-k sets), mine
each training instance's top-k under the pre-trained scorer, fine-tune on
the mined items confirmed by future behaviors, and evaluate with per-user
retrieval metrics.
"""

from .corpus import (
    Corpus,
    EmptyCorpusError,
    InteractionEvent,
    ParseError,
    SplitCorpus,
    TrainingInstance,
    build_sequences,
    eval_split,
    filter_corpus,
    ingest_events,
    load_corpus,
    load_split,
    save_corpus,
    save_split,
    split_users,
    training_instances,
)
from .evalmetrics import EvalReport, evaluate, hdr, hit_set, mean_hdr, metrics_at_k
from .modelfree import (
    SimilarityTable,
    br_ranked,
    br_topk,
    build_similarity,
    build_weights,
    itemcf_ranked,
    itemcf_topk,
    load_similarity,
    save_similarity,
)
from .pipeline import (
    EncoderConfig,
    WeakSupervisionConfig,
    WslrecResult,
    ensemble_topk,
    finetune,
    load_mined,
    mine_topk,
    pretrain,
    run_wslrec,
    save_mined,
    tune_ensemble,
)
from .seqmodel import (
    CheckpointError,
    SequenceScorer,
    encode,
    init_scorer,
    load_checkpoint,
    save_checkpoint,
    score,
    softmax_all,
    topk_items,
)
from .synth import SynthConfig, generate, generate_to, item_cluster
from .trainer import (
    AdamState,
    MinedFineTune,
    NextAll,
    NextC,
    TrainConfig,
    WeakUnion,
    adam_init,
    adam_step,
    build_labels,
    fit,
    sample_negatives,
    sampled_softmax_loss,
)

__version__ = "0.1.0"
