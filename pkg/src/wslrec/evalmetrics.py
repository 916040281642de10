"""Retrieval metrics and the hits-difference rate.

All metrics are per-user averages. Precision@k divides by k
unconditionally, F@k is the per-user 2*hits/(k + |truth|) form, and DCG@k
is reported without ideal normalization by default (``normalized=True``
divides by the ideal DCG for cross-toolkit comparison). The hits difference
rate of two recommenders is the normalized symmetric difference of their
hit sets against the ground truth, zero when both sets are empty.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

from .corpus import Corpus, eval_split

__all__ = [
    "EvalReport",
    "metrics_at_k",
    "hdr",
    "mean_hdr",
    "hit_set",
    "evaluate",
]

METRIC_NAMES = ("precision", "recall", "f1", "ndcg", "hit_rate")


@dataclass
class EvalReport:
    """Metric bundle per cutoff, averaged over ``n_users`` users."""

    metrics: dict[int, dict[str, float]]
    n_users: int

    def to_json(self) -> str:
        payload = {str(k): self.metrics[k] for k in sorted(self.metrics)}
        return json.dumps(payload, indent=2, sort_keys=False)

    def to_table(self) -> str:
        header = f"{'k':>6}" + "".join(f"{name:>12}" for name in METRIC_NAMES)
        lines = [header]
        for k in sorted(self.metrics):
            row = self.metrics[k]
            lines.append(f"{k:>6}" + "".join(f"{row[name]:>12.6f}" for name in METRIC_NAMES))
        lines.append(f"users: {self.n_users}")
        return "\n".join(lines)


def _user_metrics(recommended: Sequence[int], truth: frozenset | set, k: int) -> dict[str, float]:
    if not truth:
        raise ValueError("ground-truth set must be nonempty")
    top = list(recommended[:k])
    hits = len(set(top) & truth)
    dcg = 0.0
    for i, item in enumerate(top, start=1):
        if item in truth:
            dcg += 1.0 / math.log2(i + 1)
    return {
        "precision": hits / k,
        "recall": hits / len(truth),
        "f1": 2.0 * hits / (k + len(truth)),
        "ndcg": dcg,
        "hit_rate": 1.0 if hits > 0 else 0.0,
    }


def _ideal_dcg(n_relevant: int, k: int) -> float:
    return sum(1.0 / math.log2(i + 1) for i in range(1, min(n_relevant, k) + 1))


def metrics_at_k(
    recommendations: Mapping[int, Sequence[int]],
    truths: Mapping[int, frozenset | set],
    k: int,
    normalized: bool = False,
) -> EvalReport:
    """Average the per-user metrics at one cutoff.

    Lists shorter than k are scored as-is (the precision denominator stays
    k). ``normalized`` divides each user's DCG by the ideal DCG.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if not recommendations:
        raise ValueError("no users to evaluate")
    totals = {name: 0.0 for name in METRIC_NAMES}
    for user in recommendations:
        per_user = _user_metrics(recommendations[user], truths[user], k)
        if normalized:
            per_user["ndcg"] /= _ideal_dcg(len(truths[user]), k)
        for name in METRIC_NAMES:
            totals[name] += per_user[name]
    n = len(recommendations)
    return EvalReport(metrics={k: {name: totals[name] / n for name in METRIC_NAMES}}, n_users=n)


def hit_set(recommended: Sequence[int], truth: frozenset | set, k: int) -> frozenset[int]:
    """Items both in the top-k list and the ground truth."""
    return frozenset(recommended[:k]) & frozenset(truth)


def hdr(hits_a: Iterable[int], hits_b: Iterable[int]) -> float:
    """Normalized symmetric difference of two hit sets; 0 when both empty."""
    a = frozenset(hits_a)
    b = frozenset(hits_b)
    union = len(a | b)
    if union == 0:
        return 0.0
    return (union - len(a & b)) / union


def mean_hdr(values: Iterable[float]) -> float:
    """Average the per-user rates over users with a positive rate."""
    values = list(values)
    positive = sum(1 for v in values if v > 0)
    if positive == 0:
        return 0.0
    return sum(values) / positive


def evaluate(
    recommend: Callable[[Sequence[int], int], Sequence[int]],
    corpus: Corpus,
    users: Sequence[int],
    cutoffs: Sequence[int] = (20, 50),
    normalized_ndcg: bool = False,
) -> EvalReport:
    """Score a recommender over the users' 80/20 evaluation splits.

    ``recommend(history, k)`` must return a ranked item list; it is queried
    once per user at the largest cutoff and sliced for the smaller ones.
    """
    if not cutoffs:
        raise ValueError("need at least one cutoff")
    users = sorted(users)
    if not users:
        raise ValueError("no users to evaluate")
    kmax = max(cutoffs)
    recs: dict[int, Sequence[int]] = {}
    truths: dict[int, frozenset] = {}
    for user in users:
        history, truth = eval_split(corpus.sequences[user])
        recs[user] = recommend(history, kmax)
        truths[user] = truth
    merged: dict[int, dict[str, float]] = {}
    for k in sorted(set(cutoffs)):
        merged[k] = metrics_at_k(recs, truths, k, normalized=normalized_ndcg).metrics[k]
    return EvalReport(metrics=merged, n_users=len(users))
