"""Model-free recommenders: behavioral retargeting and item-based CF.

Retargeting recommends the most recently interacted items. Item-based CF
scores candidates by their weighted-cosine similarity to any history item,
where a user's contribution to an item is its interaction count damped by
log2(1 + sequence length) so heavy users do not dominate. The similarity
table is built from training users only and pruned to the top ``prune_n``
neighbors per item.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Corpus

__all__ = [
    "SimilarityTable",
    "build_weights",
    "build_similarity",
    "br_topk",
    "br_ranked",
    "itemcf_topk",
    "itemcf_ranked",
    "save_similarity",
    "load_similarity",
]


@dataclass
class SimilarityTable:
    """Per-item neighbor lists sorted by (similarity desc, item asc)."""

    n_items: int
    neighbors: list[np.ndarray]  # int64 item indices
    similarities: list[np.ndarray]  # float64, aligned with neighbors

    def row(self, item: int) -> tuple[np.ndarray, np.ndarray]:
        return self.neighbors[item], self.similarities[item]

    def sim(self, a: int, b: int) -> float:
        """Similarity lookup, 0.0 for pairs absent from the table."""
        items, sims = self.row(a)
        hit = np.nonzero(items == b)[0]
        return float(sims[hit[0]]) if hit.size else 0.0


def build_weights(corpus: Corpus, train_users: Iterable[int]) -> dict[int, dict[int, float]]:
    """Per-user item weights: count within the sequence over log2(1 + length)."""
    weights: dict[int, dict[int, float]] = {}
    for user in train_users:
        items = corpus.sequences[user]
        damp = math.log2(1 + len(items))
        row: dict[int, float] = {}
        for item in items:
            row[item] = row.get(item, 0.0) + 1.0
        weights[user] = {item: count / damp for item, count in row.items()}
    return weights


def build_similarity(
    weights: dict[int, dict[int, float]],
    prune_n: int,
    n_items: int,
) -> SimilarityTable:
    """Weighted cosine similarity over co-occurring item pairs.

    Accumulates pair products user by user (ascending user index), so cost
    is proportional to the sum of squared distinct-item counts instead of
    the full item-pair grid. Rows are pruned to the ``prune_n`` strongest
    neighbors.
    """
    if not weights:
        raise ValueError("weights must be nonempty")
    if prune_n < 1:
        raise ValueError(f"prune_n must be positive, got {prune_n}")

    norms_sq = np.zeros(n_items)
    pair_sums: dict[tuple[int, int], float] = {}
    for user in sorted(weights):
        row = weights[user]
        items = sorted(row)
        for i, a in enumerate(items):
            w_a = row[a]
            norms_sq[a] += w_a * w_a
            for b in items[i + 1:]:
                key = (a, b)
                pair_sums[key] = pair_sums.get(key, 0.0) + w_a * row[b]

    norms = np.sqrt(norms_sq)
    rows: list[list[tuple[int, float]]] = [[] for _ in range(n_items)]
    for (a, b), num in pair_sums.items():
        sim = num / (norms[a] * norms[b])
        if sim > 1.0:  # sqrt rounding can overshoot on parallel vectors
            sim = 1.0
        rows[a].append((b, sim))
        rows[b].append((a, sim))

    neighbors: list[np.ndarray] = []
    similarities: list[np.ndarray] = []
    for row in rows:
        row.sort(key=lambda pair: (-pair[1], pair[0]))
        top = row[:prune_n]
        neighbors.append(np.array([v for v, _ in top], dtype=np.int64))
        similarities.append(np.array([s for _, s in top], dtype=np.float64))
    return SimilarityTable(n_items=n_items, neighbors=neighbors, similarities=similarities)


def br_topk(history: Sequence[int], k: int) -> set[int]:
    """The set of the k most recent history items (duplicates collapse)."""
    if not history:
        raise ValueError("history must be nonempty")
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    return set(history[-k:])


def br_ranked(history: Sequence[int], k: int) -> list[int]:
    """Distinct history items, most recent first, up to k of them."""
    if not history:
        raise ValueError("history must be nonempty")
    ranked: list[int] = []
    seen: set[int] = set()
    for item in reversed(history):
        if item not in seen:
            seen.add(item)
            ranked.append(item)
            if len(ranked) == k:
                break
    return ranked


def _itemcf_scores(history, table: SimilarityTable, include_history: bool) -> np.ndarray:
    scores = np.zeros(table.n_items)
    hist_set = set(history)
    for item in hist_set:
        items, sims = table.row(item)
        if items.size:
            np.maximum.at(scores, items, sims)
    hist_idx = np.fromiter(hist_set, dtype=np.int64)
    if include_history:
        scores[hist_idx] = 1.0  # self-similarity of a history item
    else:
        scores[hist_idx] = 0.0
    return scores


def itemcf_ranked(
    history: Sequence[int],
    table: SimilarityTable,
    k: int,
    include_history: bool = False,
) -> list[int]:
    """Top-k candidates by max similarity to any history item.

    Candidates are the union of the history items' neighbor rows; history
    items themselves are excluded unless ``include_history`` is set. Ties
    break toward the smaller item index, and fewer than k items come back
    when candidates run out.
    """
    if not history:
        raise ValueError("history must be nonempty")
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    scores = _itemcf_scores(history, table, include_history)
    candidates = np.flatnonzero(scores > 0.0)
    if not candidates.size:
        return []
    order = np.argsort(-scores[candidates], kind="stable")
    return [int(v) for v in candidates[order[:k]]]


def itemcf_topk(
    history: Sequence[int],
    table: SimilarityTable,
    k: int,
    include_history: bool = False,
) -> set[int]:
    return set(itemcf_ranked(history, table, k, include_history=include_history))


# Similarity persistence: one `item<TAB>item<TAB>similarity` triple per line,
# full-precision decimals, ordered by (first item, similarity desc, item asc).


def save_similarity(table: SimilarityTable, path) -> None:
    with io.open(Path(path), "w", encoding="utf-8", newline="\n") as fh:
        for item in range(table.n_items):
            items, sims = table.row(item)
            for other, sim in zip(items.tolist(), sims.tolist()):
                fh.write(f"{item}\t{other}\t{sim!r}\n")


def load_similarity(path, n_items: int | None = None) -> SimilarityTable:
    rows: dict[int, list[tuple[int, float]]] = {}
    max_idx = -1
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        a, b, sim = line.split("\t")
        a, b = int(a), int(b)
        rows.setdefault(a, []).append((b, float(sim)))
        max_idx = max(max_idx, a, b)
    if n_items is None:
        n_items = max_idx + 1
    elif max_idx >= n_items:
        raise ValueError(f"similarity file references item {max_idx} >= n_items {n_items}")
    neighbors = []
    similarities = []
    for item in range(n_items):
        row = rows.get(item, [])
        neighbors.append(np.array([v for v, _ in row], dtype=np.int64))
        similarities.append(np.array([s for _, s in row], dtype=np.float64))
    return SimilarityTable(n_items=n_items, neighbors=neighbors, similarities=similarities)
