"""Implicit-feedback corpus handling.

Raw events (user, item, timestamp) are turned into per-user behavior
sequences, filtered so every user has at least ``min_user_len`` interactions
and every item is interacted with by at least ``min_item_users`` distinct
users, then re-indexed to dense integer ids. Training instances enumerate
every history/future split of a sequence; evaluation splits keep the first
80% as history and score against the remaining items.
"""

from __future__ import annotations

import io
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

__all__ = [
    "InteractionEvent",
    "Corpus",
    "SplitCorpus",
    "TrainingInstance",
    "ParseError",
    "EmptyCorpusError",
    "ingest_events",
    "build_sequences",
    "filter_corpus",
    "split_users",
    "training_instances",
    "eval_split",
    "save_corpus",
    "load_corpus",
    "save_split",
    "load_split",
]

MIN_SEQUENCE_LEN = 5


class ParseError(ValueError):
    """Malformed input line; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyCorpusError(ValueError):
    """Filtering removed every user/item."""


@dataclass(frozen=True)
class InteractionEvent:
    user: str
    item: str
    timestamp: int


@dataclass
class Corpus:
    """Filtered interaction data with dense 0-based user/item indices."""

    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    sequences: tuple[tuple[int, ...], ...]
    user_index: dict[str, int] = field(default_factory=dict, repr=False)
    item_index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.user_index:
            self.user_index = {u: i for i, u in enumerate(self.user_ids)}
        if not self.item_index:
            self.item_index = {v: i for i, v in enumerate(self.item_ids)}

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)


@dataclass(frozen=True)
class SplitCorpus:
    """Disjoint train/valid/test user-index sets (stored sorted)."""

    train_users: tuple[int, ...]
    valid_users: tuple[int, ...]
    test_users: tuple[int, ...]


@dataclass(frozen=True)
class TrainingInstance:
    """One history/future split of a behavior sequence.

    ``t`` is the 1-based split index: the history covers the first ``t``
    interactions (truncated to the most recent ``l_max``), ``next_item`` is
    interaction ``t+1`` and ``future`` is the set of all remaining items.
    """

    user: int
    t: int
    history: tuple[int, ...]
    next_item: int
    future: frozenset[int]


def ingest_events(source) -> list[InteractionEvent]:
    """Parse tab-separated ``user<TAB>item<TAB>timestamp`` event records.

    ``source`` may be bytes, a text string, or a file-like object. Raises
    :class:`ParseError` with the offending line number on malformed input;
    an empty source yields an empty list.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data

    events: list[InteractionEvent] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(line_no, f"expected 3 tab-separated fields, got {len(parts)}")
        user, item, raw_ts = parts
        if not user or not item:
            raise ParseError(line_no, "empty user or item id")
        try:
            ts = int(raw_ts)
        except ValueError:
            raise ParseError(line_no, f"timestamp {raw_ts!r} is not an integer") from None
        if ts < 0:
            raise ParseError(line_no, f"timestamp {ts} is negative")
        events.append(InteractionEvent(user, item, ts))
    return events


def build_sequences(events: Iterable[InteractionEvent]) -> dict[str, list[str]]:
    """Group events per user and sort each user's items by timestamp.

    The sort is stable, so events sharing a timestamp keep their input
    order. Users appear in first-appearance order.
    """
    per_user: dict[str, list[tuple[int, str]]] = {}
    for ev in events:
        per_user.setdefault(ev.user, []).append((ev.timestamp, ev.item))
    sequences: dict[str, list[str]] = {}
    for user, pairs in per_user.items():
        pairs.sort(key=lambda p: p[0])
        sequences[user] = [item for _, item in pairs]
    return sequences


def filter_corpus(
    sequences: dict[str, list[str]],
    min_user_len: int = 5,
    min_item_users: int = 5,
) -> Corpus:
    """Iterate user/item removal to a fixpoint and densely re-index.

    Users shorter than ``min_user_len`` interactions and items interacted
    with by fewer than ``min_item_users`` distinct users are removed
    repeatedly until both conditions hold. Dense indices follow
    first-appearance order over the surviving data.
    """
    seqs = {u: list(items) for u, items in sequences.items()}
    while True:
        seqs = {u: items for u, items in seqs.items() if len(items) >= min_user_len}
        item_users = Counter()
        for items in seqs.values():
            for item in set(items):
                item_users[item] += 1
        rare = {v for v, n in item_users.items() if n < min_item_users}
        if not rare:
            break
        seqs = {u: [v for v in items if v not in rare] for u, items in seqs.items()}

    seqs = {u: items for u, items in seqs.items() if items}
    if not seqs:
        raise EmptyCorpusError("filtering removed every user and item")

    user_ids: list[str] = []
    item_ids: list[str] = []
    item_index: dict[str, int] = {}
    indexed: list[tuple[int, ...]] = []
    for user, items in seqs.items():
        user_ids.append(user)
        row = []
        for item in items:
            if item not in item_index:
                item_index[item] = len(item_ids)
                item_ids.append(item)
            row.append(item_index[item])
        indexed.append(tuple(row))

    return Corpus(
        user_ids=tuple(user_ids),
        item_ids=tuple(item_ids),
        sequences=tuple(indexed),
    )


def split_users(corpus: Corpus, ratios: tuple[int, int, int] = (8, 1, 1), seed: int = 0) -> SplitCorpus:
    """Seeded shuffle of all users, then contiguous cuts at the ratio marks."""
    n = corpus.n_users
    if n < 3:
        raise ValueError(f"need at least 3 users to split, got {n}")
    if any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise ValueError(f"invalid split ratios {ratios}")
    total = sum(ratios)
    order = list(range(n))
    random.Random(seed).shuffle(order)
    cut1 = math.floor(n * ratios[0] / total)
    cut2 = math.floor(n * (ratios[0] + ratios[1]) / total)
    return SplitCorpus(
        train_users=tuple(sorted(order[:cut1])),
        valid_users=tuple(sorted(order[cut1:cut2])),
        test_users=tuple(sorted(order[cut2:])),
    )


def training_instances(user: int, items: tuple[int, ...], l_max: int) -> Iterator[TrainingInstance]:
    """Yield the ``n_u - 4`` training instances of one sequence.

    The split index t runs from 4 to ``n_u - 1`` so history and future are
    both nonempty; history keeps only the ``l_max`` most recent items.
    """
    n = len(items)
    if n < MIN_SEQUENCE_LEN:
        raise ValueError(f"sequence length {n} violates the minimum of {MIN_SEQUENCE_LEN}")
    if l_max < 1:
        raise ValueError(f"l_max must be positive, got {l_max}")
    for t in range(4, n):
        yield TrainingInstance(
            user=user,
            t=t,
            history=tuple(items[max(0, t - l_max):t]),
            next_item=items[t],
            future=frozenset(items[t:]),
        )


def eval_split(items: tuple[int, ...]) -> tuple[tuple[int, ...], frozenset[int]]:
    """First 80% of a sequence as history, the remaining items as truth set."""
    n = len(items)
    if n < MIN_SEQUENCE_LEN:
        raise ValueError(f"sequence length {n} violates the minimum of {MIN_SEQUENCE_LEN}")
    cut = math.floor(0.8 * n)
    return tuple(items[:cut]), frozenset(items[cut:])


# --- persistence -----------------------------------------------------------
#
# A corpus directory holds:
#   user_map.tsv   external_id<TAB>internal_index
#   item_map.tsv   external_id<TAB>internal_index
#   sequences.tsv  user_index<TAB>item_index,item_index,...
#   splits.tsv     user_index<TAB>{train|valid|test}   (written by save_split)


def save_corpus(corpus: Corpus, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with io.open(out / "user_map.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for idx, ext in enumerate(corpus.user_ids):
            fh.write(f"{ext}\t{idx}\n")
    with io.open(out / "item_map.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for idx, ext in enumerate(corpus.item_ids):
            fh.write(f"{ext}\t{idx}\n")
    with io.open(out / "sequences.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for user, items in enumerate(corpus.sequences):
            fh.write(f"{user}\t{','.join(str(v) for v in items)}\n")


def load_corpus(corpus_dir) -> Corpus:
    src = Path(corpus_dir)

    def read_map(name):
        ids: list[str] = []
        for line_no, line in enumerate((src / name).read_text(encoding="utf-8").splitlines(), 1):
            ext, _, idx = line.partition("\t")
            if int(idx) != len(ids):
                raise ParseError(line_no, f"{name}: indices must be dense and ordered")
            ids.append(ext)
        return tuple(ids)

    user_ids = read_map("user_map.tsv")
    item_ids = read_map("item_map.tsv")
    sequences: list[tuple[int, ...]] = []
    for line_no, line in enumerate((src / "sequences.tsv").read_text(encoding="utf-8").splitlines(), 1):
        user, _, items = line.partition("\t")
        if int(user) != len(sequences):
            raise ParseError(line_no, "sequences.tsv: user indices must be dense and ordered")
        sequences.append(tuple(int(v) for v in items.split(",")))
    if len(sequences) != len(user_ids):
        raise ValueError("sequences.tsv and user_map.tsv disagree on the user count")
    return Corpus(user_ids=user_ids, item_ids=item_ids, sequences=tuple(sequences))


def save_split(split: SplitCorpus, out_dir) -> None:
    rows = [(u, "train") for u in split.train_users]
    rows += [(u, "valid") for u in split.valid_users]
    rows += [(u, "test") for u in split.test_users]
    rows.sort()
    with io.open(Path(out_dir) / "splits.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for user, name in rows:
            fh.write(f"{user}\t{name}\n")


def load_split(corpus_dir) -> SplitCorpus:
    buckets: dict[str, list[int]] = {"train": [], "valid": [], "test": []}
    path = Path(corpus_dir) / "splits.tsv"
    for line in path.read_text(encoding="utf-8").splitlines():
        user, _, name = line.partition("\t")
        buckets[name].append(int(user))
    return SplitCorpus(
        train_users=tuple(sorted(buckets["train"])),
        valid_users=tuple(sorted(buckets["valid"])),
        test_users=tuple(sorted(buckets["test"])),
    )
