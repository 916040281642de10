"""Seeded synthetic corpora with planted cluster structure.

Each user performs a Markov walk: with probability ``repeat_prob`` they
re-consume one of their last five items, otherwise they pick a cluster
(their current one with probability ``p_in``, any other uniformly), make it
current, and consume a uniform item inside it. Items partition into
contiguous equal-size cluster blocks, so recommendations are identifiable:
recent items repeat and same-cluster items co-occur.
"""

from __future__ import annotations

import io
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["SynthConfig", "generate", "generate_to", "item_cluster"]

REPEAT_WINDOW = 5


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 1000
    n_items: int = 500
    n_clusters: int = 10
    p_in: float = 0.8
    repeat_prob: float = 0.3
    min_len: int = 15
    max_len: int = 45
    seed: int = 0

    def __post_init__(self):
        if self.n_users < 1 or self.n_items < 1 or self.n_clusters < 1:
            raise ValueError("n_users, n_items and n_clusters must be positive")
        if self.n_items % self.n_clusters != 0:
            raise ValueError(f"n_items {self.n_items} not divisible by n_clusters {self.n_clusters}")
        if not 0.0 < self.p_in < 1.0:
            raise ValueError(f"p_in must be in (0, 1), got {self.p_in}")
        if self.n_clusters > 1 and self.p_in <= 1.0 / self.n_clusters:
            raise ValueError(f"p_in {self.p_in} leaves no cluster structure")
        if not 0.0 <= self.repeat_prob < 1.0:
            raise ValueError(f"repeat_prob must be in [0, 1), got {self.repeat_prob}")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError(f"invalid sequence length range [{self.min_len}, {self.max_len}]")

    @property
    def cluster_size(self) -> int:
        return self.n_items // self.n_clusters


def item_cluster(config: SynthConfig, item: int) -> int:
    """Cluster of a generator item index (also parses 'i<n>' external ids)."""
    if isinstance(item, str):
        item = int(item.lstrip("i"))
    return item // config.cluster_size


def generate(config: SynthConfig) -> str:
    """Event stream as `user<TAB>item<TAB>timestamp` lines, seeded."""
    rng = np.random.default_rng(config.seed)
    lines: list[str] = []
    for user in range(config.n_users):
        length = int(rng.integers(config.min_len, config.max_len + 1))
        current = int(rng.integers(config.n_clusters))
        recent: deque[int] = deque(maxlen=REPEAT_WINDOW)
        for step in range(1, length + 1):
            if recent and rng.random() < config.repeat_prob:
                item = recent[int(rng.integers(len(recent)))]
            else:
                if config.n_clusters > 1 and rng.random() >= config.p_in:
                    other = int(rng.integers(config.n_clusters - 1))
                    current = other if other < current else other + 1
                item = current * config.cluster_size + int(rng.integers(config.cluster_size))
            recent.append(item)
            lines.append(f"u{user}\ti{item}\t{step}")
    return "\n".join(lines) + "\n"


def generate_to(path, config: SynthConfig) -> None:
    with io.open(Path(path), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(generate(config))
