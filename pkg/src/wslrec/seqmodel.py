"""Trainable sequence scorer: item embeddings, encoders, exact top-k.

A scorer holds a |V| x d item embedding matrix plus one of three encoders
over the history:

* ``meanpool`` - the arithmetic mean of the history item embeddings,
* ``gru`` - a single gated recurrent layer, final hidden state,
* ``multihead`` - m learned query vectors, each attention-pooling the
  history embeddings into one user vector.

An item's score is the maximum inner product between its embedding and the
m user vectors (m = 1 for meanpool/gru). Retrieval is an exact full scan;
everything runs in float64.

Checkpoint layout (little-endian): magic ``WSLREC1\\0``, u32 format version,
u64 item count, u32 dimension, u8 encoder tag (0 meanpool / 1 gru / 2
multihead), u32 m, then the parameter arrays as raw float64 in a fixed
order: embeddings first, then for gru w_z, w_r, w_h, u_z, u_r, u_h, b_z,
b_r, b_h, and for multihead the (m x d) query matrix.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "SequenceScorer",
    "CheckpointError",
    "init_scorer",
    "encode",
    "encode_batch",
    "encode_backward",
    "score",
    "score_items",
    "topk_items",
    "rank_all",
    "softmax_all",
    "pad_histories",
    "save_checkpoint",
    "load_checkpoint",
    "ensure_compatible",
]

MAGIC = b"WSLREC1\x00"
FORMAT_VERSION = 1
ENCODER_TAGS = {"meanpool": 0, "gru": 1, "multihead": 2}
TAG_ENCODERS = {tag: name for name, tag in ENCODER_TAGS.items()}

_GRU_MATS = ("gru_wz", "gru_wr", "gru_wh", "gru_uz", "gru_ur", "gru_uh")
_GRU_VECS = ("gru_bz", "gru_br", "gru_bh")


class CheckpointError(ValueError):
    """Corrupt or incompatible checkpoint file."""


@dataclass
class SequenceScorer:
    encoder: str
    m: int
    params: dict[str, np.ndarray]  # "embeddings" plus encoder arrays

    @property
    def n_items(self) -> int:
        return self.params["embeddings"].shape[0]

    @property
    def dim(self) -> int:
        return self.params["embeddings"].shape[1]

    def copy(self) -> "SequenceScorer":
        return SequenceScorer(
            encoder=self.encoder,
            m=self.m,
            params={name: arr.copy() for name, arr in self.params.items()},
        )


def param_order(encoder: str, m: int, n_items: int, dim: int) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical (name, shape) list used by init, checkpoints, and Adam."""
    order: list[tuple[str, tuple[int, ...]]] = [("embeddings", (n_items, dim))]
    if encoder == "gru":
        order += [(name, (dim, dim)) for name in _GRU_MATS]
        order += [(name, (dim,)) for name in _GRU_VECS]
    elif encoder == "multihead":
        order.append(("queries", (m, dim)))
    elif encoder != "meanpool":
        raise ValueError(f"unknown encoder {encoder!r}")
    return order


def init_scorer(n_items: int, dim: int, encoder: str, m: int = 1, seed: int = 0) -> SequenceScorer:
    """All parameters drawn uniform(-1/sqrt(d), +1/sqrt(d)), seeded."""
    if encoder not in ENCODER_TAGS:
        raise ValueError(f"unknown encoder {encoder!r}")
    if encoder in ("meanpool", "gru") and m != 1:
        raise ValueError(f"{encoder} produces a single user vector, got m={m}")
    if m < 1:
        raise ValueError(f"m must be positive, got {m}")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(dim)
    params = {
        name: rng.uniform(-bound, bound, size=shape)
        for name, shape in param_order(encoder, m, n_items, dim)
    }
    return SequenceScorer(encoder=encoder, m=m, params=params)


def pad_histories(histories: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Left-pad variable-length histories into an index matrix plus mask."""
    if not histories:
        raise ValueError("empty batch")
    length = max(len(h) for h in histories)
    if length == 0:
        raise ValueError("history must be nonempty")
    padded = np.zeros((len(histories), length), dtype=np.int64)
    mask = np.zeros((len(histories), length))
    for i, hist in enumerate(histories):
        if len(hist) == 0:
            raise ValueError("history must be nonempty")
        padded[i, length - len(hist):] = hist
        mask[i, length - len(hist):] = 1.0
    return padded, mask


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def encode_batch(model: SequenceScorer, padded: np.ndarray, mask: np.ndarray):
    """Forward pass over a left-padded batch.

    Returns the (B, m, d) user representations and an opaque cache consumed
    by :func:`encode_backward`.
    """
    E = model.params["embeddings"]
    if padded.size and (padded.min() < 0 or padded.max() >= model.n_items):
        raise ValueError("history item index out of range")
    X = E[padded]  # (B, L, d)

    if model.encoder == "meanpool":
        counts = mask.sum(axis=1)
        h = (X * mask[:, :, None]).sum(axis=1) / counts[:, None]
        cache = ("meanpool", padded, mask, counts)
        return h[:, None, :], cache

    if model.encoder == "gru":
        p = model.params
        B, L, d = X.shape
        h = np.zeros((B, d))
        steps = []
        for t in range(L):
            x = X[:, t, :]
            m_t = mask[:, t][:, None]
            z = _sigmoid(x @ p["gru_wz"] + h @ p["gru_uz"] + p["gru_bz"])
            r = _sigmoid(x @ p["gru_wr"] + h @ p["gru_ur"] + p["gru_br"])
            rh = r * h
            c = np.tanh(x @ p["gru_wh"] + rh @ p["gru_uh"] + p["gru_bh"])
            h_new = (1.0 - z) * h + z * c
            steps.append((x, h, z, r, c, m_t))
            h = m_t * h_new + (1.0 - m_t) * h
        cache = ("gru", padded, mask, steps)
        return h[:, None, :], cache

    if model.encoder == "multihead":
        Q = model.params["queries"]  # (m, d)
        logits = np.einsum("bld,md->bml", X, Q)
        logits = np.where(mask[:, None, :] > 0, logits, -np.inf)
        logits -= logits.max(axis=2, keepdims=True)
        expl = np.exp(logits)
        alpha = expl / expl.sum(axis=2, keepdims=True)  # (B, m, L)
        H = np.einsum("bml,bld->bmd", alpha, X)
        cache = ("multihead", padded, mask, X, alpha)
        return H, cache

    raise ValueError(f"unknown encoder {model.encoder!r}")


def encode_backward(model: SequenceScorer, cache, dH: np.ndarray) -> dict[str, np.ndarray]:
    """Backpropagate dL/dH to all parameters, embeddings included."""
    grads = {name: np.zeros_like(arr) for name, arr in model.params.items()}
    dE = grads["embeddings"]
    kind = cache[0]

    if kind == "meanpool":
        _, padded, mask, counts = cache
        dh = dH[:, 0, :]
        dX = (dh[:, None, :] / counts[:, None, None]) * mask[:, :, None]
        _scatter_rows(dE, padded, mask, dX)
        return grads

    if kind == "gru":
        _, padded, mask, steps = cache
        p = model.params
        E = p["embeddings"]
        dh = dH[:, 0, :].copy()
        dX = np.zeros((padded.shape[0], padded.shape[1], E.shape[1]))
        for t in range(len(steps) - 1, -1, -1):
            x, h_prev, z, r, c, m_t = steps[t]
            dh_new = dh * m_t
            dh_prev = dh * (1.0 - m_t)

            dz = dh_new * (c - h_prev)
            dc = dh_new * z
            dh_prev += dh_new * (1.0 - z)

            da_c = dc * (1.0 - c * c)
            grads["gru_wh"] += x.T @ da_c
            grads["gru_uh"] += (r * h_prev).T @ da_c
            grads["gru_bh"] += da_c.sum(axis=0)
            drh = da_c @ p["gru_uh"].T
            dx = da_c @ p["gru_wh"].T
            dr = drh * h_prev
            dh_prev += drh * r

            da_r = dr * r * (1.0 - r)
            grads["gru_wr"] += x.T @ da_r
            grads["gru_ur"] += h_prev.T @ da_r
            grads["gru_br"] += da_r.sum(axis=0)
            dx += da_r @ p["gru_wr"].T
            dh_prev += da_r @ p["gru_ur"].T

            da_z = dz * z * (1.0 - z)
            grads["gru_wz"] += x.T @ da_z
            grads["gru_uz"] += h_prev.T @ da_z
            grads["gru_bz"] += da_z.sum(axis=0)
            dx += da_z @ p["gru_wz"].T
            dh_prev += da_z @ p["gru_uz"].T

            dX[:, t, :] = dx
            dh = dh_prev
        _scatter_rows(dE, padded, mask, dX)
        return grads

    if kind == "multihead":
        _, padded, mask, X, alpha = cache
        Q = model.params["queries"]
        dalpha = np.einsum("bmd,bld->bml", dH, X)
        ds = alpha * (dalpha - (alpha * dalpha).sum(axis=2, keepdims=True))
        grads["queries"] += np.einsum("bml,bld->md", ds, X)
        dX = np.einsum("bml,bmd->bld", alpha, dH) + np.einsum("bml,md->bld", ds, Q)
        _scatter_rows(dE, padded, mask, dX)
        return grads

    raise ValueError(f"unknown cache kind {kind!r}")


def scatter_add_rows(target: np.ndarray, rows: np.ndarray, contrib: np.ndarray) -> None:
    """target[rows] += contrib with repeated row indices (sort + reduceat;
    much faster than np.add.at for many rows)."""
    if rows.size == 0:
        return
    order = np.argsort(rows, kind="stable")
    sorted_rows = rows[order]
    boundaries = np.flatnonzero(
        np.concatenate(([True], sorted_rows[1:] != sorted_rows[:-1]))
    )
    target[sorted_rows[boundaries]] += np.add.reduceat(contrib[order], boundaries, axis=0)


def _scatter_rows(dE: np.ndarray, padded: np.ndarray, mask: np.ndarray, dX: np.ndarray) -> None:
    live = mask.reshape(-1) > 0
    rows = padded.reshape(-1)[live]
    scatter_add_rows(dE, rows, dX.reshape(-1, dX.shape[-1])[live])


def encode(model: SequenceScorer, history: Sequence[int]) -> np.ndarray:
    """User representation for a single history, shape (m, d)."""
    if len(history) == 0:
        raise ValueError("history must be nonempty")
    padded, mask = pad_histories([history])
    H, _ = encode_batch(model, padded, mask)
    return H[0]


def score(model: SequenceScorer, rep: np.ndarray, item: int) -> float:
    """Max inner product between the item embedding and the user vectors."""
    if not 0 <= item < model.n_items:
        raise ValueError(f"item {item} out of range")
    return float((rep @ model.params["embeddings"][item]).max())


def score_items(model: SequenceScorer, rep: np.ndarray, items: np.ndarray | None = None) -> np.ndarray:
    E = model.params["embeddings"] if items is None else model.params["embeddings"][items]
    return (E @ rep.T).max(axis=1)


def rank_all(model: SequenceScorer, rep: np.ndarray) -> np.ndarray:
    """All items ordered by (score desc, item asc); exact full scan."""
    scores = score_items(model, rep)
    return np.argsort(-scores, kind="stable")


def topk_items(
    model: SequenceScorer,
    history: Sequence[int],
    k: int,
    exclude: Sequence[int] | set[int] = (),
) -> list[int]:
    """The k highest-scoring items, ties to the smaller index.

    Excluded items never appear; if fewer than k items remain the list is
    shorter.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    rep = encode(model, history)
    scores = score_items(model, rep)
    excl = {v for v in exclude if 0 <= v < model.n_items}
    if excl:
        scores = scores.copy()
        scores[list(excl)] = -np.inf
    order = np.argsort(-scores, kind="stable")
    return [int(v) for v in order[: min(k, model.n_items - len(excl))]]


def softmax_all(model: SequenceScorer, history: Sequence[int]) -> np.ndarray:
    """Full softmax over the item set (dense; for small-corpus use)."""
    rep = encode(model, history)
    scores = score_items(model, rep)
    scores = scores - scores.max()
    expd = np.exp(scores)
    return expd / expd.sum()


def topk_batch(
    model: SequenceScorer,
    histories: Sequence[Sequence[int]],
    k: int,
) -> list[list[int]]:
    """Exact top-k lists for many histories.

    Deliberately loops :func:`topk_items` so every retrieval everywhere
    shares one scoring path and stays bit-for-bit reproducible.
    """
    return [topk_items(model, hist, k) for hist in histories]


def save_checkpoint(path, model: SequenceScorer) -> None:
    order = param_order(model.encoder, model.m, model.n_items, model.dim)
    with open(Path(path), "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQIBI", FORMAT_VERSION, model.n_items, model.dim,
                             ENCODER_TAGS[model.encoder], model.m))
        for name, shape in order:
            arr = model.params[name]
            if arr.shape != shape:
                raise CheckpointError(f"parameter {name} has shape {arr.shape}, expected {shape}")
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> SequenceScorer:
    data = Path(path).read_bytes()
    header = struct.calcsize("<IQIBI")
    if len(data) < len(MAGIC) + header:
        raise CheckpointError("file too short for a checkpoint header")
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError("bad magic bytes")
    version, n_items, dim, tag, m = struct.unpack_from("<IQIBI", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {version}")
    if tag not in TAG_ENCODERS:
        raise CheckpointError(f"unknown encoder tag {tag}")
    encoder = TAG_ENCODERS[tag]
    if encoder in ("meanpool", "gru") and m != 1:
        raise CheckpointError(f"{encoder} checkpoint with m={m}")

    offset = len(MAGIC) + header
    params: dict[str, np.ndarray] = {}
    for name, shape in param_order(encoder, m, n_items, dim):
        count = int(np.prod(shape))
        end = offset + count * 8
        if end > len(data):
            raise CheckpointError(f"truncated checkpoint while reading {name}")
        params[name] = np.frombuffer(data[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
    if offset != len(data):
        raise CheckpointError(f"{len(data) - offset} trailing bytes after parameters")
    return SequenceScorer(encoder=encoder, m=m, params=params)


def ensure_compatible(model: SequenceScorer, n_items: int) -> None:
    """Bind-time dimension check between a checkpoint and a corpus."""
    if model.n_items != n_items:
        raise CheckpointError(
            f"checkpoint covers {model.n_items} items but the corpus has {n_items}"
        )
