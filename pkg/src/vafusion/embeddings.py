"""Paragraph-vector document embeddings, trained from scratch by SGD.

Two modes are provided. The distributed-memory mode (dm) predicts each word
from the paragraph vector combined with the vectors of the preceding
`window` words; the distributed-bag-of-words mode (dbow) predicts each word
from the paragraph vector alone. The output layer is an exact softmax over
the vocabulary by default; negative sampling is available for speed on
larger corpora. Windows are truncated at the document start (absent context
slots contribute zeros), so every token position of every non-empty
document is a prediction target.

Training sees tokens and paragraph tags only; class labels can reach the
embedding space solely through token co-occurrence.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .container import load_container, save_container
from .errors import ConfigError, DegenerateDataError, DivergenceError

MODES = ("dm", "dbow")
COMBINE_MODES = ("concatenate", "average")

_MODE_CODE = {
    ("dbow", "concatenate"): _kernels.MODE_DBOW,
    ("dbow", "average"): _kernels.MODE_DBOW,
    ("dm", "concatenate"): _kernels.MODE_DM_CONCAT,
    ("dm", "average"): _kernels.MODE_DM_AVERAGE,
}


@dataclass(frozen=True)
class Vocabulary:
    """Frequency-filtered token inventory with a deterministic index order."""

    tokens: tuple[str, ...]
    counts: np.ndarray  # int64, aligned with tokens
    min_count: int
    token_to_index: dict[str, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        if not self.token_to_index:
            object.__setattr__(self, "token_to_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    def encode(self, tokens: Iterable[str]) -> np.ndarray:
        """Map tokens to indices, silently dropping out-of-vocabulary ones."""
        t2i = self.token_to_index
        return np.asarray([t2i[t] for t in tokens if t in t2i], dtype=np.int32)


def build_vocabulary(docs: Sequence[Sequence[str]], min_count: int = 1) -> Vocabulary:
    """Count tokens across docs and keep those with frequency >= min_count.

    Index order is descending count with lexicographic tie-breaking, so the
    same corpus always yields the same vocabulary.
    """
    counter = Counter()
    for doc in docs:
        counter.update(doc)
    kept = [(t, c) for t, c in counter.items() if c >= min_count]
    if not kept:
        raise ConfigError(f"vocabulary is empty at min_count={min_count}")
    kept.sort(key=lambda item: (-item[1], item[0]))
    tokens = tuple(t for t, _ in kept)
    counts = np.asarray([c for _, c in kept], dtype=np.int64)
    return Vocabulary(tokens=tokens, counts=counts, min_count=min_count)


@dataclass(frozen=True)
class EmbeddingConfig:
    dim: int = 50
    window: int = 9
    epochs: int = 20
    learning_rate: float = 0.05
    lr_floor: float = 1e-4
    mode: str = "dm"
    dm_combine: str = "concatenate"
    negative: int = 0  # 0 = exact softmax output layer
    min_count: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.window < 1 or self.epochs < 1:
            raise ConfigError("dim, window and epochs must all be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.dm_combine not in COMBINE_MODES:
            raise ConfigError(f"dm_combine must be one of {COMBINE_MODES}")
        if self.negative < 0 or self.min_count < 1:
            raise ConfigError("negative must be >= 0 and min_count >= 1")

    @property
    def hidden_width(self) -> int:
        if self.mode == "dm" and self.dm_combine == "concatenate":
            return self.dim * (self.window + 1)
        return self.dim

    @property
    def mode_code(self) -> int:
        return _MODE_CODE[(self.mode, self.dm_combine)]


@dataclass
class ParagraphModel:
    """Trained embedding model: word, paragraph, and output parameters."""

    vocab: Vocabulary
    word_vectors: np.ndarray  # (|V|, dim)
    paragraph_vectors: np.ndarray  # (n_paragraphs, dim)
    output_weights: np.ndarray  # (|V|, hidden_width)
    output_bias: np.ndarray  # (|V|,)
    config: EmbeddingConfig

    def __post_init__(self):
        V, dim = self.word_vectors.shape
        if V != len(self.vocab) or dim != self.config.dim:
            raise ValueError("word_vectors shape disagrees with vocab/config")
        if self.output_weights.shape != (V, self.config.hidden_width):
            raise ValueError("output_weights shape disagrees with config")
        if self.output_bias.shape != (V,):
            raise ValueError("output_bias shape disagrees with vocab")


@dataclass(frozen=True)
class DocVector:
    doc_id: int
    values: np.ndarray
    degenerate: bool = False


def softmax_predict(scores: np.ndarray) -> np.ndarray:
    """Stable softmax: exp(y_i - max) / sum_j exp(y_j - max)."""
    scores = np.asarray(scores, dtype=np.float64)
    shifted = scores - scores.max()
    e = np.exp(shifted)
    return e / e.sum()


def concat_vectors(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate vectors in the given order (text fusion and dm+dbow)."""
    return np.concatenate([np.asarray(p, dtype=np.float64).ravel() for p in parts])


def _lr_at(cfg_lr: float, floor: float, step: int, total: int) -> float:
    floor = min(floor, cfg_lr)
    if total <= 1:
        return cfg_lr
    return cfg_lr + (floor - cfg_lr) * step / (total - 1)


def _to_arrays(vocab: Vocabulary, docs: Sequence[Sequence[str]]):
    encoded = [vocab.encode(doc) for doc in docs]
    offsets = np.zeros(len(docs) + 1, dtype=np.int64)
    for i, ids in enumerate(encoded):
        offsets[i + 1] = offsets[i] + len(ids)
    flat = np.concatenate(encoded) if encoded else np.zeros(0, dtype=np.int32)
    return flat.astype(np.int32), offsets


def _negative_cdf(counts: np.ndarray) -> np.ndarray:
    weights = counts.astype(np.float64) ** 0.75
    return np.cumsum(weights / weights.sum())


def _draw_negatives(rng: np.random.Generator, cdf: np.ndarray, n_positions: int, k: int) -> np.ndarray:
    u = rng.random((n_positions, k))
    return np.searchsorted(cdf, u).astype(np.int32)


_EMPTY_NEG = np.zeros((0, 0), dtype=np.int32)


def train_paragraph_model(
    docs: Sequence[Sequence[str]],
    cfg: EmbeddingConfig,
    tags: Sequence[int] | None = None,
) -> ParagraphModel:
    """Train word, paragraph, and output parameters jointly by SGD.

    `docs` are token sequences; `tags` assigns each document its paragraph
    row (default: one distinct row per document). Passing class identifiers
    as tags reproduces the shared-vector-per-class variant.
    """
    if not docs:
        raise DegenerateDataError("cannot train on an empty corpus")
    vocab = build_vocabulary(docs, cfg.min_count)
    flat, offsets = _to_arrays(vocab, docs)
    if tags is None:
        tag_arr = np.arange(len(docs), dtype=np.int32)
    else:
        tag_arr = np.asarray(list(tags), dtype=np.int32)
        if tag_arr.shape != (len(docs),) or (len(tag_arr) and tag_arr.min() < 0):
            raise ConfigError("tags must provide one non-negative id per document")
    n_paragraphs = int(tag_arr.max()) + 1 if len(tag_arr) else 0

    rng = np.random.default_rng(cfg.seed)
    V, dim = len(vocab), cfg.dim
    W = (rng.random((V, dim)) - 0.5) / dim
    P = (rng.random((n_paragraphs, dim)) - 0.5) / dim
    U = np.zeros((V, cfg.hidden_width), dtype=np.float64)
    b = np.zeros(V, dtype=np.float64)

    n_positions = int(flat.shape[0])
    cdf = _negative_cdf(vocab.counts) if cfg.negative > 0 else None
    for epoch in range(cfg.epochs):
        lr = _lr_at(cfg.learning_rate, cfg.lr_floor, epoch, cfg.epochs)
        if cfg.negative > 0:
            negs = _draw_negatives(rng, cdf, n_positions, cfg.negative)
        else:
            negs = _EMPTY_NEG
        loss = _kernels.sgd_epoch(
            flat, offsets, tag_arr, W, P, U, b,
            cfg.window, cfg.mode_code, lr, negs,
            cfg.negative > 0, True, True,
        )
        if not np.isfinite(loss):
            raise DivergenceError("non-finite training loss", epoch, lr)

    return ParagraphModel(
        vocab=vocab,
        word_vectors=W,
        paragraph_vectors=P,
        output_weights=U,
        output_bias=b,
        config=cfg,
    )


def infer_vector(
    model: ParagraphModel,
    tokens: Sequence[str],
    infer_epochs: int = 50,
    seed: int = 0,
    doc_id: int = -1,
) -> DocVector:
    """Optimize a fresh paragraph vector against the frozen model.

    Word vectors and output weights stay fixed; only the new vector is
    updated, with the model's learning-rate schedule spread over
    infer_epochs. Out-of-vocabulary tokens are skipped; an empty (or fully
    out-of-vocabulary) token list yields a zero vector flagged degenerate.
    """
    cfg = model.config
    ids = model.vocab.encode(tokens)
    if len(ids) == 0:
        return DocVector(doc_id=doc_id, values=np.zeros(cfg.dim), degenerate=True)

    rng = np.random.default_rng(seed)
    p = ((rng.random(cfg.dim) - 0.5) / cfg.dim).reshape(1, -1)
    offsets = np.asarray([0, len(ids)], dtype=np.int64)
    tag_arr = np.zeros(1, dtype=np.int32)
    cdf = _negative_cdf(model.vocab.counts) if cfg.negative > 0 else None
    for epoch in range(infer_epochs):
        lr = _lr_at(cfg.learning_rate, cfg.lr_floor, epoch, infer_epochs)
        if cfg.negative > 0:
            negs = _draw_negatives(rng, cdf, len(ids), cfg.negative)
        else:
            negs = _EMPTY_NEG
        loss = _kernels.sgd_epoch(
            ids, offsets, tag_arr, model.word_vectors, p,
            model.output_weights, model.output_bias,
            cfg.window, cfg.mode_code, lr, negs,
            cfg.negative > 0, False, False,
        )
        if not np.isfinite(loss):
            raise DivergenceError("non-finite inference loss", epoch, lr)
    return DocVector(doc_id=doc_id, values=p[0].copy(), degenerate=False)


def _hidden_matrix(model: ParagraphModel, ids: np.ndarray, tag: int) -> np.ndarray:
    """Input-layer activations for every target position of one document."""
    cfg = model.config
    T = len(ids)
    P_row = model.paragraph_vectors[tag]
    W = model.word_vectors
    if cfg.mode == "dbow":
        return np.tile(P_row, (T, 1))
    if cfg.dm_combine == "concatenate":
        H = np.zeros((T, cfg.hidden_width))
        H[:, : cfg.dim] = P_row
        for slot in range(1, cfg.window + 1):
            if slot < T:
                H[slot:, slot * cfg.dim : (slot + 1) * cfg.dim] = W[ids[:-slot]]
        return H
    H = np.tile(P_row, (T, 1))
    for slot in range(1, cfg.window + 1):
        if slot < T:
            H[slot:] += W[ids[:-slot]]
    n_ctx = np.minimum(np.arange(T), cfg.window)
    return H / (1.0 + n_ctx)[:, None]


def avg_log_prob(
    model: ParagraphModel,
    docs: Sequence[Sequence[str]],
    tags: Sequence[int] | None = None,
) -> float:
    """Average log probability of each target word under the exact softmax.

    Averages over every in-vocabulary token position of every document;
    always <= 0. Raises when no document contributes a position.
    """
    if tags is None:
        tags = range(len(docs))
    U, b = model.output_weights, model.output_bias
    total = 0.0
    count = 0
    for doc, tag in zip(docs, tags):
        ids = model.vocab.encode(doc)
        if len(ids) == 0:
            continue
        H = _hidden_matrix(model, ids, tag)
        S = H @ U.T + b
        S -= S.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(S).sum(axis=1))
        total += float((S[np.arange(len(ids)), ids] - log_z).sum())
        count += len(ids)
    if count == 0:
        raise DegenerateDataError("no valid target positions in corpus")
    return total / count


def objective_gradients(
    model: ParagraphModel,
    docs: Sequence[Sequence[str]],
    tags: Sequence[int] | None = None,
):
    """Analytic gradients of avg_log_prob w.r.t. all parameter groups.

    Returns (value, d_word_vectors, d_paragraph_vectors, d_output_weights,
    d_output_bias). Written as plain per-position loops; intended for small
    instances and gradient verification.
    """
    if tags is None:
        tags = range(len(docs))
    cfg = model.config
    W, P, U, b = model.word_vectors, model.paragraph_vectors, model.output_weights, model.output_bias
    gW = np.zeros_like(W)
    gP = np.zeros_like(P)
    gU = np.zeros_like(U)
    gb = np.zeros_like(b)
    total = 0.0
    count = 0
    for doc, tag in zip(docs, tags):
        ids = model.vocab.encode(doc)
        if len(ids) == 0:
            continue
        H = _hidden_matrix(model, ids, tag)
        for t in range(len(ids)):
            h = H[t]
            probs = softmax_predict(U @ h + b)
            total += float(np.log(probs[ids[t]]))
            count += 1
            err = -probs
            err[ids[t]] += 1.0  # d log p(target) / d scores
            gU += np.outer(err, h)
            gb += err
            dh = U.T @ err
            n_ctx = min(cfg.window, t)
            if cfg.mode == "dbow":
                gP[tag] += dh
            elif cfg.dm_combine == "concatenate":
                gP[tag] += dh[: cfg.dim]
                for slot in range(1, n_ctx + 1):
                    gW[ids[t - slot]] += dh[slot * cfg.dim : (slot + 1) * cfg.dim]
            else:
                scale = 1.0 / (1.0 + n_ctx)
                gP[tag] += scale * dh
                for slot in range(1, n_ctx + 1):
                    gW[ids[t - slot]] += scale * dh
    if count == 0:
        raise DegenerateDataError("no valid target positions in corpus")
    return total / count, gW / count, gP / count, gU / count, gb / count


# --- persistence -----------------------------------------------------------

_SCHEMA = "vafusion/paragraph_model"


def save_model(model: ParagraphModel, path: str | Path) -> None:
    cfg = model.config
    meta = {
        "schema": _SCHEMA,
        "version": 1,
        "config": {
            "dim": cfg.dim,
            "window": cfg.window,
            "epochs": cfg.epochs,
            "learning_rate": cfg.learning_rate,
            "lr_floor": cfg.lr_floor,
            "mode": cfg.mode,
            "dm_combine": cfg.dm_combine,
            "negative": cfg.negative,
            "min_count": cfg.min_count,
            "seed": cfg.seed,
        },
        "vocab_tokens": list(model.vocab.tokens),
        "vocab_min_count": model.vocab.min_count,
    }
    arrays = {
        "word_vectors": model.word_vectors,
        "paragraph_vectors": model.paragraph_vectors,
        "output_weights": model.output_weights,
        "output_bias": model.output_bias,
        "vocab_counts": model.vocab.counts,
    }
    save_container(path, meta, arrays)


def load_model(path: str | Path) -> ParagraphModel:
    meta, arrays = load_container(path)
    if meta.get("schema") != _SCHEMA:
        raise ValueError(f"{path}: not a paragraph model container")
    cfg = EmbeddingConfig(**meta["config"])
    vocab = Vocabulary(
        tokens=tuple(meta["vocab_tokens"]),
        counts=arrays["vocab_counts"],
        min_count=meta["vocab_min_count"],
    )
    return ParagraphModel(
        vocab=vocab,
        word_vectors=arrays["word_vectors"],
        paragraph_vectors=arrays["paragraph_vectors"],
        output_weights=arrays["output_weights"],
        output_bias=arrays["output_bias"],
        config=cfg,
    )
