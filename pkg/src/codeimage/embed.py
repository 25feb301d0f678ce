"""Sentence embeddings for code lines.

Two modes share one interface. ``trained`` is a unigram sent2vec-style
model: a line is the mean of its word vectors, and word vectors are learned
by predicting each token from the mean of the others with negative
sampling. ``hashed`` needs no training: each token adds a signed unit to a
hashed coordinate and the result is L2-normalized.
"""

from __future__ import annotations

import hashlib
import re
import struct
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import BadMagic, EmptyCorpus, TruncatedFile

DIM = 128
MAGIC = b"VMCEMB1"
TRAINED, HASHED = "trained", "hashed"

_WORD_RE = re.compile(
    r'"(?:\\.|[^"\\])*"?'  # string literal, kept whole
    r"|'(?:\\.|[^'\\])*'?"
    r"|[A-Za-z_]\w*"
    r"|\d\w*(?:\.\d\w*)?"
    r"|\S"
)


def tokenize(line: str) -> list[str]:
    return _WORD_RE.findall(line)


@dataclass(frozen=True)
class EmbeddingModel:
    vocabulary: dict
    word_vectors: np.ndarray = field(repr=False)
    mode: str = TRAINED
    dim: int = DIM
    seed: int = 0
    history: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.mode == HASHED and self.vocabulary:
            raise ValueError("hashed mode carries no vocabulary")
        if self.mode == TRAINED and self.word_vectors.shape != (len(self.vocabulary), self.dim):
            raise ValueError("word_vectors shape does not match vocabulary")


def hashed_model(seed: int = 0, dim: int = DIM) -> EmbeddingModel:
    return EmbeddingModel({}, np.zeros((0, dim), dtype=np.float32), HASHED, dim, seed)


@lru_cache(maxsize=1 << 16)
def _token_hash(token: str, seed: int) -> int:
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


def embed_sentence(model: EmbeddingModel, line: str) -> np.ndarray:
    tokens = tokenize(line)
    vec = np.zeros(model.dim)
    if model.mode == HASHED:
        for tok in tokens:
            h = _token_hash(tok, model.seed)
            vec[h % model.dim] += 1.0 if (h >> 32) & 1 else -1.0
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec
    ids = [model.vocabulary[t] for t in tokens if t in model.vocabulary]
    if ids:
        vec = model.word_vectors[ids].astype(np.float64).mean(axis=0)
    return vec


def embed_lines(model: EmbeddingModel, lines: Sequence[str]) -> np.ndarray:
    if not lines:
        return np.zeros((0, model.dim))
    return np.stack([embed_sentence(model, line) for line in lines])


def train_embedding(
    corpus: Iterable[Sequence[str]],
    dim: int = DIM,
    epochs: int = 5,
    seed: int = 0,
    *,
    negatives: int = 5,
    min_count: int = 2,
    learning_rate: float = 0.05,
    holdout: float = 0.1,
) -> EmbeddingModel:
    """Train word vectors on token sequences (one per code line).

    ``history`` on the returned model holds the held-out loss per target
    before training and after every epoch.
    """
    sentences = [list(s) for s in corpus]
    counts = Counter(tok for s in sentences for tok in s)
    if not counts:
        raise EmptyCorpus("no tokens in corpus")
    words = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
    if not words:
        raise EmptyCorpus(f"no token occurs at least {min_count} times")
    vocab = {w: i for i, w in enumerate(words)}
    V = len(words)

    rng = np.random.default_rng(seed)
    encoded = [np.array([vocab[t] for t in s if t in vocab], dtype=np.int64) for s in sentences]
    encoded = [e for e in encoded if len(e) >= 2]
    if not encoded:
        raise EmptyCorpus("no sentence has two in-vocabulary tokens")
    perm = rng.permutation(len(encoded))
    n_hold = int(round(holdout * len(encoded))) if len(encoded) > 1 else 0
    n_hold = max(1, n_hold) if len(encoded) > 1 and holdout > 0 else n_hold
    held = [encoded[i] for i in sorted(perm[:n_hold])]
    train = [encoded[i] for i in sorted(perm[n_hold:])]

    def pack(seqs):
        offsets = np.zeros(len(seqs) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum([len(s) for s in seqs])
        flat = np.concatenate(seqs) if seqs else np.zeros(0, dtype=np.int64)
        return flat, offsets

    train_tokens, train_offsets = pack(train)
    held_tokens, held_offsets = pack(held)
    noise = np.array([counts[w] for w in words], dtype=np.float64) ** 0.75
    noise /= noise.sum()

    W_in = rng.uniform(-0.5 / dim, 0.5 / dim, size=(V, dim))
    W_out = np.zeros((V, dim))

    n_train_targets = len(train_tokens)
    held_negatives = rng.choice(V, size=(len(held_tokens), negatives), p=noise)
    held_order = np.arange(len(held), dtype=np.int64)
    zero_lrs = np.zeros(len(held_tokens))

    def held_loss() -> float:
        if not len(held_tokens):
            return float("nan")
        loss = kernels.neg_sampling_pass(
            held_tokens, held_offsets, held_order, held_negatives, zero_lrs, W_in, W_out, False
        )
        return loss / len(held_tokens)

    history = [held_loss()]
    total = max(1, epochs * n_train_targets)
    for epoch in range(epochs):
        order = rng.permutation(len(train)).astype(np.int64)
        negs = rng.choice(V, size=(n_train_targets, negatives), p=noise)
        step = epoch * n_train_targets + np.arange(n_train_targets)
        lrs = learning_rate * np.maximum(1.0 - step / total, 1e-4)
        kernels.neg_sampling_pass(train_tokens, train_offsets, order, negs, lrs, W_in, W_out, True)
        history.append(held_loss())

    return EmbeddingModel(vocab, W_in.astype(np.float32), TRAINED, dim, seed, tuple(history))


# -- model file -----------------------------------------------------------------


def serialize_embedding(model: EmbeddingModel) -> bytes:
    parts = [MAGIC, struct.pack("<II", model.dim, len(model.vocabulary))]
    for word, _ in sorted(model.vocabulary.items(), key=lambda kv: kv[1]):
        raw = word.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    if model.mode == TRAINED:
        parts.append(np.ascontiguousarray(model.word_vectors, dtype="<f4").tobytes())
    else:
        parts.append(struct.pack("<Q", model.seed & 0xFFFFFFFFFFFFFFFF))
    return b"".join(parts)


def deserialize_embedding(data: bytes) -> EmbeddingModel:
    if data[: len(MAGIC)] != MAGIC:
        raise BadMagic("not an embedding model file")
    pos = len(MAGIC)

    def read(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise TruncatedFile("embedding model file is truncated")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    dim, V = struct.unpack("<II", read(8))
    vocab = {}
    for i in range(V):
        (length,) = struct.unpack("<I", read(4))
        vocab[read(length).decode("utf-8")] = i
    if V == 0:
        (seed,) = struct.unpack("<Q", read(8))
        return hashed_model(seed, dim)
    vectors = np.frombuffer(read(V * dim * 4), dtype="<f4").reshape(V, dim).astype(np.float32)
    return EmbeddingModel(vocab, vectors, TRAINED, dim)


def save_embedding(model: EmbeddingModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_embedding(model))


def load_embedding(path) -> EmbeddingModel:
    with open(path, "rb") as fh:
        return deserialize_embedding(fh.read())
