"""TextCNN-style classifier over code images, with hand-written backprop and Adam.

Filter bank m holds ``n_maps`` filters of shape (3, m, dim) spanning the
full embedding width. Responses are ReLU'd, globally max-pooled and fed to
a 2-way affine head. Class 1 is ``vulnerable``, class 0 ``safe``.

The forward pass computes every (row, filter, offset) response with one
matrix product over the populated rows of the image; windows that lie
entirely in the zero padding evaluate to the bias and are handled without
touching the padding rows.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .embed import DIM
from .errors import BadMagic, RowsTooSmall, ShapeMismatch, SingleClassDataset, TruncatedFile
from .imagegen import CodeImage
from .ingest import SAFE, VULNERABLE

MAGIC = b"VMCNET1"
HEIGHTS = tuple(range(1, 11))
N_MAPS = 32
N_CLASSES = 2
CLASS_NAMES = (SAFE, VULNERABLE)
_HEADER = struct.Struct("<IIIIIIQ")


@dataclass
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 0.001
    epochs: int = 100
    loss: str = "cross_entropy"
    activation: str = "relu"
    optimizer: str = "adam"
    class_weighting: bool = False


@dataclass
class CnnModel:
    filters: list  # bank b: (n_maps, 3, heights[b], dim)
    biases: list  # bank b: (n_maps,)
    fc_weights: np.ndarray  # (2, n_banks * n_maps)
    fc_bias: np.ndarray  # (2,)
    rows: int
    dim: int = DIM
    seed: int = 0
    heights: tuple = HEIGHTS
    n_maps: int = N_MAPS

    @property
    def feature_length(self) -> int:
        return len(self.heights) * self.n_maps

    def parameters(self) -> list[np.ndarray]:
        """Parameters in checkpoint order: (W_m, b_m) per bank, then the head."""
        out = []
        for w, b in zip(self.filters, self.biases):
            out.extend([w, b])
        out.extend([self.fc_weights, self.fc_bias])
        return out

    def copy(self) -> "CnnModel":
        return CnnModel(
            [w.copy() for w in self.filters],
            [b.copy() for b in self.biases],
            self.fc_weights.copy(),
            self.fc_bias.copy(),
            self.rows, self.dim, self.seed, self.heights, self.n_maps,
        )


def fan_in(height: int, dim: int = DIM) -> int:
    return 3 * height * dim


def init_model(seed: int, rows: int, dim: int = DIM, *, heights=HEIGHTS, n_maps: int = N_MAPS) -> CnnModel:
    heights = tuple(int(h) for h in heights)
    if rows < max(heights):
        raise RowsTooSmall(f"rows={rows} is smaller than the tallest filter ({max(heights)})")
    rng = np.random.default_rng(seed)
    filters, biases = [], []
    for m in heights:
        bound = np.sqrt(1.0 / fan_in(m, dim))
        filters.append(rng.uniform(-bound, bound, size=(n_maps, 3, m, dim)))
        biases.append(np.zeros(n_maps))
    features = len(heights) * n_maps
    bound = np.sqrt(1.0 / features)
    fc_w = rng.uniform(-bound, bound, size=(N_CLASSES, features))
    return CnnModel(filters, biases, fc_w, np.zeros(N_CLASSES), rows, dim, seed, heights, n_maps)


# -- packing helpers --------------------------------------------------------------


def _layout(model: CnnModel) -> tuple[np.ndarray, np.ndarray]:
    heights = np.array(model.heights, dtype=np.int64)
    offsets = np.zeros(len(heights), dtype=np.int64)
    offsets[1:] = np.cumsum(heights[:-1]) * model.n_maps
    return heights, offsets


def _stacked_filters(model: CnnModel) -> np.ndarray:
    """(3 * dim, n_maps * sum(heights)); column = offset * n_maps + filter."""
    blocks = [
        w.transpose(1, 3, 2, 0).reshape(3 * model.dim, m * model.n_maps)
        for w, m in zip(model.filters, model.heights)
    ]
    return np.ascontiguousarray(np.concatenate(blocks, axis=1))


def image_rows(channels: np.ndarray) -> np.ndarray:
    """(rows, 3 * dim) view of a (3, rows, dim) image: row r = all channels of r."""
    return channels.transpose(1, 0, 2).reshape(channels.shape[1], -1)


def _populated(X: np.ndarray) -> int:
    nz = np.flatnonzero(np.any(X != 0, axis=1))
    return int(nz[-1]) + 1 if nz.size else 0


@dataclass
class _Prepared:
    X: np.ndarray  # populated rows only, float32, (n, 3 * dim)
    n: int
    label: int = -1


def prepare(image: CodeImage | np.ndarray, model: CnnModel) -> _Prepared:
    channels = image.channels if isinstance(image, CodeImage) else np.asarray(image)
    if channels.shape != (3, model.rows, model.dim):
        raise ShapeMismatch(f"image shape {channels.shape} != {(3, model.rows, model.dim)}")
    X = image_rows(channels)
    n = _populated(X)
    label = -1
    if isinstance(image, CodeImage) and image.label in CLASS_NAMES:
        label = CLASS_NAMES.index(image.label)
    return _Prepared(np.ascontiguousarray(X[:n], dtype=np.float32), n, label)


@dataclass
class ForwardCache:
    pooled: np.ndarray
    winner: np.ndarray
    logits: np.ndarray
    prepared: _Prepared = field(repr=False)


def _forward_prepared(model: CnnModel, batch: Sequence[_Prepared], W: np.ndarray | None = None) -> list[ForwardCache]:
    if W is None:
        W = _stacked_filters(model)
    heights, offsets = _layout(model)
    bias = np.concatenate(model.biases)
    sizes = [p.n for p in batch]
    stacked = [p.X for p in batch if p.n]
    Y_all = (
        np.concatenate(stacked).astype(np.float64) @ W
        if stacked else np.zeros((0, W.shape[1]))
    )
    caches = []
    start = 0
    for p, n in zip(batch, sizes):
        Y = Y_all[start:start + n]
        start += n
        pooled = np.empty(model.feature_length)
        winner = np.empty(model.feature_length, dtype=np.int64)
        kernels.pool_banks(
            np.ascontiguousarray(Y), n, model.rows, heights, offsets, model.n_maps, bias, pooled, winner
        )
        logits = model.fc_weights @ pooled + model.fc_bias
        caches.append(ForwardCache(pooled, winner, logits, p))
    return caches


def forward(model: CnnModel, image: CodeImage | np.ndarray) -> ForwardCache:
    return _forward_prepared(model, [prepare(image, model)])[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    return z - np.log(np.exp(z).sum())


def _backward(
    model: CnnModel, caches: Sequence[ForwardCache], labels: Sequence[int], weights: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    heights, offsets = _layout(model)
    G = np.zeros((3 * model.dim, int(heights.sum()) * model.n_maps))
    d_bias = np.zeros(model.feature_length)
    d_fc_w = np.zeros_like(model.fc_weights)
    d_fc_b = np.zeros_like(model.fc_bias)
    total_w = float(np.sum(weights))
    loss = 0.0
    for cache, y, w in zip(caches, labels, weights):
        logp = _log_softmax(cache.logits)
        loss -= w * logp[y]
        dz = np.exp(logp)
        dz[y] -= 1.0
        dz *= w / total_w
        d_fc_w += np.outer(dz, cache.pooled)
        d_fc_b += dz
        dconv = (model.fc_weights.T @ dz) * (cache.pooled > 0)
        d_bias += dconv
        p = cache.prepared
        if p.n:
            kernels.scatter_filter_grads(
                p.X.astype(np.float64), p.n, heights, offsets, model.n_maps, cache.winner, dconv, G
            )
    grads = []
    for b, m in enumerate(model.heights):
        base = offsets[b]
        block = G[:, base:base + m * model.n_maps]
        grads.append(block.reshape(3, model.dim, m, model.n_maps).transpose(3, 0, 2, 1).copy())
        grads.append(d_bias[b * model.n_maps:(b + 1) * model.n_maps].copy())
    grads.extend([d_fc_w, d_fc_b])
    return loss / total_w, grads


def _label_index(label) -> int:
    if isinstance(label, str):
        return CLASS_NAMES.index(label)
    return int(label)


def loss_and_grad(
    model: CnnModel,
    batch: Sequence[tuple[CodeImage | np.ndarray, int | str]],
    class_weights: Sequence[float] | None = None,
) -> tuple[float, list[np.ndarray]]:
    """Mean cross-entropy over the batch and its gradient for every parameter."""
    if not batch:
        raise ValueError("empty batch")
    prepared = [prepare(img, model) for img, _ in batch]
    labels = [_label_index(y) for _, y in batch]
    caches = _forward_prepared(model, prepared)
    weights = np.ones(len(labels)) if class_weights is None else np.array([class_weights[y] for y in labels])
    return _backward(model, caches, labels, weights)


# -- optimizer ----------------------------------------------------------------------


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(model: CnnModel, grads: Sequence[np.ndarray], state: AdamState, lr: float = 0.001):
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(model.parameters(), grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return model, state


# -- training and inference -------------------------------------------------------------


def train(
    model: CnnModel,
    dataset: Sequence[CodeImage],
    config: TrainConfig | None = None,
    seed: int = 0,
) -> tuple[CnnModel, list[dict]]:
    """Mini-batch Adam training; returns the model and a per-epoch trace."""
    config = config or TrainConfig()
    prepared = [prepare(img, model) for img in dataset]
    labels = np.array([p.label for p in prepared])
    if len(prepared) == 0 or (labels < 0).any() or len(set(labels.tolist())) < 2:
        raise SingleClassDataset("training needs labelled samples of both classes")
    if config.class_weighting:
        counts = np.bincount(labels, minlength=N_CLASSES)
        class_w = len(labels) / (N_CLASSES * counts)
    else:
        class_w = np.ones(N_CLASSES)
    rng = np.random.default_rng(seed)
    state = AdamState.zeros_like(model.parameters())
    trace = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(prepared))
        total_loss = 0.0
        correct = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = [prepared[i] for i in idx]
            y = labels[idx]
            caches = _forward_prepared(model, batch)
            loss, grads = _backward(model, caches, y, class_w[y])
            total_loss += loss * len(idx)
            correct += sum(int(np.argmax(c.logits) == t) for c, t in zip(caches, y))
            adam_step(model, grads, state, config.learning_rate)
        trace.append({"epoch": epoch, "loss": total_loss / len(order), "train_acc": correct / len(order)})
    return model, trace


def predict(model: CnnModel, image: CodeImage | np.ndarray) -> tuple[str, float]:
    probs = softmax(forward(model, image).logits)
    cls = int(np.argmax(probs))
    return CLASS_NAMES[cls], float(probs[cls])


def predict_batch(model: CnnModel, images: Sequence[CodeImage], chunk: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Class indices and positive-class probabilities for many images."""
    W = _stacked_filters(model)
    classes, probs = [], []
    for start in range(0, len(images), chunk):
        prepared = [prepare(img, model) for img in images[start:start + chunk]]
        for cache in _forward_prepared(model, prepared, W):
            p = softmax(cache.logits)
            classes.append(int(np.argmax(p)))
            probs.append(float(p[1]))
    return np.array(classes, dtype=np.int64), np.array(probs)


# -- checkpoint ---------------------------------------------------------------------------


def serialize_model(model: CnnModel) -> bytes:
    """Header, then the filter heights, then float32 parameters in ``parameters()`` order."""
    header = _HEADER.pack(
        model.rows, model.dim, len(model.heights), model.n_maps,
        model.feature_length, N_CLASSES, model.seed & 0xFFFFFFFFFFFFFFFF,
    )
    heights = struct.pack(f"<{len(model.heights)}I", *model.heights)
    payload = b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in model.parameters())
    return MAGIC + header + heights + payload


def deserialize_model(data: bytes) -> CnnModel:
    if data[: len(MAGIC)] != MAGIC:
        raise BadMagic("not a model checkpoint")
    pos = len(MAGIC)
    if len(data) < pos + _HEADER.size:
        raise TruncatedFile("checkpoint header is truncated")
    rows, dim, n_banks, n_maps, fc_in, n_classes, seed = _HEADER.unpack_from(data, pos)
    pos += _HEADER.size
    if n_classes != N_CLASSES or fc_in != n_banks * n_maps:
        raise ShapeMismatch("inconsistent checkpoint header")
    if len(data) < pos + 4 * n_banks:
        raise TruncatedFile("checkpoint heights are truncated")
    heights = struct.unpack_from(f"<{n_banks}I", data, pos)
    pos += 4 * n_banks
    shapes = []
    for m in heights:
        shapes.extend([(n_maps, 3, m, dim), (n_maps,)])
    shapes.extend([(N_CLASSES, fc_in), (N_CLASSES,)])
    total = sum(int(np.prod(s)) for s in shapes)
    if len(data) - pos < 4 * total:
        raise TruncatedFile("checkpoint parameters are truncated")
    if len(data) - pos > 4 * total:
        raise ShapeMismatch("trailing bytes after checkpoint parameters")
    flat = np.frombuffer(data, dtype="<f4", count=total, offset=pos).astype(np.float64)
    params = []
    for s in shapes:
        size = int(np.prod(s))
        params.append(flat[:size].reshape(s).copy())
        flat = flat[size:]
    filters, biases = params[0:-2:2], params[1:-2:2]
    return CnnModel(filters, biases, params[-2], params[-1], rows, dim, seed, tuple(heights), n_maps)


def save_model(model: CnnModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_model(model))


def load_model(path) -> CnnModel:
    with open(path, "rb") as fh:
        return deserialize_model(fh.read())
