"""Three-channel code images, the row-continuity gap, and the image file format.

File layout (little-endian)::

    b"VMCIMG1" | k:u32 | rows:u32 | dim:u32 | label:u8 | id_len:u32 | id bytes
    | float32 payload, shape (3, rows, dim), channel-major then row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .embed import DIM
from .errors import BadMagic, ShapeMismatch, TruncatedFile
from .ingest import SAFE, UNLABELED, VULNERABLE
from .oversample import Row

MAGIC = b"VMCIMG1"
BASE_ROWS = 100
CHANNELS = ("degree", "katz", "closeness")
_LABEL_BYTES = {SAFE: 0, VULNERABLE: 1, UNLABELED: 255}
_BYTE_LABELS = {v: k for k, v in _LABEL_BYTES.items()}
_HEADER = struct.Struct("<IIIBI")


@dataclass(frozen=True, eq=False)
class CodeImage:
    channels: np.ndarray = field(repr=False)  # float32, (3, rows, dim)
    k: int
    sample_id: str = ""
    label: str = UNLABELED

    @property
    def rows(self) -> int:
        return self.channels.shape[1]

    @property
    def populated_rows(self) -> int:
        """Index one past the last row that is non-zero in any channel.

        Trailing all-zero rows are indistinguishable from padding and are
        treated as such.
        """
        nz = np.flatnonzero(np.any(self.channels != 0, axis=(0, 2)))
        return int(nz[-1]) + 1 if nz.size else 0

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, CodeImage)
            and self.k == other.k
            and self.sample_id == other.sample_id
            and self.label == other.label
            and self.channels.shape == other.channels.shape
            and self.channels.tobytes() == other.channels.tobytes()
        )


def row_threshold(k: int, base_rows: int = BASE_ROWS) -> int:
    return base_rows * k


def build_image(
    rows: Sequence[Row],
    k: int,
    *,
    sample_id: str = "",
    label: str = UNLABELED,
    base_rows: int = BASE_ROWS,
    dim: int = DIM,
) -> CodeImage:
    """Scale each row's vector by its three centralities; pad or truncate."""
    R = row_threshold(k, base_rows)
    channels = np.zeros((3, R, dim), dtype=np.float32)
    used = rows[:R]
    if used:
        vecs = np.stack([np.asarray(r.vector, dtype=np.float64) for r in used])
        cens = np.array([[r.centrality.degree, r.centrality.katz, r.centrality.closeness] for r in used])
        channels[:, : len(used), :] = (cens.T[:, :, None] * vecs[None, :, :]).astype(np.float32)
    return CodeImage(channels, k, sample_id, label)


def continuity_gap(image: CodeImage) -> np.ndarray:
    """Per channel (mean_gap, max_gap) over adjacent populated row pairs.

    The gap of a pair is the largest absolute element difference.
    """
    p = image.populated_rows
    if p < 2:
        return np.zeros((3, 2))
    data = image.channels[:, :p, :].astype(np.float64)
    gaps = np.abs(np.diff(data, axis=1)).max(axis=2)  # (3, p - 1)
    return np.stack([gaps.mean(axis=1), gaps.max(axis=1)], axis=1)


def serialize_image(image: CodeImage) -> bytes:
    _, rows, dim = image.channels.shape
    raw_id = image.sample_id.encode("utf-8")
    header = _HEADER.pack(image.k, rows, dim, _LABEL_BYTES[image.label], len(raw_id))
    payload = np.ascontiguousarray(image.channels, dtype="<f4").tobytes()
    return MAGIC + header + raw_id + payload


def deserialize_image(data: bytes) -> CodeImage:
    if data[: len(MAGIC)] != MAGIC:
        raise BadMagic("not a code image file")
    pos = len(MAGIC)
    if len(data) < pos + _HEADER.size:
        raise TruncatedFile("image header is truncated")
    k, rows, dim, label_byte, id_len = _HEADER.unpack_from(data, pos)
    pos += _HEADER.size
    if k < 1 or rows < 1 or dim < 1 or rows % k:
        raise ShapeMismatch(f"invalid header shape k={k} rows={rows} dim={dim}")
    if label_byte not in _BYTE_LABELS:
        raise ShapeMismatch(f"unknown label byte {label_byte}")
    if len(data) < pos + id_len:
        raise TruncatedFile("image id is truncated")
    sample_id = data[pos:pos + id_len].decode("utf-8")
    pos += id_len
    expected = 3 * rows * dim * 4
    remaining = len(data) - pos
    if remaining < expected:
        raise TruncatedFile(f"payload has {remaining} bytes, expected {expected}")
    if remaining > expected:
        raise ShapeMismatch(f"payload has {remaining - expected} trailing bytes")
    channels = np.frombuffer(data, dtype="<f4", count=3 * rows * dim, offset=pos)
    channels = channels.reshape(3, rows, dim).astype(np.float32)
    return CodeImage(channels, k, sample_id, _BYTE_LABELS[label_byte])


def save_image(image: CodeImage, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_image(image))


def load_image(path) -> CodeImage:
    with open(path, "rb") as fh:
        return deserialize_image(fh.read())
