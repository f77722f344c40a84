"""Reader and writer for the big-endian IDX container used by MNIST-style datasets."""
import gzip
import hashlib
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagic, CountMismatch, DatasetMissing, TruncatedFile

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
_GZIP_HEADER = b"\x1f\x8b"


def _read_bytes(path):
    if not os.path.exists(path):
        raise DatasetMissing(f"no such file: {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == _GZIP_HEADER:
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise TruncatedFile(f"{path}: corrupt gzip stream ({exc})") from exc
    return raw


def parse_idx(raw, expected_magic=None):
    """Decode an unsigned-byte IDX payload into a uint8 array."""
    if len(raw) < 4:
        raise TruncatedFile("missing magic number")
    (magic,) = struct.unpack(">I", raw[:4])
    if expected_magic is not None and magic != expected_magic:
        raise BadMagic(f"magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    if magic >> 8 != 0x08:
        raise BadMagic(f"magic 0x{magic:08x} is not an unsigned-byte IDX file")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise TruncatedFile("header shorter than its dimension count")
    dims = struct.unpack(f">{ndim}I", raw[4:head])
    size = int(np.prod(dims, dtype=np.int64))
    if len(raw) - head < size:
        raise TruncatedFile(f"expected {size} data bytes, found {len(raw) - head}")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=head).reshape(dims)


def write_idx(arr):
    """Encode a uint8 array as IDX bytes (uncompressed)."""
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise ValueError("only unsigned-byte arrays are supported")
    magic = 0x0800 | arr.ndim
    return struct.pack(f">I{arr.ndim}I", magic, *arr.shape) + arr.tobytes()


@dataclass
class IdxDataset:
    images: np.ndarray    # (N, rows, cols) floats in [0, 1]
    labels: np.ndarray    # (N,) int64
    n_classes: int
    checksum: str         # sha256 over both files as read from disk

    @property
    def n(self):
        return self.images.shape[0]

    @property
    def one_hot(self):
        out = np.zeros((self.n, self.n_classes))
        out[np.arange(self.n), self.labels] = 1.0
        return out

    def flat(self):
        return self.images.reshape(self.n, -1)


def _sha256(*paths):
    digest = hashlib.sha256()
    for p in paths:
        with open(p, "rb") as fh:
            digest.update(fh.read())
    return digest.hexdigest()


def read_idx(image_path, label_path, limit=None, n_classes=10):
    """Load an image/label file pair, optionally keeping only the first ``limit`` samples.

    Gzip-compressed files are detected from their header.
    """
    images = parse_idx(_read_bytes(image_path), IMAGE_MAGIC)
    labels = parse_idx(_read_bytes(label_path), LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if limit is not None:
        if limit < 1:
            raise ValueError("limit must be positive")
        images = images[:limit]
        labels = labels[:limit]
    labels = labels.astype(np.int64)
    if labels.size and labels.max() >= n_classes:
        raise CountMismatch(f"label {labels.max()} out of range for {n_classes} classes")
    return IdxDataset(
        images=images.astype(float) / 255.0,
        labels=labels,
        n_classes=n_classes,
        checksum=_sha256(image_path, label_path),
    )
