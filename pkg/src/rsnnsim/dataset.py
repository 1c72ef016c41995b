"""IDX dataset ingestion (MNIST-style image/label file pairs).

Both files are big-endian: images carry magic 2051 and a (count, rows,
cols) header followed by raw u8 pixels; labels carry magic 2049 and a
count followed by raw u8 labels.  Pixels are scaled to [0, 1] by 255.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (N, H, W) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64

    def __len__(self) -> int:
        return len(self.labels)


def _read_header(data: bytes, n_fields: int, path) -> tuple[tuple[int, ...], bytes]:
    need = 4 * n_fields
    if len(data) < need:
        raise DataFormatError(f"{path}: truncated IDX header")
    return struct.unpack(f">{n_fields}i", data[:need]), data[need:]


def ingest_idx(images_path: str | Path, labels_path: str | Path,
               pad_to_32: bool = False) -> Dataset:
    img_data = Path(images_path).read_bytes()
    (magic, count, rows, cols), body = _read_header(img_data, 4, images_path)
    if magic != IMAGE_MAGIC:
        raise DataFormatError(f"{images_path}: image magic {magic}, expected {IMAGE_MAGIC}")
    if count < 0 or rows < 1 or cols < 1:
        raise DataFormatError(f"{images_path}: bad header ({count}, {rows}, {cols})")
    if len(body) != count * rows * cols:
        raise DataFormatError(
            f"{images_path}: {len(body)} pixel bytes, expected {count * rows * cols}"
        )
    images = np.frombuffer(body, dtype=np.uint8).reshape(count, rows, cols)

    lbl_data = Path(labels_path).read_bytes()
    (lmagic, lcount), lbody = _read_header(lbl_data, 2, labels_path)
    if lmagic != LABEL_MAGIC:
        raise DataFormatError(f"{labels_path}: label magic {lmagic}, expected {LABEL_MAGIC}")
    if len(lbody) != lcount:
        raise DataFormatError(f"{labels_path}: {len(lbody)} label bytes, expected {lcount}")
    if lcount != count:
        raise DataFormatError(f"label count {lcount} does not match image count {count}")
    labels = np.frombuffer(lbody, dtype=np.uint8).astype(np.int64)

    scaled = images.astype(np.float64) / 255.0
    if pad_to_32:
        if rows > 32 or cols > 32:
            raise DataFormatError(f"cannot pad {rows}x{cols} images to 32x32")
        pr, pc = 32 - rows, 32 - cols
        scaled = np.pad(scaled, ((0, 0), (pr // 2, pr - pr // 2), (pc // 2, pc - pc // 2)))
    return Dataset(images=scaled, labels=labels)


def write_idx(images: np.ndarray, labels: np.ndarray,
              images_path: str | Path, labels_path: str | Path):
    """Write u8 images (N, H, W) and labels (N,) as an IDX file pair."""
    n, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4i", IMAGE_MAGIC, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2i", LABEL_MAGIC, n))
        f.write(labels.astype(np.uint8).tobytes())
