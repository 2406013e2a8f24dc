"""MNIST reader for the IDX file format, gzipped or raw.

Images: big-endian u32 magic 0x00000803, count, rows, cols, then one
unsigned byte per pixel. Labels: magic 0x00000801, count, one byte each.
"""

import gzip
import logging
import os
import struct
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from vfl_shield.data.dataset import Dataset
from vfl_shield.errors import FormatError

logger = logging.getLogger(__name__)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
GZIP_MAGIC = b"\x1f\x8b"

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}

PathLike = Union[str, Path]


def _read_bytes(path: PathLike) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == GZIP_MAGIC:
        return gzip.decompress(raw)
    return raw


def _unpack_header(blob: bytes, fmt: str, magic: int, what: str) -> Tuple[int, ...]:
    size = struct.calcsize(fmt)
    if len(blob) < size:
        raise FormatError(f"truncated {what} header", len(blob))
    fields = struct.unpack(fmt, blob[:size])
    if fields[0] != magic:
        raise FormatError(
            f"bad {what} magic {fields[0]:#010x}, expected {magic:#010x}", 0
        )
    return fields[1:]


def parse_idx_images(blob: bytes) -> np.ndarray:
    """Decode an IDX3 image file into a uint8 array [n, rows, cols]."""
    count, rows, cols = _unpack_header(blob, ">IIII", IMAGE_MAGIC, "image")
    need = 16 + count * rows * cols
    if len(blob) < need:
        raise FormatError(
            f"truncated image data: {count} images of {rows}x{cols} need {need} bytes",
            len(blob),
        )
    pixels = np.frombuffer(blob, dtype=np.uint8, count=count * rows * cols, offset=16)
    return pixels.reshape(count, rows, cols)


def parse_idx_labels(blob: bytes) -> np.ndarray:
    """Decode an IDX1 label file into a uint8 array [n]."""
    (count,) = _unpack_header(blob, ">II", LABEL_MAGIC, "label")
    if len(blob) < 8 + count:
        raise FormatError(f"truncated label data: {count} labels", len(blob))
    return np.frombuffer(blob, dtype=np.uint8, count=count, offset=8)


def load_mnist(
    image_file: PathLike, label_file: PathLike, split: str = "train"
) -> Dataset:
    """Load an image/label file pair; pixels are scaled by 1/255.

    Raises:
        FormatError: On bad magic, truncation (with the offset) or a count
            mismatch between the two files.
    """
    images = parse_idx_images(_read_bytes(image_file))
    labels = parse_idx_labels(_read_bytes(label_file))
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"{images.shape[0]} images but {labels.shape[0]} labels", 4
        )
    n, rows, cols = images.shape
    logger.info(
        "loaded %d %s images of %dx%d from %s", n, split, rows, cols, image_file
    )
    return Dataset(
        features=images.reshape(n, rows * cols).astype(np.float64) / 255.0,
        labels=labels.astype(np.int64),
        num_classes=10,
        split=split,
        image_shape=(rows, cols),
    )


def find_mnist_files(data_dir: PathLike, split: str) -> Optional[Tuple[Path, Path]]:
    """Locate the standard file pair for a split, gzipped or not."""
    data_dir = Path(data_dir)
    found = []
    for stem in MNIST_FILES[split]:
        dotted = stem.replace("-idx", ".idx")
        names = (stem, f"{stem}.gz", dotted, f"{dotted}.gz")
        candidates = [data_dir / name for name in names]
        match = next((c for c in candidates if c.exists()), None)
        if match is None:
            return None
        found.append(match)
    return found[0], found[1]


def load_mnist_split(split: str, data_dir: Optional[PathLike] = None) -> Dataset:
    """Load a standard split from ``data_dir`` or ``VFL_SHIELD_DATA_DIR``.

    Raises:
        FileNotFoundError: If the files cannot be found.
    """
    data_dir = data_dir or os.getenv("VFL_SHIELD_DATA_DIR", "data/mnist")
    files = find_mnist_files(data_dir, split)
    if files is None:
        raise FileNotFoundError(f"MNIST {split} files not found in {data_dir}")
    return load_mnist(files[0], files[1], split)
