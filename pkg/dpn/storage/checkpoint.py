"""
Binary checkpoint container.

Layout (little-endian):

    magic "DPNCKPT\\0" | u32 version | u32 header length | JSON header
    u32 record count
    per record: u16 name length | name | u8 ndim | u32 dims... |
                u8 dtype code (1 = f32, 2 = f64) | u64 byte length | raw data

The header carries the model config, the vocabularies and training
metadata. Arrays are written at their own dtype so a save/load round trip is
bit-exact.
"""

import io
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO, Dict, Optional

import numpy as np

from dpn.errors import CheckpointError, CheckpointVersionError

logger = logging.getLogger(__name__)

MAGIC = b"DPNCKPT\x00"
FORMAT_VERSION = 1
DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
CODE_DTYPES = {code: dtype for dtype, code in DTYPE_CODES.items()}


@dataclass
class Checkpoint:
    header: Dict[str, Any]
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)

    def params(self) -> Dict[str, np.ndarray]:
        return {k: v for k, v in self.arrays.items() if not k.startswith("optim.")}

    def velocities(self) -> Dict[str, np.ndarray]:
        prefix = "optim.velocity."
        return {k[len(prefix):]: v for k, v in self.arrays.items() if k.startswith(prefix)}


def _read_exact(stream: BinaryIO, n: int, what: str) -> bytes:
    data = stream.read(n)
    if len(data) != n:
        raise CheckpointError(f"Truncated checkpoint while reading {what}: wanted {n} bytes, got {len(data)}")
    return data


def _unpack(stream: BinaryIO, fmt: str, what: str):
    return struct.unpack(fmt, _read_exact(stream, struct.calcsize(fmt), what))


def write_checkpoint(stream: BinaryIO, checkpoint: Checkpoint):
    header = json.dumps(checkpoint.header, sort_keys=True).encode("utf-8")
    stream.write(MAGIC)
    stream.write(struct.pack("<II", FORMAT_VERSION, len(header)))
    stream.write(header)
    stream.write(struct.pack("<I", len(checkpoint.arrays)))
    for name, array in checkpoint.arrays.items():
        dtype = array.dtype.newbyteorder("<")
        if dtype not in DTYPE_CODES:
            raise CheckpointError(f"Unsupported dtype {array.dtype} for {name}")
        encoded = name.encode("utf-8")
        data = np.ascontiguousarray(array, dtype=dtype).tobytes()
        stream.write(struct.pack("<H", len(encoded)))
        stream.write(encoded)
        stream.write(struct.pack("<B", array.ndim))
        stream.write(struct.pack(f"<{array.ndim}I", *array.shape))
        stream.write(struct.pack("<BQ", DTYPE_CODES[dtype], len(data)))
        stream.write(data)


def read_checkpoint(stream: BinaryIO) -> Checkpoint:
    magic = _read_exact(stream, len(MAGIC), "magic")
    if magic != MAGIC:
        raise CheckpointError(f"Not a checkpoint file (magic {magic!r})")
    version, header_len = _unpack(stream, "<II", "version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"Checkpoint format version {version} is not supported (expected {FORMAT_VERSION})"
        )
    try:
        header = json.loads(_read_exact(stream, header_len, "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Corrupt checkpoint header: {e}") from e

    (count,) = _unpack(stream, "<I", "record count")
    arrays: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = _unpack(stream, "<H", "name length")
        name = _read_exact(stream, name_len, "name").decode("utf-8")
        (ndim,) = _unpack(stream, "<B", f"{name} ndim")
        shape = _unpack(stream, f"<{ndim}I", f"{name} dims")
        code, nbytes = _unpack(stream, "<BQ", f"{name} dtype")
        if code not in CODE_DTYPES:
            raise CheckpointError(f"Unknown dtype code {code} for {name}")
        dtype = CODE_DTYPES[code]
        expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if nbytes != expected:
            raise CheckpointError(f"{name}: {nbytes} data bytes for shape {shape} (expected {expected})")
        raw = _read_exact(stream, nbytes, f"{name} data")
        arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    return Checkpoint(header=header, arrays=arrays)


def save_checkpoint(path, checkpoint: Checkpoint):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buffer = io.BytesIO()
    write_checkpoint(buffer, checkpoint)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        tmp.write_bytes(buffer.getvalue())
        os.replace(tmp, path)
    except OSError as e:
        raise CheckpointError(f"Could not write checkpoint {path}: {e}") from e
    logger.info(f"Saved checkpoint {path} ({len(checkpoint.arrays)} arrays)")


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        with path.open("rb") as f:
            return read_checkpoint(f)
    except OSError as e:
        raise CheckpointError(f"Could not read checkpoint {path}: {e}") from e


class CheckpointStore:
    """`last.ckpt` / `best.ckpt` under a run's checkpoints directory."""

    def __init__(self, directory):
        self.directory = Path(directory)

    @property
    def last_path(self) -> Path:
        return self.directory / "last.ckpt"

    @property
    def best_path(self) -> Path:
        return self.directory / "best.ckpt"

    def save(self, checkpoint: Checkpoint, best: bool = False):
        save_checkpoint(self.last_path, checkpoint)
        if best:
            save_checkpoint(self.best_path, checkpoint)

    def latest(self) -> Optional[Checkpoint]:
        return load_checkpoint(self.last_path) if self.last_path.exists() else None
