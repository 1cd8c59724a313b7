"""Binary checkpoint container.

Layout: magic "FTCK", format version (u32), a table of named float64
tensors, the effective run configuration as canonical text, and a trailing
CRC32 of all preceding bytes. All integers little-endian.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import CheckpointError

MAGIC = b"FTCK"
VERSION = 1
_DTYPE_F64 = 0


def write_checkpoint(path, tensors: dict[str, np.ndarray], config_text: str) -> None:
    """Serialize tensors (in dict order) plus the config echo."""
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(tensors))]
    for name, value in tensors.items():
        arr = np.ascontiguousarray(value, dtype="<f8")
        name_b = name.encode("utf-8")
        parts.append(struct.pack("<I", len(name_b)))
        parts.append(name_b)
        parts.append(struct.pack("<BI", _DTYPE_F64, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    config_b = config_text.encode("utf-8")
    parts.append(struct.pack("<Q", len(config_b)))
    parts.append(config_b)
    body = b"".join(parts)
    crc = zlib.crc32(body) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(body + struct.pack("<I", crc))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(
                f"checkpoint truncated: wanted {n} bytes at offset {self.pos}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def u8(self) -> int:
        return self.take(1)[0]


def read_checkpoint(path) -> tuple[dict[str, np.ndarray], str]:
    """Inverse of write_checkpoint; verifies the CRC before parsing."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4:
        raise CheckpointError("checkpoint truncated: no trailing checksum")
    body, crc_bytes = data[:-4], data[-4:]
    (crc_stored,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise CheckpointError("checkpoint checksum mismatch")

    r = _Reader(body)
    if r.take(4) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    n_entries = r.u32()
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_entries):
        name = r.take(r.u32()).decode("utf-8")
        dtype_tag = r.u8()
        if dtype_tag != _DTYPE_F64:
            raise CheckpointError(f"tensor {name!r}: unsupported dtype tag {dtype_tag}")
        ndim = r.u32()
        shape = struct.unpack(f"<{ndim}Q", r.take(8 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(r.take(8 * size), dtype="<f8").reshape(shape)
        tensors[name] = arr.astype(np.float64)
    config_text = r.take(r.u64()).decode("utf-8")
    if r.pos != len(body):
        raise CheckpointError(f"{len(body) - r.pos} trailing bytes after config")
    return tensors, config_text
