"""Little-endian named-block binary files.

Layout: 8-byte magic (kind tag padded with NULs), ``u32`` block count, then
per block ``u16`` name length, UTF-8 name, ``u8`` type code, ``u8`` rank,
``rank x u64`` dims and the row-major payload. Text blocks hold UTF-8 bytes.
Block order is preserved, so identical inputs produce identical bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import IncompleteBundle, InvalidConfig

MAGICS = ("ROMF1", "ROMB1", "ROMS1", "ROMT1", "ROMR1")
_TYPES = {1: np.dtype("<f8"), 2: np.dtype("<i8"), 3: np.dtype("u1")}
_CODES = {"f": 1, "i": 2, "u": 2, "b": 2}


def _magic(kind: str) -> bytes:
    if kind not in MAGICS:
        raise InvalidConfig(f"unknown binary kind {kind!r}")
    return kind.encode().ljust(8, b"\0")


def write_blocks(path: str | Path, kind: str, blocks: dict) -> None:
    """Write ``{name: ndarray | str | number}`` as one file."""
    out = [_magic(kind), struct.pack("<I", len(blocks))]
    for name, value in blocks.items():
        if isinstance(value, str):
            code, arr = 3, np.frombuffer(value.encode(), dtype="u1")
        else:
            arr = np.asarray(value)
            if arr.dtype.kind not in _CODES:
                raise InvalidConfig(f"block {name!r} has unsupported dtype {arr.dtype}")
            code = _CODES[arr.dtype.kind]
            arr = arr.astype(_TYPES[code], copy=False)
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)) + nb + struct.pack("<BB", code, arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(np.ascontiguousarray(arr).tobytes())
    Path(path).write_bytes(b"".join(out))


def read_blocks(path: str | Path, kind: str) -> dict:
    path = Path(path)
    if not path.is_file():
        raise IncompleteBundle(f"missing artifact {path.name}", path=str(path))
    data = path.read_bytes()
    if data[:8] != _magic(kind):
        raise IncompleteBundle(f"{path.name} is not a {kind} file", path=str(path))
    (count,) = struct.unpack_from("<I", data, 8)
    pos, blocks = 12, {}
    try:
        for _ in range(count):
            (ln,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + ln].decode()
            pos += ln
            code, rank = struct.unpack_from("<BB", data, pos)
            pos += 2
            shape = struct.unpack_from(f"<{rank}Q", data, pos)
            pos += 8 * rank
            dt = _TYPES[code]
            size = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
            if pos + size > len(data):
                raise ValueError("truncated payload")
            arr = np.frombuffer(data, dtype=dt, count=size // dt.itemsize, offset=pos).reshape(shape).copy()
            pos += size
            blocks[name] = arr.tobytes().decode() if code == 3 else arr
    except (struct.error, ValueError, KeyError) as exc:
        raise IncompleteBundle(f"{path.name} is truncated or corrupt: {exc}", path=str(path)) from exc
    return blocks
