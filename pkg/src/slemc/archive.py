"""Binary path archive, the on-disk interchange format for sampled paths.

Layout (all integers and floats little-endian):

    magic          4 bytes  b"SLEP"
    version        u32
    path count     u64
    per path:
        dt             f64
        sample count   u64
        complex flag   u8   (0 real / 1 complex)
        terminal flag  u8   (0 absent / 1 present)
        [terminal]     f64, or f64 re + f64 im when complex
        samples        count * f64, or count * (f64 re + f64 im)

A finite lifetime is reconstructed as count*dt when the terminal flag is
set (the format does not carry the exact off-grid lifetime), otherwise
the path is an infinite-lifetime path truncated at count*dt.
"""

from __future__ import annotations

import math
import struct
from typing import BinaryIO, Iterable

import numpy as np

from .pathspace import SampledPath

MAGIC = b"SLEP"
VERSION = 1


class ArchiveFormatError(Exception):
    pass


def write_paths(fh: BinaryIO, paths: Iterable[SampledPath]) -> None:
    paths = list(paths)
    fh.write(MAGIC)
    fh.write(struct.pack("<I", VERSION))
    fh.write(struct.pack("<Q", len(paths)))
    for p in paths:
        is_complex = p.is_complex
        fh.write(struct.pack("<d", p.dt))
        fh.write(struct.pack("<Q", p.n))
        fh.write(struct.pack("<B", 1 if is_complex else 0))
        if p.terminal_limit is not None:
            fh.write(struct.pack("<B", 1))
            if is_complex:
                tl = complex(p.terminal_limit)
                fh.write(struct.pack("<dd", tl.real, tl.imag))
            else:
                fh.write(struct.pack("<d", float(p.terminal_limit)))
        else:
            fh.write(struct.pack("<B", 0))
        if is_complex:
            flat = np.empty(2 * p.n, dtype="<f8")
            flat[0::2] = p.values.real
            flat[1::2] = p.values.imag
            fh.write(flat.tobytes())
        else:
            fh.write(np.ascontiguousarray(p.values, dtype="<f8").tobytes())


def save_paths(path: str, paths: Iterable[SampledPath]) -> None:
    with open(path, "wb") as fh:
        write_paths(fh, paths)


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise ArchiveFormatError("truncated archive")
    return buf


def read_paths(fh: BinaryIO) -> list[SampledPath]:
    if _read_exact(fh, 4) != MAGIC:
        raise ArchiveFormatError("bad magic bytes (not a path archive)")
    (version,) = struct.unpack("<I", _read_exact(fh, 4))
    if version != VERSION:
        raise ArchiveFormatError(f"unsupported archive version {version}")
    (count,) = struct.unpack("<Q", _read_exact(fh, 8))
    out = []
    for _ in range(count):
        (dt,) = struct.unpack("<d", _read_exact(fh, 8))
        (n,) = struct.unpack("<Q", _read_exact(fh, 8))
        (cflag,) = struct.unpack("<B", _read_exact(fh, 1))
        (tflag,) = struct.unpack("<B", _read_exact(fh, 1))
        terminal = None
        if tflag:
            if cflag:
                re, im = struct.unpack("<dd", _read_exact(fh, 16))
                terminal = complex(re, im)
            else:
                (terminal,) = struct.unpack("<d", _read_exact(fh, 8))
        if cflag:
            flat = np.frombuffer(_read_exact(fh, 16 * n), dtype="<f8")
            values = flat[0::2] + 1j * flat[1::2]
        else:
            values = np.frombuffer(_read_exact(fh, 8 * n), dtype="<f8").copy()
        lifetime = n * dt if tflag else math.inf
        out.append(SampledPath(dt, values, lifetime=lifetime, terminal_limit=terminal))
    return out


def load_paths(path: str) -> list[SampledPath]:
    with open(path, "rb") as fh:
        return read_paths(fh)


def archive_info(path: str) -> dict:
    """Summary of an archive without keeping all samples in memory."""
    paths = load_paths(path)
    return {
        "path_count": len(paths),
        "complex": [p.is_complex for p in paths].count(True),
        "finite_lifetime": sum(1 for p in paths if not p.truncated),
        "dt": sorted({p.dt for p in paths}),
        "total_samples": int(sum(p.n for p in paths)),
    }
