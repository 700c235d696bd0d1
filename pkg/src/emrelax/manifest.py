"""Result manifests and the versioned binary snapshot format.

A manifest ties (tool version, canonical config hash, seed) to the checksums
of every file a command wrote; identical inputs must reproduce identical
checksums.  Snapshots use a small self-describing binary layout:

    magic 'EMRXSNP1' | u32 version | u32 n_fields, then per field:
    16-byte padded name | u8 dtype(0=f64) | u8 ncomp | u8 dim | u8 pad |
    3 x u32 dims | f64 time | raw C-order float64 payload.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

__all__ = ["sha256_file", "write_manifest", "write_snapshot", "read_snapshot"]

MAGIC = b"EMRXSNP1"
VERSION = 1


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, version: str, config_sha256: str, seed, files) -> Path:
    """Write manifest.json listing every output file with its checksum."""
    out_dir = Path(out_dir)
    entries = [
        {"path": str(Path(f).relative_to(out_dir)), "sha256": sha256_file(f)}
        for f in sorted(map(str, files))
    ]
    doc = {
        "tool": "emrelax",
        "version": version,
        "command": command,
        "config_sha256": config_sha256,
        "seed": seed,
        "files": entries,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def write_snapshot(path, time: float, fields: dict) -> None:
    """Serialize named float64 arrays (scalar or (3, ...) vectors)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(fields)))
        for name, arr in fields.items():
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            ncomp, dims = (arr.shape[0], arr.shape[1:]) if arr.ndim > 1 and arr.shape[0] == 3 else (1, arr.shape)
            if len(dims) > 3:
                raise ValueError(f"field {name!r} has too many spatial dims")
            padded_dims = tuple(dims) + (1,) * (3 - len(dims))
            fh.write(struct.pack("<16s", name.encode()[:16].ljust(16, b"\0")))
            fh.write(struct.pack("<BBBB", 0, ncomp, len(dims), 0))
            fh.write(struct.pack("<III", *padded_dims))
            fh.write(struct.pack("<d", time))
            fh.write(arr.tobytes())


def read_snapshot(path) -> tuple[float, dict]:
    """Inverse of :func:`write_snapshot`; returns (time, fields)."""
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{path}: not a snapshot file")
        version, n_fields = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        time = 0.0
        fields = {}
        for _ in range(n_fields):
            (raw_name,) = struct.unpack("<16s", fh.read(16))
            name = raw_name.rstrip(b"\0").decode()
            dtype_code, ncomp, dim, _pad = struct.unpack("<BBBB", fh.read(4))
            if dtype_code != 0:
                raise ValueError(f"{path}: unknown dtype code {dtype_code}")
            dims = struct.unpack("<III", fh.read(12))[:dim]
            (time,) = struct.unpack("<d", fh.read(8))
            count = int(np.prod(dims)) * ncomp
            arr = np.frombuffer(fh.read(count * 8), dtype=np.float64)
            shape = (ncomp,) + dims if ncomp > 1 else dims
            fields[name] = arr.reshape(shape).copy()
    return time, fields
