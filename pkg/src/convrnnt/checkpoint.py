"""Single-file binary checkpoints.

Layout (little-endian):

    magic 'CVRT' | u16 version | u16 reserved | 32-byte architecture hash |
    u64 step | u32 n_records |
    records: [u16 name_len][name utf-8][u8 ndim][u32 dim...][f64 data...] |
    u32 rng_len | rng state as canonical JSON

Save -> load -> save is byte-identical: float64 payloads round-trip exactly
and record order is preserved.  Loading against a different architecture
hash fails loudly.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ConfigError, DataError

MAGIC = b"CVRT"
VERSION = 1


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def save_checkpoint(path, arch_hash: bytes, step: int, named_arrays, rng_state) -> None:
    if len(arch_hash) != 32:
        raise ConfigError("architecture hash must be 32 bytes")
    named_arrays = list(named_arrays)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HH", VERSION, 0))
        f.write(arch_hash)
        f.write(struct.pack("<Q", step))
        f.write(struct.pack("<I", len(named_arrays)))
        for name, arr in named_arrays:
            arr = np.ascontiguousarray(arr, dtype="<f8")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
            f.write(arr.tobytes())
        rng_blob = _canonical_json(_jsonable(rng_state))
        f.write(struct.pack("<I", len(rng_blob)))
        f.write(rng_blob)


def load_checkpoint(path, expected_hash: bytes | None = None):
    """Returns (step, {name: array}, rng_state_dict)."""
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise DataError(f"{path}: not a checkpoint file")
        version, _ = struct.unpack("<HH", f.read(4))
        if version != VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        arch_hash = f.read(32)
        if expected_hash is not None and arch_hash != expected_hash:
            raise ConfigError(
                f"{path}: checkpoint was written for a different architecture "
                f"(config hash mismatch)"
            )
        (step,) = struct.unpack("<Q", f.read(8))
        (n_records,) = struct.unpack("<I", f.read(4))
        arrays = {}
        for _ in range(n_records):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = tuple(struct.unpack("<I", f.read(4))[0] for _ in range(ndim))
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(f.read(8 * count), dtype="<f8").reshape(shape)
            arrays[name] = data.copy()
        (rng_len,) = struct.unpack("<I", f.read(4))
        rng_state = json.loads(f.read(rng_len).decode("utf-8"))
    return step, arrays, rng_state
