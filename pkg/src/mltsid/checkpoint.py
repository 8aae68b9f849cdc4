"""Checkpoint container: named parameter tensors on disk.

Byte layout (little-endian throughout):

    offset 0   magic  b"MLCK"
    offset 4   u32    format version (currently 1)
    offset 8   u32    header length in bytes
    offset 12  header UTF-8 JSON (sorted keys, no whitespace):
               {"config_hash": "<hex>",
                "params": [{"dtype": "<f4"|"<f8",
                            "name": "...",
                            "shape": [...]}, ...]}
    then       raw C-order array bytes, concatenated in params order

The header's param order is the network's parameter order, so identical
parameters always serialize to identical bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .autodiff import Parameter
from .errors import CheckpointError, CheckpointHashError

MAGIC = b"MLCK"
FORMAT_VERSION = 1

_DTYPE_TAGS = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def _dtype_tag(dtype) -> str:
    tag = {np.dtype(np.float32): "<f4", np.dtype(np.float64): "<f8"}.get(np.dtype(dtype))
    if tag is None:
        raise CheckpointError(f"unsupported parameter dtype {dtype}")
    return tag


def serialize_params(params, config_hash: str) -> bytes:
    """Serialize parameters to the checkpoint byte format."""
    entries = []
    blobs = []
    for p in params:
        entries.append(
            {
                "dtype": _dtype_tag(p.data.dtype),
                "name": p.name,
                "shape": list(p.data.shape),
            }
        )
        blobs.append(np.ascontiguousarray(p.data).tobytes())
    header = json.dumps(
        {"config_hash": config_hash, "params": entries},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", FORMAT_VERSION, len(header))
    out += header
    for blob in blobs:
        out += blob
    return bytes(out)


def save_checkpoint(path, params, config_hash: str) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_params(params, config_hash))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], str]:
    """Read a checkpoint into {name: array} plus its config hash."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic; not a checkpoint file")
    version, header_len = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    try:
        header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})")
    offset = 12 + header_len
    arrays: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        dtype = _DTYPE_TAGS.get(entry["dtype"])
        if dtype is None:
            raise CheckpointError(f"{path}: unknown dtype tag {entry['dtype']!r}")
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated parameter data")
        name = entry["name"]
        if name in arrays:
            raise CheckpointError(f"{path}: duplicate parameter name {name!r}")
        arrays[name] = np.frombuffer(
            raw, dtype=dtype, count=count, offset=offset
        ).reshape(shape).copy()
        offset += nbytes
    return arrays, header["config_hash"]


def load_into(path, params, expected_hash: str | None = None) -> str:
    """Load checkpoint values into existing parameters, by name.

    Verifies shapes, completeness, and (when given) the config hash.
    Returns the checkpoint's config hash.
    """
    arrays, config_hash = load_checkpoint(path)
    if expected_hash is not None and config_hash != expected_hash:
        raise CheckpointHashError(
            f"{path}: checkpoint was produced under config {config_hash[:12]}..., "
            f"current config is {expected_hash[:12]}..."
        )
    params = list(params)
    names = {p.name for p in params}
    missing = names - arrays.keys()
    extra = arrays.keys() - names
    if missing or extra:
        raise CheckpointError(
            f"{path}: parameter set mismatch "
            f"(missing {sorted(missing)}, unexpected {sorted(extra)})"
        )
    for p in params:
        value = arrays[p.name]
        if value.shape != p.data.shape:
            raise CheckpointError(
                f"{path}: shape mismatch for {p.name!r}: "
                f"{value.shape} vs expected {p.data.shape}"
            )
        p.data = value.astype(p.data.dtype, copy=True)
    return config_hash
