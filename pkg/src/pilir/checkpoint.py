"""Binary checkpoint format.

Layout::

    b"PILIRCKP"                      8 bytes magic
    version                          u32, little-endian
    manifest length                  u64, little-endian
    manifest                         UTF-8 JSON text
    payload                          little-endian float64 tensors

The manifest lists every tensor with ``name``, ``shape``, ``offset`` and
``nbytes`` (offsets relative to the payload start, in manifest order and
non-overlapping) plus the model configuration and any run metadata, so a
checkpoint can be evaluated without its experiment config.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .networks import from_config

MAGIC = b"PILIRCKP"
VERSION = 1


class CheckpointError(ValueError):
    """Malformed checkpoint or a checkpoint that does not fit the requested model."""


def to_bytes(model, meta: dict | None = None) -> bytes:
    tensors = []
    chunks = []
    offset = 0
    for p in model.parameters():
        data = np.ascontiguousarray(p.value, dtype="<f8").tobytes()
        tensors.append({"name": p.name, "shape": list(p.value.shape), "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    manifest = {"model": model.config(), "meta": meta or {}, "tensors": tensors}
    text = json.dumps(manifest, sort_keys=True, indent=1).encode("utf-8")
    head = MAGIC + struct.pack("<I", VERSION) + struct.pack("<Q", len(text))
    return head + text + b"".join(chunks)


def save(path, model, meta: dict | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(model, meta))
    return path


def read_manifest(data: bytes):
    """Split a checkpoint into ``(manifest, payload)`` and validate the layout."""
    if len(data) < 20 or data[:8] != MAGIC:
        raise CheckpointError("bad magic: not a PILIRCKP checkpoint")
    (version,) = struct.unpack("<I", data[8:12])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (n,) = struct.unpack("<Q", data[12:20])
    try:
        manifest = json.loads(data[20:20 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable manifest: {exc}") from None
    payload = data[20 + n:]
    end = 0
    for t in manifest["tensors"]:
        expected = 8 * int(np.prod(t["shape"], dtype=np.int64))
        if t["nbytes"] != expected or t["offset"] < end:
            raise CheckpointError(f"inconsistent manifest entry for {t['name']}")
        end = t["offset"] + t["nbytes"]
    if end > len(payload):
        raise CheckpointError("payload shorter than the manifest claims")
    return manifest, payload


def manifest_diff(manifest: dict, model) -> list[str]:
    """Human-readable differences between stored tensors and a model's parameters."""
    stored = {t["name"]: tuple(t["shape"]) for t in manifest["tensors"]}
    wanted = {p.name: tuple(p.value.shape) for p in model.parameters()}
    lines = []
    for name in sorted(set(stored) | set(wanted)):
        a, b = stored.get(name), wanted.get(name)
        if a != b:
            lines.append(f"{name}: checkpoint {a if a is not None else 'missing'} vs model "
                         f"{b if b is not None else 'missing'}")
    return lines


def load_into(model, manifest, payload):
    diff = manifest_diff(manifest, model)
    if diff:
        raise CheckpointError("checkpoint does not match the model: " + "; ".join(diff))
    params = {p.name: p for p in model.parameters()}
    for t in manifest["tensors"]:
        raw = payload[t["offset"]:t["offset"] + t["nbytes"]]
        params[t["name"]].value[...] = np.frombuffer(raw, dtype="<f8").reshape(t["shape"])
    return model


def load(path, model=None):
    """Read a checkpoint; returns ``(model, manifest)``. The model is rebuilt from the manifest unless given."""
    manifest, payload = read_manifest(Path(path).read_bytes())
    if model is None:
        model = from_config(manifest["model"])
    return load_into(model, manifest, payload), manifest
