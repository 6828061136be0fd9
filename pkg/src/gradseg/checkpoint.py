"""Named-tensor checkpoint container.

Layout: magic "GSCP1", 8-byte little-endian manifest length, UTF-8 JSON
manifest ({"meta": {...}, "tensors": [{"name", "shape"}, ...]}), then one
little-endian float32 payload per tensor in manifest order. Writing is
byte-deterministic for identical inputs (sorted names, canonical JSON).
"""

import json
import struct

import numpy as np

MAGIC = b"GSCP1"


class CheckpointError(RuntimeError):
    pass


def _canon_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def tensors_to_bytes(tensors, meta=None):
    """Serialize a dict of name -> ndarray as float32 payloads."""
    names = sorted(tensors)
    manifest = {
        "meta": meta or {},
        "tensors": [{"name": n, "shape": list(tensors[n].shape)} for n in names],
    }
    blob = _canon_json(manifest)
    parts = [MAGIC, struct.pack("<Q", len(blob)), blob]
    for n in names:
        parts.append(np.ascontiguousarray(tensors[n], dtype="<f4").tobytes())
    return b"".join(parts)


def save_tensors(path, tensors, meta=None):
    with open(path, "wb") as f:
        f.write(tensors_to_bytes(tensors, meta))


def tensors_from_bytes(raw, path="<bytes>"):
    """Inverse of tensors_to_bytes; returns (tensors, meta)."""
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"bad magic in {path}")
    off = len(MAGIC)
    if len(raw) < off + 8:
        raise CheckpointError(f"truncated header in {path}")
    (mlen,) = struct.unpack_from("<Q", raw, off)
    off += 8
    if len(raw) < off + mlen:
        raise CheckpointError(f"truncated manifest in {path}")
    manifest = json.loads(raw[off : off + mlen].decode("utf-8"))
    off += mlen
    tensors = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = 4 * int(np.prod(shape)) if shape else 4
        if len(raw) < off + nbytes:
            raise CheckpointError(
                f"payload for {entry['name']!r} truncated in {path}"
            )
        tensors[entry["name"]] = (
            np.frombuffer(raw[off : off + nbytes], dtype="<f4").reshape(shape).copy()
        )
        off += nbytes
    if off != len(raw):
        raise CheckpointError(f"manifest/payload length mismatch in {path}")
    return tensors, manifest["meta"]


def load_tensors(path):
    with open(path, "rb") as f:
        raw = f.read()
    return tensors_from_bytes(raw, path)
