"""Detector model files.

Layout::

    b"OTLSTM1\\n"            8-byte magic
    uint32 (little-endian)   header length
    header                   UTF-8 JSON {kind, input_dim, hidden_dim, norm_stats, params}
    float32[...]             little-endian weights: W_in, W_h, b, W_out, b_out, each row-major

``norm_stats`` holds the per-dimension ``mean`` and ``std`` lists.  Weights
are stored as float32; ``train`` already returns float32 weights, so a
save/load round trip is bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CorruptModel, KindMismatch
from .lstm import PARAM_NAMES, LstmModel

MAGIC = b"OTLSTM1\n"


def _shapes(D, H):
    return {"W_in": (4 * H, D), "W_h": (4 * H, H), "b": (4 * H,), "W_out": (1, H), "b_out": (1,)}


def save_model(model: LstmModel, path) -> None:
    header = {
        "kind": model.kind,
        "input_dim": int(model.input_dim),
        "hidden_dim": int(model.hidden_dim),
        "norm_stats": {"mean": [float(v) for v in model.mean], "std": [float(v) for v in model.std]},
        "params": list(PARAM_NAMES),
    }
    raw = json.dumps(header).encode()
    blob = b"".join(np.ascontiguousarray(getattr(model, n), dtype="<f4").tobytes() for n in PARAM_NAMES)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(blob)


def load_model(path, kind: str | None = None) -> LstmModel:
    """Read a model file; ``kind`` (if given) must match the stored detector kind."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CorruptModel(f"{path}: {exc}") from exc
    if raw[:len(MAGIC)] != MAGIC:
        raise CorruptModel(f"{path}: not a detector model file")
    try:
        (hlen,) = struct.unpack_from("<I", raw, len(MAGIC))
        start = len(MAGIC) + 4
        header = json.loads(raw[start:start + hlen].decode())
        D, H = int(header["input_dim"]), int(header["hidden_dim"])
        mean = np.array(header["norm_stats"]["mean"], dtype=np.float64)
        std = np.array(header["norm_stats"]["std"], dtype=np.float64)
        stored_kind = header["kind"]
    except (struct.error, ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise CorruptModel(f"{path}: bad header ({exc})") from exc
    if kind is not None and stored_kind != kind:
        raise KindMismatch(f"{path}: model is a {stored_kind!r} detector, expected {kind!r}")
    shapes = _shapes(D, H)
    need = sum(int(np.prod(s)) for s in shapes.values())
    body = raw[start + hlen:]
    if len(body) != 4 * need:
        raise CorruptModel(f"{path}: expected {need} float32 weights, found {len(body)} bytes")
    flat = np.frombuffer(body, dtype="<f4").astype(np.float32)
    params, pos = {}, 0
    for name in PARAM_NAMES:
        size = int(np.prod(shapes[name]))
        params[name] = flat[pos:pos + size].reshape(shapes[name]).copy()
        pos += size
    if len(mean) != D or len(std) != D:
        raise CorruptModel(f"{path}: normalisation stats do not match input_dim {D}")
    try:
        return LstmModel(stored_kind, D, H, **params, mean=mean, std=std)
    except ValueError as exc:
        raise CorruptModel(f"{path}: {exc}") from exc
