"""Binary feature dumps: a JSON header followed by a little-endian float32 matrix.

Layout::

    b"OTFEAT1\\n"            8-byte magic
    uint32 (little-endian)   header length in bytes
    header                   UTF-8 JSON {"kind", "dim", "hop_ms", "count"}
    float32[count * dim]     row-major, little-endian
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CorruptFile, UnsupportedFormat

MAGIC = b"OTFEAT1\n"


def write_features(path, matrix: np.ndarray, kind: str, hop_ms: float) -> None:
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    header = json.dumps({"kind": kind, "dim": int(m.shape[1]), "hop_ms": float(hop_ms),
                         "count": int(m.shape[0])}).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(m, dtype="<f4").tobytes())


def read_features(path) -> tuple[dict, np.ndarray]:
    """Return ``(header, matrix)``; the matrix dtype is float32."""
    raw = Path(path).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise UnsupportedFormat(f"{path}: not a feature dump")
    try:
        (hlen,) = struct.unpack_from("<I", raw, len(MAGIC))
        start = len(MAGIC) + 4
        header = json.loads(raw[start:start + hlen].decode())
        count, dim = int(header["count"]), int(header["dim"])
    except (struct.error, ValueError, KeyError) as exc:
        raise CorruptFile(f"{path}: bad header ({exc})") from exc
    body = raw[start + hlen:]
    if len(body) != 4 * count * dim:
        raise CorruptFile(f"{path}: expected {count}x{dim} float32 values, got {len(body)} bytes")
    matrix = np.frombuffer(body, dtype="<f4").reshape(count, dim).astype(np.float32)
    return header, matrix
