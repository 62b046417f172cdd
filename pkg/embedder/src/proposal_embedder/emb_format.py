"""EMB1 writer: the wire format consumed by the scoring pipeline.

Little-endian: magic "EMB1", u16 version=1, u16 model_year, u8 component tag,
u8 reserved=0, u32 dim, u64 count, then per record u16 id byte length, UTF-8
doc_id, dim float32 values. Records sorted by doc_id.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"EMB1"
VERSION = 1

COMPONENT_TAGS = {"title": 0, "objectives": 1, "contents": 2, "outcomes": 3}

_HEADER = struct.Struct("<4sHHBBIQ")
_ID_LEN = struct.Struct("<H")


def write_emb1(
    model_year: int, component: str, rows: dict[str, np.ndarray]
) -> bytes:
    tag = COMPONENT_TAGS[component]
    ids = sorted(rows)
    if ids:
        dims = {len(rows[i]) for i in ids}
        if len(dims) != 1:
            raise ValueError(f"inconsistent dims: {sorted(dims)}")
        (dim,) = dims
    else:
        raise ValueError("refusing to write an embedding file with no rows")

    out = bytearray()
    out += _HEADER.pack(MAGIC, VERSION, model_year, tag, 0, dim, len(ids))
    for doc_id in ids:
        raw = doc_id.encode("utf-8")
        vec = np.ascontiguousarray(rows[doc_id], dtype="<f4")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"non-finite embedding for {doc_id!r}")
        out += _ID_LEN.pack(len(raw))
        out += raw
        out += vec.tobytes()
    return bytes(out)
