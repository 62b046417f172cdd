"""Component embedding matrices, the EMB1 binary format, and PCA reduction.

EMB1 layout (little-endian): magic "EMB1"; u16 version=1; u16 model_year;
u8 component tag; u8 reserved=0; u32 dim; u64 count; then per record a u16
id byte length, the UTF-8 doc_id, and dim float32 values. Records are sorted
by doc_id so serialization is deterministic.

Matrices hold float64 in memory (all density computations run in 8-byte
arithmetic); files store 4-byte floats. A matrix whose entries are
float32-representable round-trips bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import IO, Iterable, Mapping, Protocol

import numpy as np

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "ComponentTag",
    "EmbeddingFormatError",
    "EmbeddingMatrix",
    "read_embeddings",
    "write_embeddings",
    "PcaModel",
    "pca_fit",
    "pca_transform",
    "MatrixStore",
    "InMemoryMatrixStore",
]

MAGIC = b"EMB1"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sHHBBIQ")
_ID_LEN = struct.Struct("<H")


class ComponentTag(IntEnum):
    """The four proposal text components, with stable wire codes."""

    TITLE = 0
    OBJECTIVES = 1
    CONTENTS = 2
    OUTCOMES = 3

    @property
    def field_name(self) -> str:
        """Matching ProposalRecord attribute name."""
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str) -> "ComponentTag":
        return cls[name.upper()]


class EmbeddingFormatError(ValueError):
    """Malformed EMB1 stream or invalid matrix content."""


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """(doc_id -> vector) for one component and model year; ids ascending."""

    model_year: int
    component: ComponentTag
    ids: tuple[str, ...]
    vectors: np.ndarray  # (n, dim) float64, row i belongs to ids[i]

    def __post_init__(self):
        arr = np.asarray(self.vectors, dtype=np.float64)
        if arr.ndim != 2:
            raise EmbeddingFormatError("vectors must be a 2-D array")
        if arr.shape[0] != len(self.ids):
            raise EmbeddingFormatError("row count does not match id count")
        if arr.shape[1] < 1:
            raise EmbeddingFormatError("dim must be positive")
        if not np.all(np.isfinite(arr)):
            raise EmbeddingFormatError("non-finite value in embedding matrix")
        if len(set(self.ids)) != len(self.ids):
            raise EmbeddingFormatError("duplicate doc_id in embedding matrix")
        if any(self.ids[i] >= self.ids[i + 1] for i in range(len(self.ids) - 1)):
            raise EmbeddingFormatError("ids must be strictly ascending")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "vectors", arr)

    @classmethod
    def from_rows(
        cls,
        model_year: int,
        component: ComponentTag,
        rows: Mapping[str, np.ndarray] | Iterable[tuple[str, np.ndarray]],
        dim: int | None = None,
    ) -> "EmbeddingMatrix":
        """Build from unordered rows; insertion order never matters.

        `dim` is only consulted when rows is empty (it cannot be inferred).
        """
        items = sorted(rows.items() if isinstance(rows, Mapping) else rows)
        ids = tuple(doc_id for doc_id, _ in items)
        if items:
            vectors = np.asarray([np.asarray(vec) for _, vec in items], dtype=np.float64)
        else:
            vectors = np.empty((0, dim if dim is not None else 1), dtype=np.float64)
        return cls(model_year=model_year, component=component, ids=ids, vectors=vectors)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.ids)

    def row(self, doc_id: str) -> np.ndarray:
        idx = self._index.get(doc_id)
        if idx is None:
            raise KeyError(doc_id)
        return self.vectors[idx]

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._index

    @property
    def _index(self) -> dict[str, int]:
        cached = getattr(self, "_index_cache", None)
        if cached is None:
            cached = {doc_id: i for i, doc_id in enumerate(self.ids)}
            object.__setattr__(self, "_index_cache", cached)
        return cached

    def equals(self, other: "EmbeddingMatrix") -> bool:
        return (
            self.model_year == other.model_year
            and self.component == other.component
            and self.ids == other.ids
            and self.vectors.shape == other.vectors.shape
            and np.array_equal(self.vectors, other.vectors)
        )


def write_embeddings(matrix: EmbeddingMatrix) -> bytes:
    """Serialize to EMB1 bytes; deterministic for a given matrix."""
    if not 0 <= matrix.model_year <= 0xFFFF:
        raise EmbeddingFormatError(f"model_year {matrix.model_year} not encodable")
    out = bytearray()
    out += _HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        matrix.model_year,
        int(matrix.component),
        0,
        matrix.dim,
        len(matrix),
    )
    vecs32 = matrix.vectors.astype("<f4")
    for i, doc_id in enumerate(matrix.ids):
        raw = doc_id.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise EmbeddingFormatError(f"doc_id too long: {doc_id[:32]!r}...")
        out += _ID_LEN.pack(len(raw))
        out += raw
        out += vecs32[i].tobytes()
    return bytes(out)


def read_embeddings(source: bytes | IO) -> EmbeddingMatrix:
    """Parse an EMB1 stream, validating structure and content."""
    data = source.read() if hasattr(source, "read") else source
    if len(data) < _HEADER.size:
        raise EmbeddingFormatError("truncated header")
    magic, version, model_year, tag, _reserved, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise EmbeddingFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise EmbeddingFormatError(f"unsupported version {version}")
    if tag > 3:
        raise EmbeddingFormatError(f"invalid component tag {tag}")
    if dim < 1:
        raise EmbeddingFormatError("dim must be positive")

    offset = _HEADER.size
    vec_bytes = 4 * dim
    ids: list[str] = []
    rows = np.empty((count, dim), dtype=np.float64)
    for i in range(count):
        if offset + _ID_LEN.size > len(data):
            raise EmbeddingFormatError(f"truncated record {i} (of {count})")
        (id_len,) = _ID_LEN.unpack_from(data, offset)
        offset += _ID_LEN.size
        if offset + id_len + vec_bytes > len(data):
            raise EmbeddingFormatError(f"truncated record {i} (of {count})")
        doc_id = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
        offset += vec_bytes
        if not np.all(np.isfinite(vec)):
            raise EmbeddingFormatError(f"non-finite value in record for {doc_id!r}")
        ids.append(doc_id)
        rows[i] = vec
    if offset != len(data):
        raise EmbeddingFormatError(f"{len(data) - offset} trailing bytes after last record")
    if len(set(ids)) != len(ids):
        dupes = sorted({d for d in ids if ids.count(d) > 1})
        raise EmbeddingFormatError(f"duplicate doc_id {dupes[0]!r}")

    order = sorted(range(count), key=lambda i: ids[i])
    return EmbeddingMatrix(
        model_year=model_year,
        component=ComponentTag(tag),
        ids=tuple(ids[i] for i in order),
        vectors=rows[order] if count else np.empty((0, dim)),
    )


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Orthonormal principal basis with a deterministic sign convention."""

    mean: np.ndarray  # (dim,)
    components: np.ndarray  # (n_components, dim), orthonormal rows
    explained_variance_ratio: np.ndarray  # non-increasing, sums to <= 1

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    @property
    def n_components(self) -> int:
        return int(self.components.shape[0])


def pca_fit(matrix: EmbeddingMatrix, n_components: int) -> PcaModel:
    """Fit PCA on the matrix rows.

    The sign of each basis vector is fixed so its largest-magnitude coordinate
    is positive, making fits reproducible across LAPACK builds.
    """
    n = len(matrix)
    if n < 2:
        raise ValueError(f"insufficient rows for PCA: {n} < 2")
    if not 1 <= n_components <= min(n, matrix.dim):
        raise ValueError(
            f"n_components must be in 1..{min(n, matrix.dim)}, got {n_components}"
        )
    x = matrix.vectors
    mean = x.mean(axis=0)
    centered = x - mean
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    basis = vt[:n_components].copy()
    for row in basis:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    total_var = float((centered * centered).sum())
    if total_var > 0.0:
        ratios = (singular[:n_components] ** 2) / total_var
    else:
        ratios = np.zeros(n_components)
    return PcaModel(mean=mean, components=basis, explained_variance_ratio=ratios)


def pca_transform(model: PcaModel, matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    """Project rows onto the principal basis; row keys are preserved."""
    if matrix.dim != model.dim:
        raise ValueError(f"dim mismatch: matrix {matrix.dim} vs model {model.dim}")
    coords = (matrix.vectors - model.mean) @ model.components.T
    return EmbeddingMatrix(
        model_year=matrix.model_year,
        component=matrix.component,
        ids=matrix.ids,
        vectors=coords,
    )


class MatrixStore(Protocol):
    """Provider of embedding matrices keyed by (model_year, component)."""

    def get(self, model_year: int, component: ComponentTag) -> EmbeddingMatrix | None:
        ...

    def model_years(self, component: ComponentTag) -> list[int]:
        ...


class InMemoryMatrixStore:
    """Dict-backed store, mainly for tests and pipeline glue."""

    def __init__(self, matrices: Iterable[EmbeddingMatrix] = ()):
        self._matrices: dict[tuple[int, ComponentTag], EmbeddingMatrix] = {}
        for m in matrices:
            self.add(m)

    def add(self, matrix: EmbeddingMatrix) -> None:
        self._matrices[(matrix.model_year, matrix.component)] = matrix

    def get(self, model_year: int, component: ComponentTag) -> EmbeddingMatrix | None:
        return self._matrices.get((model_year, component))

    def model_years(self, component: ComponentTag) -> list[int]:
        return sorted(y for (y, c) in self._matrices if c == component)
