"""Run configuration: every knob that affects scoring or validation output.

A config is serialized next to every output file so a run can be reproduced
exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

__all__ = ["RunConfig"]


@dataclass(frozen=True)
class RunConfig:
    k_fraction: float = 0.01
    k_min: int = 2
    rounding: str = "nearest"
    tie_mode: str = "exact-k"
    norm_scope: str = "landscape"
    cutoff: float = 0.10
    split_scope: str = "per-year"
    pca_dim: int | None = None
    strict_embeddings: bool = True
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if not 0.0 < self.k_fraction < 1.0:
            raise ValueError(f"k_fraction must be in (0,1), got {self.k_fraction}")
        if self.k_min < 2:
            raise ValueError(f"k_min must be >= 2, got {self.k_min}")
        if self.rounding not in ("nearest", "floor"):
            raise ValueError(f"rounding must be 'nearest' or 'floor', got {self.rounding!r}")
        if self.tie_mode not in ("exact-k", "inclusive"):
            raise ValueError(f"tie_mode must be 'exact-k' or 'inclusive', got {self.tie_mode!r}")
        if self.norm_scope not in ("landscape", "cohort"):
            raise ValueError(f"norm_scope must be 'landscape' or 'cohort', got {self.norm_scope!r}")
        if not 0.0 < self.cutoff < 1.0:
            raise ValueError("cutoff must be in (0,1)")
        if self.split_scope not in ("per-year", "pooled"):
            raise ValueError(f"split_scope must be 'per-year' or 'pooled', got {self.split_scope!r}")
        if self.pca_dim is not None and self.pca_dim < 1:
            raise ValueError(f"pca_dim must be positive, got {self.pca_dim}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        obj = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**obj)
