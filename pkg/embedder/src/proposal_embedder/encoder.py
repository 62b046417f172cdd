"""Batch inference: proposal component texts to fixed-dimension vectors.

Texts are deduplicated and sorted before batching, so identical texts always
share one embedding and a given (corpus, config, seed) produces byte-identical
output files.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

log = logging.getLogger(__name__)

POOLINGS = ("mean-of-last-layer", "first-token")


@dataclass(frozen=True)
class EncoderConfig:
    model: str  # HF-format model directory or identifier
    pooling: str = "mean-of-last-layer"
    max_length: int = 128
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        if self.max_length < 2:
            raise ValueError("max_length must be >= 2")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class Encoder:
    """A loaded bidirectional encoder plus its tokenizer."""

    def __init__(self, config: EncoderConfig):
        from transformers import AutoModel, AutoTokenizer

        self.config = config
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(config.model)
            self.model = AutoModel.from_pretrained(config.model)
        except Exception as exc:
            raise RuntimeError(f"cannot load encoder {config.model!r}: {exc}") from exc
        self.model.eval()

    @property
    def hidden_size(self) -> int:
        return int(self.model.config.hidden_size)

    def _warn_truncations(self, texts: list[str]) -> None:
        lengths = [
            len(ids)
            for ids in self.tokenizer(list(texts), truncation=False)["input_ids"]
        ]
        over = sum(1 for n in lengths if n > self.config.max_length)
        if over:
            log.warning(
                "%d of %d texts exceed max_length=%d and were truncated",
                over,
                len(texts),
                self.config.max_length,
            )

    def embed_texts(self, texts: list[str]) -> dict[str, np.ndarray]:
        """Embed each distinct text once; returns text -> float32 vector."""
        torch.manual_seed(self.config.seed)
        unique = sorted(set(texts))
        if not unique:
            return {}
        self._warn_truncations(unique)

        out: dict[str, np.ndarray] = {}
        with torch.no_grad():
            for start in range(0, len(unique), self.config.batch_size):
                batch = unique[start : start + self.config.batch_size]
                enc = self.tokenizer(
                    batch,
                    return_tensors="pt",
                    padding=True,
                    truncation=True,
                    max_length=self.config.max_length,
                )
                hidden = self.model(**enc).last_hidden_state
                if self.config.pooling == "first-token":
                    pooled = hidden[:, 0, :]
                else:
                    mask = enc["attention_mask"].unsqueeze(-1).to(hidden.dtype)
                    pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)
                vectors = pooled.to(torch.float32).numpy()
                for text, vec in zip(batch, vectors):
                    out[text] = vec.copy()
        return out
