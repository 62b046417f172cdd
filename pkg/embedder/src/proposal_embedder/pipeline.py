"""Corpus file -> one EMB1 file per component for a given model year."""

from __future__ import annotations

import logging
from pathlib import Path

from .corpus_io import COMPONENTS, new_proposals_through, read_proposals
from .emb_format import write_emb1
from .encoder import Encoder, EncoderConfig

log = logging.getLogger(__name__)


def embed_components(
    corpus_path: str | Path,
    config: EncoderConfig,
    model_year: int,
    out_dir: str | Path,
) -> list[Path]:
    """Write <model_year>_<component>.emb for every component.

    Rows cover every newly selected proposal with selection year <= model_year.
    Components that are empty text are embedded from the empty string and
    listed in a .log sidecar next to each output file.
    """
    proposals = new_proposals_through(read_proposals(corpus_path), model_year)
    if not proposals:
        raise ValueError(f"no new proposals selected in or before {model_year}")
    encoder = Encoder(config)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for component in COMPONENTS:
        texts = {p.doc_id: p.component_text(component) for p in proposals}
        by_text = encoder.embed_texts(list(texts.values()))
        rows = {doc_id: by_text[text] for doc_id, text in texts.items()}
        path = out_dir / f"{model_year}_{component}.emb"
        path.write_bytes(write_emb1(model_year, component, rows))

        empty_docs = sorted(d for d, t in texts.items() if not t.strip())
        sidecar = path.with_name(path.name + ".log")
        sidecar.write_text(
            "".join(f"empty-text {d}\n" for d in empty_docs), encoding="utf-8"
        )
        if empty_docs:
            log.warning(
                "%s: %d empty %s text(s), embedded from the empty string",
                path.name,
                len(empty_docs),
                component,
            )
        written.append(path)
    return written
