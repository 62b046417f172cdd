import json
import os
import random
from pathlib import Path

import pytest

os.environ.setdefault("HF_HUB_DISABLE_PROGRESS_BARS", "1")
os.environ.setdefault("TOKENIZERS_PARALLELISM", "false")

import transformers

transformers.logging.set_verbosity_error()
transformers.logging.disable_progress_bar()

WORDS = [
    "solar", "cell", "hydrogen", "storage", "battery", "anode", "carbon",
    "capture", "wind", "turbine", "geothermal", "nuclear", "grid", "efficiency",
    "catalyst", "membrane", "electrolyte", "thermal", "photovoltaic", "biomass",
]


def toy_record(doc_id: str, year: int, seeded: random.Random, **overrides) -> dict:
    def sentence():
        return " ".join(seeded.choice(WORDS) for _ in range(10))

    obj = {
        "doc_id": doc_id,
        "year": year,
        "is_new": True,
        "title": sentence(),
        "objectives": sentence(),
        "contents": sentence(),
        "outcomes": sentence(),
    }
    obj.update(overrides)
    return obj


@pytest.fixture(scope="session")
def toy_corpus_path(tmp_path_factory) -> Path:
    """20 new docs over two years, plus continuations and one empty component."""
    seeded = random.Random(12)
    objs = []
    for i in range(12):
        objs.append(toy_record(f"T2010D{i:03d}", 2010, seeded))
    for i in range(8):
        objs.append(toy_record(f"T2011D{i:03d}", 2011, seeded))
    objs[3]["outcomes"] = ""  # empty component, must be flagged not dropped
    objs.append(toy_record("T2011C000", 2011, seeded, is_new=False))
    path = tmp_path_factory.mktemp("corpus") / "proposals.jsonl"
    path.write_text("\n".join(json.dumps(o) for o in objs), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def base_model_dir(tmp_path_factory, toy_corpus_path) -> Path:
    from proposal_embedder import init_base_model, read_proposals

    texts = [p.concatenated_text() for p in read_proposals(toy_corpus_path) if p.is_new]
    out = tmp_path_factory.mktemp("model") / "base"
    init_base_model(texts, out, vocab_size=400, seed=3)
    return out
