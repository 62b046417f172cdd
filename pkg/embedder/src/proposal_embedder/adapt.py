"""Annual further-pretraining: continued masked-token training, year by year.

For each year t the training corpus is every newly selected proposal with
selection year <= t, its four components concatenated into one text. Year t's
model continues from year t-1's checkpoint (the base model for the first
year), so the encoder accumulates the landscape as it grows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import torch

from .corpus_io import new_proposals_through, read_proposals

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdaptationConfig:
    years: tuple[int, ...]
    steps_per_year: int
    mask_rate: float = 0.15
    learning_rate: float = 5e-4
    batch_size: int = 8
    max_length: int = 128
    seed: int = 0

    def __post_init__(self):
        if not self.years:
            raise ValueError("years must be non-empty")
        if list(self.years) != sorted(set(self.years)):
            raise ValueError("years must be strictly ascending")
        if self.steps_per_year < 0:
            raise ValueError("steps_per_year must be >= 0")
        if not 0.0 < self.mask_rate < 1.0:
            raise ValueError("mask_rate must be in (0,1)")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class YearResult:
    year: int
    checkpoint: Path
    initial_loss: float
    final_loss: float
    n_texts: int


def _mask_tokens(input_ids, special_mask, mask_rate, tokenizer, generator):
    """Standard dynamic masking: 80% [MASK], 10% random token, 10% unchanged."""
    labels = input_ids.clone()
    prob = torch.full(input_ids.shape, mask_rate)
    prob.masked_fill_(special_mask, 0.0)
    masked = torch.bernoulli(prob, generator=generator).bool()
    labels[~masked] = -100

    replace = (
        torch.bernoulli(torch.full(input_ids.shape, 0.8), generator=generator).bool()
        & masked
    )
    input_ids = input_ids.clone()
    input_ids[replace] = tokenizer.mask_token_id
    randomize = (
        torch.bernoulli(torch.full(input_ids.shape, 0.5), generator=generator).bool()
        & masked
        & ~replace
    )
    random_ids = torch.randint(
        len(tokenizer), input_ids.shape, generator=generator, dtype=input_ids.dtype
    )
    input_ids[randomize] = random_ids[randomize]
    return input_ids, labels


def _encode_corpus(tokenizer, texts, max_length):
    enc = tokenizer(
        texts,
        return_tensors="pt",
        padding="max_length",
        truncation=True,
        max_length=max_length,
    )
    special = torch.zeros_like(enc["input_ids"], dtype=torch.bool)
    for tok_id in (tokenizer.pad_token_id, tokenizer.cls_token_id, tokenizer.sep_token_id):
        special |= enc["input_ids"] == tok_id
    return enc["input_ids"], enc["attention_mask"], special


def _masked_loss(model, tokenizer, input_ids, attention_mask, special, mask_rate, seed):
    """Loss on a fixed mask pattern; the yardstick for before/after comparison."""
    generator = torch.Generator().manual_seed(seed)
    ids, labels = _mask_tokens(input_ids, special, mask_rate, tokenizer, generator)
    model.eval()
    with torch.no_grad():
        out = model(input_ids=ids, attention_mask=attention_mask, labels=labels)
    return float(out.loss)


def further_pretrain(
    corpus_path: str | Path,
    base_model: str | Path,
    config: AdaptationConfig,
    out_dir: str | Path,
) -> list[YearResult]:
    """One checkpoint per year, each continuing from the previous year's."""
    from transformers import AutoModelForMaskedLM, AutoTokenizer

    proposals = read_proposals(corpus_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tokenizer = AutoTokenizer.from_pretrained(base_model)

    results: list[YearResult] = []
    current = Path(base_model)
    for year in config.years:
        cohort = new_proposals_through(proposals, year)
        texts = [p.concatenated_text() for p in cohort]
        if not texts:
            raise ValueError(f"no training texts for year {year}")

        torch.manual_seed(config.seed + year)
        model = AutoModelForMaskedLM.from_pretrained(current)
        input_ids, attention_mask, special = _encode_corpus(
            tokenizer, texts, config.max_length
        )
        eval_seed = config.seed * 1_000_003 + year
        initial = _masked_loss(
            model, tokenizer, input_ids, attention_mask, special,
            config.mask_rate, eval_seed,
        )

        if config.steps_per_year > 0:
            optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate)
            generator = torch.Generator().manual_seed(config.seed * 7919 + year)
            model.train()
            n = input_ids.shape[0]
            for step in range(config.steps_per_year):
                batch_idx = torch.randint(n, (min(config.batch_size, n),), generator=generator)
                ids, labels = _mask_tokens(
                    input_ids[batch_idx], special[batch_idx],
                    config.mask_rate, tokenizer, generator,
                )
                out = model(
                    input_ids=ids,
                    attention_mask=attention_mask[batch_idx],
                    labels=labels,
                )
                out.loss.backward()
                optimizer.step()
                optimizer.zero_grad()

        final = _masked_loss(
            model, tokenizer, input_ids, attention_mask, special,
            config.mask_rate, eval_seed,
        )
        checkpoint = out_dir / str(year)
        model.save_pretrained(checkpoint)
        tokenizer.save_pretrained(checkpoint)
        log.info(
            "year %d: %d texts, %d steps, masked loss %.4f -> %.4f",
            year, len(texts), config.steps_per_year, initial, final,
        )
        results.append(
            YearResult(
                year=year,
                checkpoint=checkpoint,
                initial_loss=initial,
                final_loss=final,
                n_texts=len(texts),
            )
        )
        current = checkpoint
    return results
