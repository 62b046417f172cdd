"""Command line: init-base, embed, adapt."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .adapt import AdaptationConfig, further_pretrain
from .corpus_io import read_proposals
from .encoder import EncoderConfig
from .pipeline import embed_components
from .toy_model import init_base_model


def cmd_init_base(args) -> int:
    proposals = read_proposals(args.corpus)
    texts = [p.concatenated_text() for p in proposals if p.is_new]
    out = init_base_model(
        texts,
        args.out,
        vocab_size=args.vocab_size,
        hidden_size=args.hidden_size,
        num_layers=args.layers,
        num_heads=args.heads,
        seed=args.seed,
    )
    print(f"initialized toy encoder at {out}")
    return 0


def cmd_embed(args) -> int:
    config = EncoderConfig(
        model=args.model,
        pooling=args.pooling,
        max_length=args.max_length,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    written = embed_components(args.corpus, config, args.model_year, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_adapt(args) -> int:
    years = tuple(int(y) for y in args.years.split(","))
    config = AdaptationConfig(
        years=years,
        steps_per_year=args.steps,
        mask_rate=args.mask_rate,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        max_length=args.max_length,
        seed=args.seed,
    )
    results = further_pretrain(args.corpus, args.model, config, args.out)
    for r in results:
        print(
            f"year {r.year}: {r.n_texts} texts, masked loss "
            f"{r.initial_loss:.4f} -> {r.final_loss:.4f}, checkpoint {r.checkpoint}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proposal-embedder",
        description="Embed proposal components into EMB1 files with a transformer encoder",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-base", help="build a tiny random-init encoder from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-size", type=int, default=2000)
    p.add_argument("--hidden-size", type=int, default=32)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_init_base)

    p = sub.add_parser("embed", help="write four EMB1 component files for one model year")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True, help="encoder directory or identifier")
    p.add_argument("--model-year", type=int, required=True)
    p.add_argument("--out", required=True, help="embeddings output directory")
    p.add_argument("--pooling", choices=["mean-of-last-layer", "first-token"],
                   default="mean-of-last-layer")
    p.add_argument("--max-length", type=int, default=128)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("adapt", help="further-pretrain annually on the cumulative corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True, help="base encoder directory")
    p.add_argument("--out", required=True, help="checkpoint output directory")
    p.add_argument("--years", required=True, help="comma-separated ascending years")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--mask-rate", type=float, default=0.15)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--max-length", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_adapt)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
