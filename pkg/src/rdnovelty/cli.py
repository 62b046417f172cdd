"""Command-line surface: ingest, score, rescore, validate, oracle, report.

Commands operate on a file-based workspace (--workspace or $NOVELTY_WORKSPACE).
Outputs are written atomically, each accompanied by the exact run config;
re-running with identical inputs and config is byte-identical for any thread
count.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import corpus as corpus_mod
from .config import RunConfig
from .corpus import Corpus, CorpusError, ParseIssue
from .embeddings import read_embeddings
from .landscape import (
    LandscapeError,
    build_landscape,
    matrix_to_csv,
    parse_scores_csv,
    rescore_matrix,
    score_year,
    scores_to_csv,
)
from .lof import PointSet, lof_batch, lof_bruteforce_oracle, max_relative_deviation
from .validation import (
    IndicatorSample,
    mann_whitney_u,
    mwu_permutation_oracle,
    split_novel,
    validation_report,
)
from .workspace import DirectoryMatrixStore, Workspace, WorkspaceError, atomic_write_text

log = logging.getLogger("rdnovelty")

LOF_ORACLE_THRESHOLD = 1e-9
MWU_ORACLE_THRESHOLD = 0.01
_ISSUE_PRINT_CAP = 20


def _workspace_from(args) -> Workspace:
    root = args.workspace or os.environ.get("NOVELTY_WORKSPACE")
    if not root:
        raise WorkspaceError("no workspace: pass --workspace or set NOVELTY_WORKSPACE")
    return Workspace(Path(root))


def _config_from(args) -> RunConfig:
    return RunConfig(
        k_fraction=args.k_fraction,
        k_min=args.k_min,
        rounding=args.rounding,
        tie_mode=args.tie_mode,
        norm_scope=args.norm_scope,
        cutoff=args.cutoff,
        split_scope=args.split_scope,
        pca_dim=args.pca_dim,
        strict_embeddings=not args.lenient_embeddings,
        seed=args.seed,
        threads=args.threads,
    )


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k-fraction", type=float, default=0.01)
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--rounding", choices=["nearest", "floor"], default="nearest")
    p.add_argument("--tie-mode", choices=["exact-k", "inclusive"], default="exact-k")
    p.add_argument("--norm-scope", choices=["landscape", "cohort"], default="landscape")
    p.add_argument("--cutoff", type=float, default=0.10)
    p.add_argument("--split-scope", choices=["per-year", "pooled"], default="per-year")
    p.add_argument("--pca-dim", type=int, default=None)
    p.add_argument(
        "--lenient-embeddings",
        action="store_true",
        help="fall back to older model years for missing embeddings",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument(
        "--precision",
        default="4",
        help="decimal places in CSV output, or 'full' for round-trip precision",
    )


def _precision_from(args) -> int | None:
    if args.precision == "full":
        return None
    try:
        value = int(args.precision)
    except ValueError:
        raise ValueError(f"--precision must be an integer or 'full', got {args.precision!r}")
    if value < 1:
        raise ValueError("--precision must be >= 1")
    return value


def _print_issues(issues: list[ParseIssue]) -> int:
    for issue in issues[:_ISSUE_PRINT_CAP]:
        print(f"line {issue.line_no}: {issue.severity}: {issue.message}", file=sys.stderr)
    if len(issues) > _ISSUE_PRINT_CAP:
        print(f"... {len(issues) - _ISSUE_PRINT_CAP} more issues", file=sys.stderr)
    return sum(1 for i in issues if i.severity == "error")


def _load_corpus(ws: Workspace) -> Corpus:
    path = ws.corpus_path
    if not path.exists():
        raise WorkspaceError(f"no ingested corpus at {path}; run `ingest` first")
    corpus, issues = corpus_mod.parse_proposals(path.read_bytes())
    errors = [i for i in issues if i.severity == "error"]
    if errors:
        raise CorpusError(f"persisted corpus is corrupt: {errors[0].message}")
    return corpus


def cmd_ingest(args) -> int:
    ws = _workspace_from(args)
    source = Path(args.input)
    if not source.exists():
        print(f"input not found: {source}", file=sys.stderr)
        return 1

    corpus, issues = corpus_mod.parse_proposals(source.read_bytes())
    n_errors = _print_issues(issues)
    if n_errors:
        print(f"ingest failed: {n_errors} malformed record(s)", file=sys.stderr)
        return 1

    stopwords: set[str] = set()
    if args.stopwords:
        stopwords = {
            w.strip()
            for w in Path(args.stopwords).read_text("utf-8").splitlines()
            if w.strip()
        }
    if not args.no_clean:
        corpus, emptied = corpus_mod.preprocess_corpus(corpus, stopwords)
        for doc_id, component in emptied[:_ISSUE_PRINT_CAP]:
            print(f"warning: doc {doc_id!r} component {component!r} empty after cleaning",
                  file=sys.stderr)

    with ws.lock():
        ws.ensure_layout()
        atomic_write_text(ws.corpus_path, corpus_mod.serialize_proposals(corpus))

    if not len(corpus):
        print("warning: empty corpus ingested", file=sys.stderr)
    print(f"ingested {len(corpus)} records -> {ws.corpus_path}")
    for year, ids in corpus.year_index.items():
        print(f"  {year}: {len(ids)} new")
    return 0


def _target_years(args, corpus: Corpus) -> list[int]:
    if args.all_years:
        return list(corpus.new_years())
    if args.year is None:
        raise ValueError("pass --year YEAR or --all-years")
    return [args.year]


def cmd_score(args) -> int:
    ws = _workspace_from(args)
    config = _config_from(args)
    precision = _precision_from(args)
    corpus = _load_corpus(ws)
    years = _target_years(args, corpus)
    store = DirectoryMatrixStore(ws)

    with ws.lock():
        ws.ensure_layout()
        for year in years:
            landscape = build_landscape(corpus, store, year, config)
            scores = score_year(
                corpus,
                landscape,
                tie_mode=config.tie_mode,
                norm_scope=config.norm_scope,
                threads=config.threads,
            )
            out = ws.scores_path(year)
            atomic_write_text(out, scores_to_csv(scores, precision))
            ws.write_config_sidecar(out, config)
            print(f"year={year} members={len(landscape)} k={landscape.k} -> {out}")
    return 0


def cmd_rescore(args) -> int:
    ws = _workspace_from(args)
    config = _config_from(args)
    precision = _precision_from(args)
    corpus = _load_corpus(ws)
    years = [
        y
        for y in corpus.new_years()
        if (args.from_year is None or y >= args.from_year)
        and (args.through_year is None or y <= args.through_year)
    ]
    if not years:
        print("no years to rescore", file=sys.stderr)
        return 1
    store = DirectoryMatrixStore(ws)

    with ws.lock():
        ws.ensure_layout()
        matrix = rescore_matrix(corpus, store, years, config)
        atomic_write_text(ws.matrix_path, matrix_to_csv(matrix, precision))
        ws.write_config_sidecar(ws.matrix_path, config)
    print(f"novelty matrix: {len(matrix.doc_ids())} docs x {len(matrix.years)} years "
          f"-> {ws.matrix_path}")
    return 0


def cmd_validate(args) -> int:
    ws = _workspace_from(args)
    config = _config_from(args)
    corpus = _load_corpus(ws)
    if not corpus.new_years():
        print("corpus has no newly selected proposals to validate", file=sys.stderr)
        return 1
    through = args.through_year if args.through_year is not None else max(corpus.new_years())
    years = [y for y in corpus.new_years() if y <= through]
    if not years:
        print("no scored years at or before --through-year", file=sys.stderr)
        return 1

    scores_by_year = {}
    for year in years:
        path = ws.scores_path(year)
        if not path.exists():
            print(f"missing scores for {year}: {path}", file=sys.stderr)
            return 1
        rows = parse_scores_csv(path.read_text("utf-8"))
        cohort = set(corpus.year_index.get(year, ()))
        scores_by_year[year] = [r for r in rows if r.doc_id in cohort]

    split = split_novel(scores_by_year, cutoff=config.cutoff, scope=config.split_scope)
    report = validation_report(corpus, split)

    split_lines = ["doc_id,group"]
    split_lines += [f"{d},novel" for d in split.novel_ids]
    split_lines += [f"{d},non_novel" for d in split.non_novel_ids]

    with ws.lock():
        ws.ensure_layout()
        atomic_write_text(ws.split_csv_path, "\n".join(split_lines) + "\n")
        ws.write_config_sidecar(ws.split_csv_path, config)
        atomic_write_text(ws.validation_csv_path, report.to_csv())
        ws.write_config_sidecar(ws.validation_csv_path, config)
        config_lines = config.to_json().strip().splitlines()
        atomic_write_text(ws.validation_txt_path, report.to_text(config_lines))

    print(f"validated {report.n_novel_docs} novel vs {report.n_non_novel_docs} non-novel "
          f"-> {ws.validation_csv_path}")
    for row in report.rows:
        if row.result is not None and row.result.p_value < 0.05:
            print(f"  {row.indicator}: p={row.result.p_value:.4f}")
    return 0


def cmd_oracle(args) -> int:
    if args.oracle_kind == "lof":
        matrix = read_embeddings(Path(args.input).read_bytes())
        points = PointSet(ids=matrix.ids, vectors=matrix.vectors)
        fast = lof_batch(points, args.k, args.tie_mode, threads=args.threads)
        slow = lof_bruteforce_oracle(points, args.k, args.tie_mode, cap=args.cap)
        deviation = max_relative_deviation(fast.lof, slow.lof)
        print(f"lof max relative deviation: {deviation:.3e} over {len(points)} points")
        return 0 if deviation <= LOF_ORACLE_THRESHOLD else 1

    payload = json.loads(Path(args.input).read_text("utf-8"))
    if not isinstance(payload, dict) or "x" not in payload or "y" not in payload:
        raise ValueError('oracle mwu input must be JSON like {"x": [...], "y": [...]}')
    sample = IndicatorSample("oracle", tuple(payload["x"]), tuple(payload["y"]))
    produced = mann_whitney_u(sample).p_value
    reference = mwu_permutation_oracle(sample.novel, sample.non_novel, cap=args.cap)
    deviation = abs(produced - reference)
    print(f"mwu |p - oracle p| = {deviation:.6f} (p={produced:.6f}, oracle={reference:.6f})")
    return 0 if deviation <= MWU_ORACLE_THRESHOLD else 1


def cmd_report(args) -> int:
    ws = _workspace_from(args)
    corpus = _load_corpus(ws)
    lines = ["workspace summary", ""]
    lines.append(f"records: {len(corpus)}")
    for year, ids in corpus.year_index.items():
        lines.append(f"  {year}: {len(ids)} new")
    lines.append("")
    for year in corpus.new_years():
        path = ws.scores_path(year)
        if not path.exists():
            lines.append(f"scores {year}: (absent)")
            continue
        rows = parse_scores_csv(path.read_text("utf-8"))
        cohort = set(corpus.year_index.get(year, ()))
        top = sorted(
            (r for r in rows if r.doc_id in cohort),
            key=lambda r: (-r.total, r.doc_id),
        )[:5]
        lines.append(f"scores {year}: {len(rows)} rows; top cohort novelty:")
        lines.extend(f"  {r.doc_id}  {r.total:.4f}" for r in top)
    lines.append("")
    lines.append(f"novelty matrix: {'present' if ws.matrix_path.exists() else 'absent'}")
    lines.append(f"validation report: {'present' if ws.validation_csv_path.exists() else 'absent'}")
    text = "\n".join(lines) + "\n"
    with ws.lock():
        ws.ensure_layout()
        atomic_write_text(ws.summary_path, text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdnovelty",
        description="Novelty scoring of research proposals over annual embedding landscapes",
    )
    parser.add_argument("--workspace", help="workspace root (default: $NOVELTY_WORKSPACE)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and persist a proposals file")
    p.add_argument("input", help="proposals line-format file")
    p.add_argument("--stopwords", help="newline-separated stopword file")
    p.add_argument("--no-clean", action="store_true", help="skip text preprocessing")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("score", help="score one year or all years")
    p.add_argument("--year", type=int)
    p.add_argument("--all-years", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("rescore", help="score all years into a doc x year matrix")
    p.add_argument("--from-year", type=int)
    p.add_argument("--through-year", type=int)
    _add_config_flags(p)
    p.set_defaults(func=cmd_rescore)

    p = sub.add_parser("validate", help="split novel/non-novel and test indicators")
    p.add_argument("--through-year", type=int)
    _add_config_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("oracle", help="cross-check optimized paths against oracles")
    oracle_sub = p.add_subparsers(dest="oracle_kind", required=True)
    q = oracle_sub.add_parser("lof", help="lof_batch vs brute force on an EMB1 file")
    q.add_argument("input")
    q.add_argument("--k", type=int, required=True)
    q.add_argument("--tie-mode", choices=["exact-k", "inclusive"], default="exact-k")
    q.add_argument("--threads", type=int, default=1)
    q.add_argument("--cap", type=int, default=2000)
    q.set_defaults(func=cmd_oracle)
    q = oracle_sub.add_parser("mwu", help="test p-value vs exhaustive permutations")
    q.add_argument("input", help='JSON file {"x": [...], "y": [...]}')
    q.add_argument("--cap", type=int, default=3_000_000)
    q.set_defaults(func=cmd_oracle)

    p = sub.add_parser("report", help="summarize workspace artifacts")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (CorpusError, LandscapeError, WorkspaceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
