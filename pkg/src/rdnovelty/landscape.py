"""Cumulative annual landscapes and per-component LOF novelty scores.

A landscape for year t holds the embeddings of every proposal newly selected
in or before t, re-embedded with the year-t model. Scoring runs LOF per text
component with the year's neighborhood size k_t, min-max normalizes each
component over the configured population, and averages the four normalized
values into a total novelty in [0, 1].
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .config import RunConfig
from .corpus import Corpus, select_new_cohort
from .embeddings import ComponentTag, EmbeddingMatrix, MatrixStore, pca_fit, pca_transform
from .lof import PointSet, lof_batch

__all__ = [
    "LandscapeError",
    "AnnualLandscape",
    "NoveltyScore",
    "NoveltyMatrix",
    "compute_k",
    "build_landscape",
    "normalize_scores",
    "score_year",
    "rescore_matrix",
    "scores_to_csv",
    "parse_scores_csv",
    "matrix_to_csv",
]

log = logging.getLogger(__name__)

SCORES_CSV_HEADER = (
    "doc_id,scoring_year,nov_title,nov_objectives,nov_contents,nov_outcomes,total_novelty"
)

NORM_SCOPES = ("landscape", "cohort")


class LandscapeError(ValueError):
    """Landscape construction or scoring failed."""


@dataclass(frozen=True, eq=False)
class AnnualLandscape:
    """Cumulative member set for one year with its four component matrices."""

    year: int
    member_ids: tuple[str, ...]  # ascending
    matrices: Mapping[ComponentTag, EmbeddingMatrix]
    k: int

    def __post_init__(self):
        for tag in ComponentTag:
            m = self.matrices.get(tag)
            if m is None:
                raise LandscapeError(f"missing component matrix {tag.field_name}")
            if m.ids != self.member_ids:
                raise LandscapeError(
                    f"component {tag.field_name} covers a different id set"
                )
        if not 1 <= self.k <= len(self.member_ids) - 1:
            raise LandscapeError(
                f"k={self.k} infeasible for {len(self.member_ids)} members"
            )

    def __len__(self) -> int:
        return len(self.member_ids)


@dataclass(frozen=True)
class NoveltyScore:
    """Per-component and composite novelty of one proposal in one scoring year."""

    doc_id: str
    scoring_year: int
    raw_lof: tuple[float, float, float, float]
    normalized: tuple[float, float, float, float]
    total: float
    in_cohort: bool


@dataclass(frozen=True, eq=False)
class NoveltyMatrix:
    """(doc_id, scoring_year) -> NoveltyScore, defined from selection year on."""

    years: tuple[int, ...]
    cells: Mapping[tuple[str, int], NoveltyScore]

    def score(self, doc_id: str, year: int) -> NoveltyScore | None:
        return self.cells.get((doc_id, year))

    def doc_ids(self) -> tuple[str, ...]:
        return tuple(sorted({doc_id for doc_id, _ in self.cells}))

    def years_for(self, doc_id: str) -> tuple[int, ...]:
        return tuple(sorted(y for d, y in self.cells if d == doc_id))


def compute_k(
    landscape_size: int,
    fraction: float = 0.01,
    k_min: int = 2,
    rounding: str = "nearest",
) -> int:
    """Neighborhood size: fraction of the cumulative landscape, floored at k_min.

    `nearest` rounds half away from zero; the result is clamped to
    landscape_size - 1 so the kNN query stays feasible.
    """
    if rounding not in ("nearest", "floor"):
        raise ValueError(f"rounding must be 'nearest' or 'floor', got {rounding!r}")
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0,1), got {fraction}")
    if landscape_size < k_min + 1:
        raise LandscapeError(
            f"landscape too small: {landscape_size} members < k_min+1 = {k_min + 1}"
        )
    x = fraction * landscape_size
    raw = math.floor(x + 0.5) if rounding == "nearest" else math.floor(x)
    return min(max(k_min, raw), landscape_size - 1)


def _resolve_component(
    store: MatrixStore,
    component: ComponentTag,
    members: Sequence[str],
    year: int,
    strict: bool,
) -> EmbeddingMatrix:
    """Gather member rows for one component, newest model first."""
    base = store.get(year, component)
    if base is None and strict:
        raise LandscapeError(
            f"no embeddings for model_year={year} component={component.field_name}"
        )

    rows: dict[str, np.ndarray] = {}
    missing: list[str] = []
    dim = base.dim if base is not None else None
    for doc_id in members:
        if base is not None and doc_id in base:
            rows[doc_id] = base.row(doc_id)
        else:
            missing.append(doc_id)

    if missing and strict:
        preview = ", ".join(missing[:5])
        raise LandscapeError(
            f"missing embeddings for {len(missing)} doc(s) in model_year={year} "
            f"component={component.field_name}: {preview}"
        )

    if missing:
        fallback_years = [y for y in store.model_years(component) if y < year]
        for doc_id in missing:
            found = None
            for y in reversed(fallback_years):
                m = store.get(y, component)
                if m is not None and doc_id in m:
                    found = (y, m.row(doc_id))
                    break
            if found is None:
                raise LandscapeError(
                    f"doc {doc_id!r} has no embeddings for component "
                    f"{component.field_name} in any model_year <= {year}"
                )
            y, vec = found
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise LandscapeError(
                    f"dim inconsistency for component {component.field_name}: "
                    f"{len(vec)} (model_year {y}) vs {dim}"
                )
            log.warning(
                "falling back to model_year=%d embedding for doc %s component %s",
                y,
                doc_id,
                component.field_name,
            )
            rows[doc_id] = vec

    return EmbeddingMatrix.from_rows(year, component, rows, dim=dim)


def build_landscape(
    corpus: Corpus, store: MatrixStore, year: int, config: RunConfig
) -> AnnualLandscape:
    """Assemble the cumulative landscape for `year` from stored embeddings."""
    members = sorted(
        doc_id
        for y, ids in corpus.year_index.items()
        if y <= year
        for doc_id in ids
    )
    if not members:
        raise LandscapeError(f"no new proposals selected in or before {year}")

    matrices: dict[ComponentTag, EmbeddingMatrix] = {}
    for tag in ComponentTag:
        matrix = _resolve_component(store, tag, members, year, config.strict_embeddings)
        if config.pca_dim is not None:
            model = pca_fit(matrix, min(config.pca_dim, len(members), matrix.dim))
            matrix = pca_transform(model, matrix)
        matrices[tag] = matrix

    k = compute_k(len(members), config.k_fraction, config.k_min, config.rounding)
    return AnnualLandscape(year=year, member_ids=tuple(members), matrices=matrices, k=k)


def normalize_scores(raw: Sequence[float]) -> np.ndarray:
    """Min-max normalize into [0, 1]; a constant input maps to all zeros."""
    arr = np.asarray(raw, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot normalize an empty list")
    if not np.all(np.isfinite(arr)):
        raise ValueError("normalize_scores requires finite input (cap infinities first)")
    lo = arr.min()
    hi = arr.max()
    if hi == lo:
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


def _cap_infinite(raw: np.ndarray) -> np.ndarray:
    """Replace +inf LOF values by the largest finite score (degeneracy cap)."""
    finite = raw[np.isfinite(raw)]
    if finite.size == raw.size:
        return raw
    cap = finite.max() if finite.size else 1.0
    return np.where(np.isfinite(raw), raw, cap)


def score_year(
    corpus: Corpus,
    landscape: AnnualLandscape,
    tie_mode: str = "exact-k",
    norm_scope: str = "landscape",
    weights: Sequence[float] | None = None,
    threads: int = 1,
) -> list[NoveltyScore]:
    """Score every landscape member for the landscape's year.

    Per component: LOF with k_t, infinity capping, then min-max normalization
    over the scope population (all members, or only the year's new cohort; in
    cohort scope, out-of-population values are clamped into [0, 1]). The total
    is the weighted mean of the four normalized values (equal weights by
    default). The year's cohort is flagged on each score.
    """
    if norm_scope not in NORM_SCOPES:
        raise ValueError(f"norm_scope must be one of {NORM_SCOPES}, got {norm_scope!r}")
    if weights is not None:
        weights = tuple(float(w) for w in weights)
        if len(weights) != 4 or any(w < 0 for w in weights) or sum(weights) == 0:
            raise ValueError("weights must be 4 non-negative values with a positive sum")

    members = landscape.member_ids
    cohort = frozenset(select_new_cohort(corpus, landscape.year))
    in_cohort = np.asarray([doc_id in cohort for doc_id in members])

    raw_by_comp: dict[ComponentTag, np.ndarray] = {}
    norm_by_comp: dict[ComponentTag, np.ndarray] = {}
    for tag in ComponentTag:
        matrix = landscape.matrices[tag]
        points = PointSet(ids=matrix.ids, vectors=matrix.vectors)
        raw = lof_batch(points, landscape.k, tie_mode, threads=threads).lof
        capped = _cap_infinite(raw)
        if norm_scope == "landscape":
            normalized = normalize_scores(capped)
        else:
            population = capped[in_cohort]
            if population.size == 0:
                raise LandscapeError(f"year {landscape.year} has no cohort members")
            lo, hi = population.min(), population.max()
            if hi == lo:
                normalized = np.zeros_like(capped)
            else:
                normalized = np.clip((capped - lo) / (hi - lo), 0.0, 1.0)
        raw_by_comp[tag] = raw
        norm_by_comp[tag] = normalized

    scores: list[NoveltyScore] = []
    for i, doc_id in enumerate(members):
        raw4 = tuple(float(raw_by_comp[tag][i]) for tag in ComponentTag)
        norm4 = tuple(float(norm_by_comp[tag][i]) for tag in ComponentTag)
        if weights is None:
            total = (norm4[0] + norm4[1] + norm4[2] + norm4[3]) / 4.0
        else:
            total = sum(w * v for w, v in zip(weights, norm4)) / sum(weights)
        scores.append(
            NoveltyScore(
                doc_id=doc_id,
                scoring_year=landscape.year,
                raw_lof=raw4,
                normalized=norm4,
                total=total,
                in_cohort=bool(in_cohort[i]),
            )
        )
    return scores


def rescore_matrix(
    corpus: Corpus,
    store: MatrixStore,
    years: Iterable[int],
    config: RunConfig,
) -> NoveltyMatrix:
    """Score each year's landscape; cell (d, t) exists iff d was selected by t."""
    years = tuple(sorted(years))
    cells: dict[tuple[str, int], NoveltyScore] = {}
    for year in years:
        landscape = build_landscape(corpus, store, year, config)
        for score in score_year(
            corpus,
            landscape,
            tie_mode=config.tie_mode,
            norm_scope=config.norm_scope,
            threads=config.threads,
        ):
            cells[(score.doc_id, year)] = score
    return NoveltyMatrix(years=years, cells=cells)


def _fmt(value: float, precision: int | None) -> str:
    if precision is None:
        return repr(float(value))
    return f"{value:.{precision}f}"


def scores_to_csv(scores: Sequence[NoveltyScore], precision: int | None = 4) -> str:
    """Render scores in the per-year CSV schema (4-decimal fixed by default)."""
    lines = [SCORES_CSV_HEADER]
    for s in sorted(scores, key=lambda s: s.doc_id):
        cells = [s.doc_id, str(s.scoring_year)]
        cells += [_fmt(v, precision) for v in s.normalized]
        cells.append(_fmt(s.total, precision))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def parse_scores_csv(text: str) -> list[NoveltyScore]:
    """Read a scores CSV back; raw LOF values are not persisted (set to nan)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != SCORES_CSV_HEADER:
        raise ValueError("not a scores CSV (bad header)")
    out: list[NoveltyScore] = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 7:
            raise ValueError(f"bad scores row: {ln!r}")
        doc_id, year_s, *vals = parts
        nums = [float(v) for v in vals]
        out.append(
            NoveltyScore(
                doc_id=doc_id,
                scoring_year=int(year_s),
                raw_lof=(math.nan,) * 4,
                normalized=tuple(nums[:4]),
                total=nums[4],
                in_cohort=False,
            )
        )
    return out


def matrix_to_csv(matrix: NoveltyMatrix, precision: int | None = 4) -> str:
    """doc_id x year grid of total novelty; empty cells where undefined."""
    header = ["doc_id"] + [str(y) for y in matrix.years]
    lines = [",".join(header)]
    for doc_id in matrix.doc_ids():
        row = [doc_id]
        for y in matrix.years:
            s = matrix.score(doc_id, y)
            row.append("" if s is None else _fmt(s.total, precision))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
