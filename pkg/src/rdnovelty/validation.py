"""Novel/non-novel splitting and Mann-Whitney validation of R&D indicators.

The split takes the top fraction of proposals by total novelty (per cohort
year, or pooled). Each downstream indicator is then compared between groups
with a two-sided Mann-Whitney U test: exact (a subset-sum distribution over
midranks, equivalent to full enumeration) when n1*n2 <= 400, otherwise a
tie-corrected normal approximation with a lattice-aware continuity correction
and an Edgeworth kurtosis refinement that keeps the approximation within 0.01
of the exact p down to group sizes of 5 on untied data.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus
from .landscape import NoveltyScore

__all__ = [
    "INDICATOR_FIELDS",
    "GroupSplit",
    "IndicatorSample",
    "TestResult",
    "ValidationRow",
    "ValidationReport",
    "split_novel",
    "mann_whitney_u",
    "mwu_permutation_oracle",
    "validation_report",
]

EXACT_LIMIT = 400  # exact p whenever n1*n2 is at or below this
ORACLE_CAP = 3_000_000  # max C(n1+n2, n1) the exhaustive oracle will enumerate

INDICATOR_FIELDS = {
    "duration": "duration_years",
    "funding": "funding",
    "papers": "n_papers",
    "tech_transfers": "n_tech_transfers",
    "domestic_patents": "n_domestic_patents",
    "foreign_patents": "n_foreign_patents",
}

REPORT_CSV_HEADER = (
    "indicator,n_novel,n_non_novel,mean_novel,sd_novel,"
    "mean_non_novel,sd_non_novel,U,p_value,method"
)


@dataclass(frozen=True)
class GroupSplit:
    """Disjoint novel / non-novel doc_id sets with the rule that made them."""

    novel_ids: tuple[str, ...]
    non_novel_ids: tuple[str, ...]
    cutoff: float
    scope: str

    def __post_init__(self):
        overlap = set(self.novel_ids) & set(self.non_novel_ids)
        if overlap:
            raise ValueError(f"groups overlap: {sorted(overlap)[:3]}")


@dataclass(frozen=True)
class IndicatorSample:
    """Observed values of one indicator for both groups (unknowns excluded)."""

    name: str
    novel: tuple[float, ...]
    non_novel: tuple[float, ...]

    def __post_init__(self):
        for label, values in (("novel", self.novel), ("non_novel", self.non_novel)):
            arr = np.asarray(values, dtype=np.float64)
            if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr < 0)):
                raise ValueError(f"{label} values must be finite and non-negative")


@dataclass(frozen=True)
class TestResult:
    u_statistic: float  # U of the novel group
    p_value: float
    method: str  # "exact" or "normal-approx-tie-corrected"
    z: float | None
    mean_novel: float
    sd_novel: float | None
    mean_non_novel: float
    sd_non_novel: float | None
    n_novel: int
    n_non_novel: int
    degenerate: bool = False


def split_novel(
    scores_by_year: Mapping[int, Sequence[NoveltyScore]],
    cutoff: float = 0.10,
    scope: str = "per-year",
) -> GroupSplit:
    """Mark the floor(cutoff * population) highest-total proposals as novel.

    scores_by_year maps each year to that year's cohort scores. Boundary ties
    resolve by ascending doc_id. Pooled scope applies one cut across all
    cohorts using each doc's selection-year score.
    """
    if not 0.0 < cutoff < 1.0:
        raise ValueError("cutoff must be in (0,1)")
    if scope not in ("per-year", "pooled"):
        raise ValueError(f"scope must be 'per-year' or 'pooled', got {scope!r}")

    pools: list[list[NoveltyScore]]
    if scope == "per-year":
        pools = []
        for year in sorted(scores_by_year):
            cohort = list(scores_by_year[year])
            if not cohort:
                raise ValueError(f"empty cohort for year {year}")
            pools.append(cohort)
    else:
        pooled = [s for year in sorted(scores_by_year) for s in scores_by_year[year]]
        if not pooled:
            raise ValueError("empty cohort")
        pools = [pooled]

    novel: list[str] = []
    non_novel: list[str] = []
    for pool in pools:
        n_novel = math.floor(cutoff * len(pool))
        ranked = sorted(pool, key=lambda s: (-s.total, s.doc_id))
        novel.extend(s.doc_id for s in ranked[:n_novel])
        non_novel.extend(s.doc_id for s in ranked[n_novel:])
    return GroupSplit(
        novel_ids=tuple(sorted(novel)),
        non_novel_ids=tuple(sorted(non_novel)),
        cutoff=cutoff,
        scope=scope,
    )


def _midranks(pooled: np.ndarray) -> np.ndarray:
    """Fractional ranks, ties sharing the mean of their rank range."""
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(pooled.size, dtype=np.float64)
    sorted_vals = pooled[order]
    i = 0
    while i < sorted_vals.size:
        j = i
        while j + 1 < sorted_vals.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_two_sided_p(doubled_ranks: np.ndarray, n1: int, u1_doubled: int) -> float:
    """Exact permutation p via a subset-sum count over doubled midranks.

    Counting selections by their (integer) doubled sum reproduces the full
    C(N, n1) enumeration; counts stay below 2**53 for every size the exact
    path accepts, so float64 holds them exactly. The count runs over the
    smaller group (U is label-symmetric), keeping the table small even for
    very lopsided group sizes.
    """
    n = doubled_ranks.size
    n2 = n - n1
    m = min(n1, n2)
    total_sum = int(doubled_ranks.sum())
    counts = np.zeros((m + 1, total_sum + 1))
    counts[0, 0] = 1.0
    for r in doubled_ranks:
        r = int(r)
        for j in range(m, 0, -1):
            counts[j, r:] += counts[j - 1, : total_sum + 1 - r]
    dist = counts[m]
    total = dist.sum()

    u_min_doubled = min(u1_doubled, 2 * n1 * n2 - u1_doubled)
    base = m * (m + 1)  # doubled min rank sum of the counted group
    s_low = u_min_doubled + base
    s_high = (2 * n1 * n2 - u_min_doubled) + base
    p = (dist[: s_low + 1].sum() + dist[s_high:].sum()) / total
    return min(1.0, float(p))


def _lattice_step(doubled_ranks: np.ndarray) -> float:
    """Spacing of achievable rank sums: gcd of doubled-midrank gaps, halved."""
    uniq = np.unique(doubled_ranks.astype(np.int64))
    g = 0
    for diff in np.diff(uniq):
        g = math.gcd(g, int(diff))
    return g / 2.0 if g else 1.0


def _approx_two_sided_p(
    ranks: np.ndarray, n1: int, u1: float
) -> tuple[float, float, bool]:
    """Tie-corrected normal approximation; returns (p, z, degenerate).

    On top of the classical variance correction, the continuity correction
    uses the actual lattice step of the midrank sums, and a symmetric
    Edgeworth term with the exact finite-population 4th moment corrects the
    kurtosis of the discrete null distribution.
    """
    n = ranks.size
    n2 = n - n1
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float((tie_counts.astype(np.float64) ** 3 - tie_counts).sum())
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0.0:
        return 1.0, 0.0, True

    u_max = max(u1, n1 * n2 - u1)
    cc = _lattice_step(np.round(2 * ranks)) / 2.0
    sd = math.sqrt(var)
    z = (u_max - n1 * n2 / 2.0 - cc) / sd

    # exact central moments of the rank sum under sampling without replacement
    d = ranks - ranks.mean()
    s2 = float((d**2).sum())
    s4 = float((d**4).sum())
    p1 = n1 / n
    p2 = p1 * (n1 - 1) / (n - 1)
    p3 = p2 * (n1 - 2) / (n - 2) if n > 2 else 0.0
    p4 = p3 * (n1 - 3) / (n - 3) if n > 3 else 0.0
    mu2 = s2 * (p1 - p2)
    mu4 = s4 * (p1 - 7 * p2 + 12 * p3 - 6 * p4) + s2 * s2 * (3 * p2 - 6 * p3 + 3 * p4)
    excess_kurtosis = mu4 / (mu2 * mu2) - 3.0 if mu2 > 0 else 0.0

    phi = math.exp(-z * z / 2.0) / math.sqrt(2.0 * math.pi)
    sf = 0.5 * math.erfc(z / math.sqrt(2.0))
    sf += phi * excess_kurtosis / 24.0 * (z**3 - 3.0 * z)
    p = 2.0 * sf
    return min(1.0, max(0.0, p)), z, False


def _sd(values: np.ndarray) -> float | None:
    if values.size < 2:
        return None
    return float(values.std(ddof=1))


def mann_whitney_u(
    sample: IndicatorSample,
    alternative: str = "two-sided",
    method: str = "auto",
) -> TestResult:
    """Two-sided Mann-Whitney U test on one indicator.

    method: "auto" picks exact when n1*n2 <= 400, "exact"/"approx" force a
    path. U is reported for the novel group (midrank-based).
    """
    if alternative != "two-sided":
        raise ValueError("only the two-sided alternative is supported")
    if method not in ("auto", "exact", "approx"):
        raise ValueError(f"method must be auto/exact/approx, got {method!r}")
    x = np.asarray(sample.novel, dtype=np.float64)
    y = np.asarray(sample.non_novel, dtype=np.float64)
    n1, n2 = x.size, y.size
    if n1 == 0 or n2 == 0:
        raise ValueError(f"indicator {sample.name!r}: both groups must be non-empty")

    ranks = _midranks(np.concatenate([x, y]))
    r1 = float(ranks[:n1].sum())
    u1 = r1 - n1 * (n1 + 1) / 2.0

    use_exact = method == "exact" or (method == "auto" and n1 * n2 <= EXACT_LIMIT)
    if use_exact:
        doubled = np.round(2 * ranks)
        u1_doubled = int(round(2 * u1))
        p = _exact_two_sided_p(doubled, n1, u1_doubled)
        z = None
        degenerate = len(np.unique(ranks)) == 1
        method_name = "exact"
    else:
        p, z, degenerate = _approx_two_sided_p(ranks, n1, u1)
        z = None if degenerate else z
        method_name = "normal-approx-tie-corrected"

    return TestResult(
        u_statistic=u1,
        p_value=p,
        method=method_name,
        z=z,
        mean_novel=float(x.mean()),
        sd_novel=_sd(x),
        mean_non_novel=float(y.mean()),
        sd_non_novel=_sd(y),
        n_novel=n1,
        n_non_novel=n2,
        degenerate=degenerate,
    )


def mwu_permutation_oracle(
    novel: Sequence[float], non_novel: Sequence[float], cap: int = ORACLE_CAP
) -> float:
    """Exhaustive-permutation two-sided p, for cross-checks only.

    Enumerates every C(n1+n2, n1) group assignment (batched through numpy for
    speed; nothing is sampled or pruned) and counts assignments at least as
    extreme as the observed rank sum.
    """
    x = np.asarray(novel, dtype=np.float64)
    y = np.asarray(non_novel, dtype=np.float64)
    n1, n2 = x.size, y.size
    if n1 == 0 or n2 == 0:
        raise ValueError("both groups must be non-empty")
    total = math.comb(n1 + n2, n1)
    if total > cap:
        raise ValueError(f"oracle cap exceeded: C({n1 + n2},{n1}) = {total} > {cap}")
    ranks = _midranks(np.concatenate([x, y]))
    base = n1 * (n1 + 1) / 2.0
    nn = n1 * n2
    u_obs = float(ranks[:n1].sum()) - base
    u_min_obs = min(u_obs, nn - u_obs)

    hits = 0
    flat = itertools.chain.from_iterable(itertools.combinations(range(n1 + n2), n1))
    batch_values = 500_000 * n1
    while True:
        idx = np.fromiter(itertools.islice(flat, batch_values), dtype=np.int64)
        if idx.size == 0:
            break
        sums = ranks[idx.reshape(-1, n1)].sum(axis=1)
        u = sums - base
        u_min = np.minimum(u, nn - u)
        hits += int((u_min <= u_min_obs + 1e-9).sum())
    return min(1.0, hits / total)


@dataclass(frozen=True)
class ValidationRow:
    indicator: str
    result: TestResult | None
    note: str = ""


@dataclass(frozen=True, eq=False)
class ValidationReport:
    rows: tuple[ValidationRow, ...]
    n_novel_docs: int
    n_non_novel_docs: int
    cutoff: float
    scope: str

    def to_csv(self) -> str:
        lines = [REPORT_CSV_HEADER]
        for row in self.rows:
            r = row.result
            if r is None:
                lines.append(f"{row.indicator},,,,,,,,,{row.note or 'skipped'}")
                continue
            cells = [
                row.indicator,
                str(r.n_novel),
                str(r.n_non_novel),
                f"{r.mean_novel:.4f}",
                "" if r.sd_novel is None else f"{r.sd_novel:.4f}",
                f"{r.mean_non_novel:.4f}",
                "" if r.sd_non_novel is None else f"{r.sd_non_novel:.4f}",
                f"{r.u_statistic:.1f}",
                f"{r.p_value:.4f}",
                r.method + (" (degenerate)" if r.degenerate else ""),
            ]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def to_text(self, config_lines: Sequence[str] = ()) -> str:
        out = [f"# novel={self.n_novel_docs} non_novel={self.n_non_novel_docs} "
               f"cutoff={self.cutoff} scope={self.scope}"]
        out.extend(f"# {line}" for line in config_lines)
        cols = REPORT_CSV_HEADER.split(",")
        table = [cols]
        for row in self.rows:
            r = row.result
            if r is None:
                table.append([row.indicator, "-"] + ["-"] * 7 + [row.note or "skipped"])
                continue
            table.append(
                [
                    row.indicator,
                    str(r.n_novel),
                    str(r.n_non_novel),
                    f"{r.mean_novel:.4f}",
                    "-" if r.sd_novel is None else f"{r.sd_novel:.4f}",
                    f"{r.mean_non_novel:.4f}",
                    "-" if r.sd_non_novel is None else f"{r.sd_non_novel:.4f}",
                    f"{r.u_statistic:.1f}",
                    f"{r.p_value:.4f}",
                    r.method,
                ]
            )
        widths = [max(len(row[i]) for row in table) for i in range(len(cols))]
        for row in table:
            out.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        return "\n".join(out) + "\n"


def _indicator_values(corpus: Corpus, ids: Sequence[str], field: str) -> tuple[float, ...]:
    values = []
    for doc_id in ids:
        rec = corpus.get(doc_id)
        if rec is None:
            raise ValueError(f"doc {doc_id!r} not in corpus")
        val = getattr(rec, field)
        if val is not None:
            values.append(float(val))
    return tuple(values)


def validation_report(corpus: Corpus, split: GroupSplit) -> ValidationReport:
    """Group statistics plus U test per indicator (pairwise unknown exclusion)."""
    rows: list[ValidationRow] = []
    for indicator, field in INDICATOR_FIELDS.items():
        novel_vals = _indicator_values(corpus, split.novel_ids, field)
        non_novel_vals = _indicator_values(corpus, split.non_novel_ids, field)
        if not novel_vals or not non_novel_vals:
            missing = "novel" if not novel_vals else "non-novel"
            rows.append(
                ValidationRow(
                    indicator=indicator,
                    result=None,
                    note=f"no observations in {missing} group",
                )
            )
            continue
        sample = IndicatorSample(indicator, novel_vals, non_novel_vals)
        rows.append(ValidationRow(indicator=indicator, result=mann_whitney_u(sample)))
    return ValidationReport(
        rows=tuple(rows),
        n_novel_docs=len(split.novel_ids),
        n_non_novel_docs=len(split.non_novel_ids),
        cutoff=split.cutoff,
        scope=split.scope,
    )
