"""Proposal corpus: ingestion, validation, text preprocessing, persistence.

A corpus is an immutable, deterministically ordered collection of proposal
records. The on-disk representation is UTF-8 JSON lines, one record per line,
sorted by (year, doc_id).
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, replace
from typing import IO, Iterable, Iterator, Mapping

__all__ = [
    "TEXT_COMPONENTS",
    "CorpusError",
    "DuplicateDocIdError",
    "ProposalRecord",
    "ParseIssue",
    "Corpus",
    "parse_proposals",
    "serialize_proposals",
    "preprocess_text",
    "preprocess_corpus",
    "select_new_cohort",
    "filter_by_classification",
]

TEXT_COMPONENTS = ("title", "objectives", "contents", "outcomes")

_OPTIONAL_INT_FIELDS = (
    "funding",
    "n_papers",
    "n_domestic_patents",
    "n_foreign_patents",
    "n_tech_transfers",
)

_FIELD_ORDER = (
    "doc_id",
    "year",
    "is_new",
    "classification_code",
    "title",
    "objectives",
    "contents",
    "outcomes",
    "funding",
    "duration_years",
    "n_papers",
    "n_domestic_patents",
    "n_foreign_patents",
    "n_tech_transfers",
)

_KNOWN_FIELDS = frozenset(_FIELD_ORDER)

DEFAULT_YEAR_RANGE = (1900, 2100)


class CorpusError(ValueError):
    """Invalid corpus content or operation."""


class DuplicateDocIdError(CorpusError):
    """Two records share a doc_id; the corpus cannot be built."""

    def __init__(self, doc_id: str):
        self.doc_id = doc_id
        super().__init__(f"duplicate doc_id {doc_id!r}")


@dataclass(frozen=True)
class ProposalRecord:
    """One funded proposal: four text components plus metadata and outcomes.

    Optional numeric fields are None when unknown; they are excluded pairwise
    from downstream statistics rather than imputed.
    """

    doc_id: str
    year: int
    is_new: bool
    title: str
    objectives: str
    contents: str
    outcomes: str
    classification_code: str | None = None
    funding: int | None = None
    duration_years: float | None = None
    n_papers: int | None = None
    n_domestic_patents: int | None = None
    n_foreign_patents: int | None = None
    n_tech_transfers: int | None = None

    def component_text(self, name: str) -> str:
        if name not in TEXT_COMPONENTS:
            raise KeyError(name)
        return getattr(self, name)

    def empty_components(self) -> tuple[str, ...]:
        """Names of text components that are empty (flagged, never dropped)."""
        return tuple(c for c in TEXT_COMPONENTS if not getattr(self, c).strip())


@dataclass(frozen=True)
class ParseIssue:
    """One problem found while parsing a proposals stream."""

    line_no: int
    severity: str  # "error" or "warning"
    message: str


@dataclass(frozen=True, eq=False)
class Corpus:
    """Immutable record collection ordered by (year, doc_id).

    year_index maps each year to the ascending doc_ids of the proposals newly
    selected that year (is_new records only).
    """

    records: tuple[ProposalRecord, ...]
    year_index: Mapping[int, tuple[str, ...]]

    @classmethod
    def from_records(cls, records: Iterable[ProposalRecord]) -> "Corpus":
        ordered = sorted(records, key=lambda r: (r.year, r.doc_id))
        seen: set[str] = set()
        for rec in ordered:
            if rec.doc_id in seen:
                raise DuplicateDocIdError(rec.doc_id)
            seen.add(rec.doc_id)
        index: dict[int, list[str]] = {}
        for rec in ordered:
            if rec.is_new:
                index.setdefault(rec.year, []).append(rec.doc_id)
        year_index = {y: tuple(sorted(ids)) for y, ids in sorted(index.items())}
        return cls(records=tuple(ordered), year_index=year_index)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ProposalRecord]:
        return iter(self.records)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return self.records == other.records

    def get(self, doc_id: str) -> ProposalRecord | None:
        return self._by_id.get(doc_id)

    @property
    def _by_id(self) -> dict[str, ProposalRecord]:
        cached = getattr(self, "_by_id_cache", None)
        if cached is None:
            cached = {r.doc_id: r for r in self.records}
            object.__setattr__(self, "_by_id_cache", cached)
        return cached

    def years(self) -> tuple[int, ...]:
        """Distinct selection years present, ascending (all records)."""
        return tuple(sorted({r.year for r in self.records}))

    def new_years(self) -> tuple[int, ...]:
        """Years that have at least one newly selected proposal, ascending."""
        return tuple(self.year_index.keys())

    @property
    def year_range(self) -> tuple[int, int]:
        if not self.records:
            raise CorpusError("empty corpus has no year range")
        ys = self.years()
        return ys[0], ys[-1]


def _require_type(value: object, kind: type | tuple[type, ...], what: str):
    if isinstance(value, bool) and kind is not bool:
        raise ValueError(f"{what} must be {getattr(kind, '__name__', kind)}, got bool")
    if not isinstance(value, kind):
        raise ValueError(f"{what} has wrong type {type(value).__name__}")
    return value


def _record_from_obj(obj: dict, year_range: tuple[int, int]) -> tuple[ProposalRecord, list[str]]:
    """Build a record from a decoded JSON object; returns (record, warnings)."""
    warnings = [f"unknown field {k!r} ignored" for k in obj if k not in _KNOWN_FIELDS]

    for required in ("doc_id", "year", "is_new") + TEXT_COMPONENTS:
        if required not in obj:
            raise ValueError(f"missing field {required!r}")

    doc_id = _require_type(obj["doc_id"], str, "doc_id")
    if not doc_id:
        raise ValueError("doc_id must be non-empty")
    year = _require_type(obj["year"], int, "year")
    lo, hi = year_range
    if not lo <= year <= hi:
        raise ValueError(f"year {year} outside configured range {lo}..{hi}")
    is_new = obj["is_new"]
    if not isinstance(is_new, bool):
        raise ValueError("is_new must be a boolean")

    texts = {c: _require_type(obj[c], str, c) for c in TEXT_COMPONENTS}

    code = obj.get("classification_code")
    if code is not None:
        code = _require_type(code, str, "classification_code")

    ints: dict[str, int | None] = {}
    for name in _OPTIONAL_INT_FIELDS:
        val = obj.get(name)
        if val is not None:
            val = _require_type(val, int, name)
            if val < 0:
                raise ValueError(f"{name} must be non-negative")
        ints[name] = val

    duration = obj.get("duration_years")
    if duration is not None:
        duration = float(_require_type(duration, (int, float), "duration_years"))
        if duration < 0:
            raise ValueError("duration_years must be non-negative")

    record = ProposalRecord(
        doc_id=doc_id,
        year=year,
        is_new=is_new,
        classification_code=code,
        duration_years=duration,
        **texts,
        **ints,
    )
    warnings.extend(
        f"doc {doc_id!r}: component {c!r} is empty" for c in record.empty_components()
    )
    return record, warnings


def parse_proposals(
    source: bytes | str | IO,
    year_range: tuple[int, int] = DEFAULT_YEAR_RANGE,
) -> tuple[Corpus, list[ParseIssue]]:
    """Parse the proposals line format into a Corpus.

    Malformed lines are collected as error issues (with line numbers) and
    skipped; unknown fields and empty text components are warnings. A duplicate
    doc_id aborts with DuplicateDocIdError.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    else:
        text = source

    issues: list[ParseIssue] = []
    records: list[ProposalRecord] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            issues.append(ParseIssue(line_no, "error", f"invalid JSON: {exc.msg}"))
            continue
        if not isinstance(obj, dict):
            issues.append(ParseIssue(line_no, "error", "record is not an object"))
            continue
        try:
            record, warns = _record_from_obj(obj, year_range)
        except ValueError as exc:
            issues.append(ParseIssue(line_no, "error", str(exc)))
            continue
        records.append(record)
        issues.extend(ParseIssue(line_no, "warning", w) for w in warns)

    return Corpus.from_records(records), issues


def serialize_proposals(corpus: Corpus) -> str:
    """Render a corpus back to the proposals line format (canonical order)."""
    lines = []
    for rec in corpus.records:
        obj = {}
        for name in _FIELD_ORDER:
            value = getattr(rec, name)
            if value is None:
                continue
            obj[name] = value
        lines.append(json.dumps(obj, ensure_ascii=False))
    return "\n".join(lines) + ("\n" if lines else "")


def preprocess_text(
    raw: str,
    stopwords: Iterable[str] = (),
    *,
    remove_categories: str = "CPS",
    keep: str = "",
) -> str:
    """Clean one text: NFC-normalize, strip special characters and stopwords.

    Characters whose Unicode major category is in remove_categories (default:
    control, punctuation, symbol) are deleted unless listed in `keep`;
    whitespace runs collapse to single spaces; stopwords are removed as whole
    tokens, case-insensitively. Idempotent.
    """
    normalized = unicodedata.normalize("NFC", raw)
    out: list[str] = []
    for ch in normalized:
        if ch.isspace():
            out.append(" ")
        elif ch not in keep and unicodedata.category(ch)[0] in remove_categories:
            continue
        else:
            out.append(ch)
    stopset = {s.casefold() for s in stopwords}
    tokens = [t for t in "".join(out).split() if t.casefold() not in stopset]
    return " ".join(tokens)


def preprocess_corpus(
    corpus: Corpus,
    stopwords: Iterable[str] = (),
    *,
    remove_categories: str = "CPS",
    keep: str = "",
) -> tuple[Corpus, list[tuple[str, str]]]:
    """Clean all four components of every record.

    Returns the cleaned corpus and (doc_id, component) pairs that came out
    empty; empty components are retained so matrices stay aligned.
    """
    stopset = frozenset(stopwords)
    cleaned: list[ProposalRecord] = []
    emptied: list[tuple[str, str]] = []
    for rec in corpus.records:
        texts = {
            c: preprocess_text(
                getattr(rec, c), stopset, remove_categories=remove_categories, keep=keep
            )
            for c in TEXT_COMPONENTS
        }
        new_rec = replace(rec, **texts)
        cleaned.append(new_rec)
        emptied.extend((rec.doc_id, c) for c in new_rec.empty_components())
    return Corpus.from_records(cleaned), emptied


def select_new_cohort(corpus: Corpus, year: int) -> list[str]:
    """doc_ids newly selected in `year`, ascending; continuations never appear."""
    lo, hi = corpus.year_range
    if not lo <= year <= hi:
        raise CorpusError(f"year {year} outside corpus range {lo}..{hi}")
    return list(corpus.year_index.get(year, ()))


def filter_by_classification(corpus: Corpus, code_prefix: str) -> Corpus:
    """Records whose classification code starts with code_prefix (None -> "")."""
    kept = [
        rec
        for rec in corpus.records
        if (rec.classification_code or "").startswith(code_prefix)
    ]
    return Corpus.from_records(kept)
