"""Minimal reader for the proposals line format (UTF-8 JSON lines)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

COMPONENTS = ("title", "objectives", "contents", "outcomes")


@dataclass(frozen=True)
class Proposal:
    doc_id: str
    year: int
    is_new: bool
    title: str
    objectives: str
    contents: str
    outcomes: str

    def component_text(self, component: str) -> str:
        return getattr(self, component)

    def concatenated_text(self) -> str:
        return " ".join(getattr(self, c) for c in COMPONENTS).strip()


def read_proposals(path: str | Path) -> list[Proposal]:
    proposals = []
    seen: set[str] = set()
    for line_no, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            proposal = Proposal(
                doc_id=str(obj["doc_id"]),
                year=int(obj["year"]),
                is_new=bool(obj["is_new"]),
                title=str(obj["title"]),
                objectives=str(obj["objectives"]),
                contents=str(obj["contents"]),
                outcomes=str(obj["outcomes"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{line_no}: bad proposal record: {exc}") from exc
        if proposal.doc_id in seen:
            raise ValueError(f"{path}:{line_no}: duplicate doc_id {proposal.doc_id!r}")
        seen.add(proposal.doc_id)
        proposals.append(proposal)
    return proposals


def new_proposals_through(proposals: list[Proposal], model_year: int) -> list[Proposal]:
    """Newly selected proposals with selection year <= model_year, id order."""
    picked = [p for p in proposals if p.is_new and p.year <= model_year]
    return sorted(picked, key=lambda p: p.doc_id)
