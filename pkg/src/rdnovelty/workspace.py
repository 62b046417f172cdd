"""File-based workspace: layout, atomic writes, locking, embedding directory store.

Layout under the root: corpus/proposals.jsonl, embeddings/<year>_<component>.emb,
scores/<year>.csv (plus novelty_matrix.csv), reports/. All paths derive
deterministically from the root; nothing is written outside it.
"""

from __future__ import annotations

import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

from .config import RunConfig
from .embeddings import ComponentTag, EmbeddingMatrix, read_embeddings

__all__ = [
    "WorkspaceError",
    "Workspace",
    "DirectoryMatrixStore",
    "atomic_write_bytes",
    "atomic_write_text",
]


class WorkspaceError(RuntimeError):
    """Workspace layout or locking problem."""


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write via temp file + rename so readers never see partial output."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


@dataclass(frozen=True)
class Workspace:
    root: Path

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))

    @property
    def corpus_dir(self) -> Path:
        return self.root / "corpus"

    @property
    def embeddings_dir(self) -> Path:
        return self.root / "embeddings"

    @property
    def scores_dir(self) -> Path:
        return self.root / "scores"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    @property
    def corpus_path(self) -> Path:
        return self.corpus_dir / "proposals.jsonl"

    def embedding_path(self, model_year: int, component: ComponentTag) -> Path:
        return self.embeddings_dir / f"{model_year}_{component.field_name}.emb"

    def scores_path(self, year: int) -> Path:
        return self.scores_dir / f"{year}.csv"

    @property
    def matrix_path(self) -> Path:
        return self.scores_dir / "novelty_matrix.csv"

    @property
    def validation_csv_path(self) -> Path:
        return self.reports_dir / "validation.csv"

    @property
    def validation_txt_path(self) -> Path:
        return self.reports_dir / "validation.txt"

    @property
    def split_csv_path(self) -> Path:
        return self.reports_dir / "split.csv"

    @property
    def summary_path(self) -> Path:
        return self.reports_dir / "summary.txt"

    def ensure_layout(self) -> None:
        for d in (self.corpus_dir, self.embeddings_dir, self.scores_dir, self.reports_dir):
            d.mkdir(parents=True, exist_ok=True)

    def write_config_sidecar(self, output: Path, config: RunConfig) -> Path:
        """Persist the exact config next to an output file."""
        sidecar = output.with_name(output.name + ".config.json")
        atomic_write_text(sidecar, config.to_json())
        return sidecar

    @contextmanager
    def lock(self):
        """Advisory lock; concurrent commands on one workspace are unsupported."""
        self.root.mkdir(parents=True, exist_ok=True)
        lock_path = self.root / ".lock"
        try:
            fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise WorkspaceError(
                f"workspace {self.root} is locked ({lock_path} exists); "
                "another command may be running"
            ) from None
        try:
            os.write(fd, str(os.getpid()).encode())
            os.close(fd)
            yield
        finally:
            try:
                os.unlink(lock_path)
            except OSError:
                pass


class DirectoryMatrixStore:
    """Embedding store over a workspace embeddings/ directory (EMB1 files)."""

    def __init__(self, workspace: Workspace):
        self._ws = workspace
        self._cache: dict[tuple[int, ComponentTag], EmbeddingMatrix] = {}

    def get(self, model_year: int, component: ComponentTag) -> EmbeddingMatrix | None:
        key = (model_year, component)
        if key in self._cache:
            return self._cache[key]
        path = self._ws.embedding_path(model_year, component)
        if not path.exists():
            return None
        matrix = read_embeddings(path.read_bytes())
        if matrix.model_year != model_year or matrix.component != component:
            raise WorkspaceError(
                f"{path} header says model_year={matrix.model_year} "
                f"component={matrix.component.field_name}, which contradicts its name"
            )
        self._cache[key] = matrix
        return matrix

    def model_years(self, component: ComponentTag) -> list[int]:
        years = []
        if self._ws.embeddings_dir.is_dir():
            suffix = f"_{component.field_name}.emb"
            for p in self._ws.embeddings_dir.iterdir():
                name = p.name
                if name.endswith(suffix):
                    head = name[: -len(suffix)]
                    if head.isdigit():
                        years.append(int(head))
        return sorted(years)
