"""Physical source files and the byte-level provenance they anchor."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import NotFoundError

TEXT_EXTENSIONS = {".txt", ".md", ".text"}
HTML_EXTENSIONS = {".html", ".htm"}
CSV_EXTENSIONS = {".csv"}


@dataclass(frozen=True)
class SourceFile:
    """A physical file: the root of every trace in the system.

    ``data`` is kept verbatim; all byte ranges elsewhere index into it.
    """

    id: str
    name: str
    data: bytes
    attrs: dict = field(default_factory=dict)

    @property
    def extension(self) -> str:
        return Path(self.name).suffix.lower()

    @property
    def text(self) -> str:
        return self.data.decode("utf-8", errors="replace")

    def digest(self) -> str:
        return hashlib.sha256(self.data).hexdigest()

    def slice(self, start: int, end: int) -> str:
        if not (0 <= start <= end <= len(self.data)):
            raise ValueError(f"range ({start}, {end}) outside file {self.id!r}")
        return self.data[start:end].decode("utf-8", errors="replace")


def load_source(path: str | Path, file_id: str | None = None, attrs: dict | None = None) -> SourceFile:
    p = Path(path)
    if not p.is_file():
        raise NotFoundError(f"no such file: {p}")
    data = p.read_bytes()
    return SourceFile(id=file_id or p.name, name=p.name, data=data, attrs=dict(attrs or {}))


def source_from_text(text: str, file_id: str = "inline.txt", attrs: dict | None = None) -> SourceFile:
    """Wrap literal text as a source file (queries, fixtures, backgrounds)."""
    return SourceFile(id=file_id, name=file_id, data=text.encode("utf-8"), attrs=dict(attrs or {}))


def load_corpus(directory: str | Path, extensions: set[str] | None = None) -> list[SourceFile]:
    """Load every document under a directory, sorted by name for determinism."""
    d = Path(directory)
    if not d.is_dir():
        raise NotFoundError(f"no such directory: {d}")
    allowed = extensions or (TEXT_EXTENSIONS | HTML_EXTENSIONS | CSV_EXTENSIONS)
    files = sorted(p for p in d.rglob("*") if p.is_file() and p.suffix.lower() in allowed)
    return [load_source(p, file_id=str(p.relative_to(d))) for p in files]
