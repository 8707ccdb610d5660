"""Corpus loading, overlapping chunking, and acronym/jargon expansion."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

SENTENCE_TERMINATORS = frozenset(".!?\n")

_WORD_RE = re.compile(r"[0-9A-Za-z_]")


class CorpusError(Exception):
    """Base class for corpus loading and chunking failures."""


class MissingCorpusDirectory(CorpusError):
    """The corpus path does not exist or is not a directory."""


class UnreadableDocument(CorpusError):
    """A corpus file could not be read or decoded as UTF-8."""


class EmptyCorpus(CorpusError):
    """The corpus directory contains no .txt or .md files."""


class EmptyDocument(CorpusError):
    """A corpus file is empty after whitespace trimming."""


class InvalidChunkPolicy(CorpusError):
    """Chunk policy violates 0 < overlap < target_size."""


@dataclass(frozen=True)
class Document:
    """A source text with a stable identifier (its corpus-relative path)."""

    doc_id: str
    title: str
    text: str


@dataclass(frozen=True)
class Chunk:
    """A contiguous span of one document, measured in code points.

    ``chunk_id`` is dense, 0-based, and global across the corpus; ``text``
    is always exactly ``document.text[start:end]``.
    """

    chunk_id: int
    doc_id: str
    start: int
    end: int
    text: str

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class ChunkPolicy:
    """Chunking parameters: span size, inter-chunk overlap, boundary mode.

    ``boundary_mode`` is ``"fixed"`` (spans on a strict arithmetic grid)
    or ``"sentence_aware"`` (span ends snapped backward to the nearest
    sentence terminator within ``overlap`` distance).
    """

    target_size: int = 1000
    overlap: int = 200
    boundary_mode: str = "fixed"

    def __post_init__(self) -> None:
        if not (0 < self.overlap < self.target_size):
            raise InvalidChunkPolicy(
                f"require 0 < overlap < target_size, got overlap={self.overlap} "
                f"target_size={self.target_size}"
            )
        if self.boundary_mode not in ("fixed", "sentence_aware"):
            raise InvalidChunkPolicy(f"unknown boundary_mode {self.boundary_mode!r}")


@dataclass(frozen=True)
class AcronymGlossary:
    """Case-sensitive acronym/jargon expansions applied to query text."""

    entries: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for key in self.entries:
            if not key:
                raise ValueError("glossary keys must be non-empty")

    @classmethod
    def from_json_file(cls, path: str | Path) -> "AcronymGlossary":
        with open(path, encoding="utf-8") as handle:
            raw = json.load(handle)
        if not isinstance(raw, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in raw.items()
        ):
            raise ValueError(f"glossary file {path} must be a JSON object of strings")
        return cls(entries=dict(raw))


def load_corpus(path: str | Path) -> list[Document]:
    """Load every .txt/.md file under ``path`` as one Document each.

    Documents are ordered lexicographically by their corpus-relative path,
    which also serves as ``doc_id``.
    """
    root = Path(path)
    if not root.is_dir():
        raise MissingCorpusDirectory(f"corpus directory not found: {root}")

    files = sorted(
        (p for p in root.rglob("*") if p.is_file() and p.suffix in (".txt", ".md")),
        key=lambda p: p.relative_to(root).as_posix(),
    )
    if not files:
        raise EmptyCorpus(f"empty corpus: no .txt or .md files under {root}")

    docs = []
    for file_path in files:
        doc_id = file_path.relative_to(root).as_posix()
        try:
            text = file_path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise UnreadableDocument(f"cannot read document {doc_id}: {exc}") from exc
        if not text.strip():
            raise EmptyDocument(f"empty document {doc_id}")
        docs.append(Document(doc_id=doc_id, title=file_path.stem, text=text))
    return docs


def _snap_boundary(text: str, start: int, fixed_end: int, overlap: int) -> int:
    """Snap a span end backward to just past the nearest sentence terminator.

    Only boundaries within ``overlap`` code points of ``fixed_end`` are
    considered, and a snapped boundary must still leave the next span
    (which starts at ``end - overlap``) strictly after ``start``.  Falls
    back to ``fixed_end`` when no terminator qualifies.
    """
    lowest = max(fixed_end - overlap, start + overlap + 1)
    for candidate in range(fixed_end, lowest - 1, -1):
        if text[candidate - 1] in SENTENCE_TERMINATORS:
            return candidate
    return fixed_end


def chunk_document(doc: Document, policy: ChunkPolicy, first_chunk_id: int = 0) -> list[Chunk]:
    """Split one document into overlapping chunks per ``policy``.

    Fixed mode places span starts at multiples of ``target_size - overlap``;
    sentence-aware mode additionally snaps each internal span end backward
    to a sentence terminator within ``overlap`` distance.  Spans always
    cover the full text and the final span ends at ``len(doc.text)``.
    """
    text = doc.text
    n = len(text)
    if n == 0:
        raise EmptyDocument(f"empty document {doc.doc_id}")

    chunks: list[Chunk] = []
    start = 0
    while True:
        fixed_end = start + policy.target_size
        if fixed_end >= n:
            chunks.append(
                Chunk(
                    chunk_id=first_chunk_id + len(chunks),
                    doc_id=doc.doc_id,
                    start=start,
                    end=n,
                    text=text[start:n],
                )
            )
            break
        end = fixed_end
        if policy.boundary_mode == "sentence_aware":
            end = _snap_boundary(text, start, fixed_end, policy.overlap)
        chunks.append(
            Chunk(
                chunk_id=first_chunk_id + len(chunks),
                doc_id=doc.doc_id,
                start=start,
                end=end,
                text=text[start:end],
            )
        )
        start = end - policy.overlap
    return chunks


def chunk_corpus(docs: list[Document], policy: ChunkPolicy) -> list[Chunk]:
    """Chunk every document, assigning dense corpus-global chunk ids."""
    chunks: list[Chunk] = []
    for doc in docs:
        chunks.extend(chunk_document(doc, policy, first_chunk_id=len(chunks)))
    return chunks


def expand_query(question: str, glossary: AcronymGlossary) -> str:
    """Expand whole-word glossary keys as ``KEY (expansion)``.

    Occurrences already followed by their expansion are left alone, and the
    inserted expansion text is never rescanned, so the operation is
    idempotent.  Matching is case-sensitive.
    """
    if not glossary.entries:
        return question

    keys = sorted(glossary.entries, key=len, reverse=True)
    pattern = re.compile(
        r"(?<![0-9A-Za-z_])(?:" + "|".join(re.escape(k) for k in keys) + r")(?![0-9A-Za-z_])"
    )

    out: list[str] = []
    pos = 0
    for match in pattern.finditer(question):
        if match.start() < pos:
            continue
        key = match.group(0)
        guard = f" ({glossary.entries[key]})"
        out.append(question[pos : match.start()])
        if question.startswith(guard, match.end()):
            # Already expanded: emit the whole region and skip past it so
            # keys inside the expansion are not touched.
            out.append(key + guard)
            pos = match.end() + len(guard)
        else:
            out.append(key + guard)
            pos = match.end()
    out.append(question[pos:])
    return "".join(out)
