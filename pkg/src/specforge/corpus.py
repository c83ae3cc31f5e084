"""Corpus loading and overlapping chunking with provenance.

Documents get content-hash ids over normalized text, so ids are stable
across reloads and across machines. Chunk offsets always index into the
normalized document text.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

SPLIT_BOUNDARIES = ("word", "sentence", "hard")
_SENTENCE_END = ".!?"
_CLOSERS = "\"')]"


class CorpusError(ValueError):
    pass


class EmptyCorpusError(CorpusError):
    pass


@dataclass(frozen=True)
class Document:
    doc_id: str
    source_path: str
    text: str
    title: str | None = None
    domain_tag: str | None = None


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    ordinal: int
    text: str
    char_start: int
    char_end: int


@dataclass(frozen=True)
class ChunkPolicy:
    max_chars: int = 8_000
    overlap_chars: int = 800
    split_boundary: str = "sentence"

    def __post_init__(self):
        if self.max_chars <= 0:
            raise CorpusError("max_chars must be positive")
        if not 0 <= self.overlap_chars < self.max_chars:
            raise CorpusError("overlap_chars must satisfy 0 <= overlap < max_chars")
        if self.split_boundary not in SPLIT_BOUNDARIES:
            raise CorpusError(f"split_boundary must be one of {SPLIT_BOUNDARIES}")


@dataclass
class CorpusLoadResult:
    documents: list[Document]
    skipped: list[dict] = field(default_factory=list)  # {"path", "reason"}

    def write_report(self, path: str | Path) -> None:
        lines = [json.dumps(entry, ensure_ascii=False) for entry in self.skipped]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def normalize_document_text(raw: str) -> str:
    """BOM stripped, line endings to LF, runs of >2 blank lines capped at 2."""
    text = raw.lstrip("﻿").replace("\r\n", "\n").replace("\r", "\n")
    out: list[str] = []
    blanks = 0
    for line in text.split("\n"):
        if line.strip() == "":
            blanks += 1
            if blanks <= 2:
                out.append("")
        else:
            blanks = 0
            out.append(line)
    return "\n".join(out)


def document_id(normalized_text: str) -> str:
    return hashlib.sha256(normalized_text.encode("utf-8")).hexdigest()[:16]


def _title_of(text: str) -> str | None:
    for line in text.split("\n"):
        stripped = line.strip()
        if stripped.startswith("# "):
            return stripped[2:].strip() or None
        if stripped:
            return None
    return None


def load_corpus(
    root_path: str | Path,
    include_globs: Sequence[str] = ("**/*.md", "**/*.txt"),
) -> CorpusLoadResult:
    """Load every file matching the globs under ``root_path``.

    Per-file failures (unreadable, undecodable, empty after normalization,
    duplicate content) are recorded in the skip report and the load
    continues; matching zero readable documents is fatal.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise CorpusError(f"corpus root {root} is not a readable directory")
    paths = sorted({p for pattern in include_globs for p in root.glob(pattern) if p.is_file()})
    documents: list[Document] = []
    skipped: list[dict] = []
    seen_ids: dict[str, str] = {}
    for p in paths:
        try:
            raw = p.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            skipped.append({"path": str(p), "reason": f"unreadable: {exc}"})
            continue
        text = normalize_document_text(raw)
        if not text.strip():
            skipped.append({"path": str(p), "reason": "empty after normalization"})
            continue
        doc_id = document_id(text)
        if doc_id in seen_ids:
            skipped.append({"path": str(p), "reason": f"duplicate content of {seen_ids[doc_id]}"})
            continue
        seen_ids[doc_id] = str(p)
        rel_parent = p.parent.relative_to(root)
        documents.append(
            Document(
                doc_id=doc_id,
                source_path=str(p),
                text=text,
                title=_title_of(text),
                domain_tag=rel_parent.parts[0] if rel_parent.parts else None,
            )
        )
    if not documents:
        raise EmptyCorpusError(f"empty corpus: no readable documents under {root}")
    return CorpusLoadResult(documents=documents, skipped=skipped)


def _is_word_cut(text: str, p: int) -> bool:
    # cutting at p keeps maximal non-whitespace runs intact
    return text[p - 1].isspace() or text[p].isspace()


def _is_sentence_cut(text: str, p: int) -> bool:
    if text[p - 1] == "\n":
        return True
    if not text[p - 1].isspace():
        return False
    i = p - 1
    while i > 0 and text[i - 1].isspace():
        i -= 1
    while i > 0 and text[i - 1] in _CLOSERS:
        i -= 1
    return i > 0 and text[i - 1] in _SENTENCE_END


def _find_cut(text: str, lo: int, hi: int, boundary: str) -> int | None:
    """Largest valid cut position in (lo, hi], or None."""
    if boundary == "sentence":
        for p in range(hi, lo, -1):
            if _is_sentence_cut(text, p):
                return p
    for p in range(hi, lo, -1):
        if _is_word_cut(text, p):
            return p
    return None


def chunk_document(doc: Document, policy: ChunkPolicy) -> list[Chunk]:
    """Split into chunks of at most max_chars that cover the text.

    Consecutive chunks overlap by overlap_chars; word/sentence boundaries
    shift cuts backward so no boundary lands inside a word, falling back to
    a hard split when a single word exceeds the window.
    """
    text = doc.text
    n = len(text)
    chunks: list[Chunk] = []

    def emit(start: int, end: int) -> None:
        chunks.append(
            Chunk(
                chunk_id=f"{doc.doc_id}#{len(chunks)}",
                doc_id=doc.doc_id,
                ordinal=len(chunks),
                text=text[start:end],
                char_start=start,
                char_end=end,
            )
        )

    start = 0
    prev_end = 0
    while True:
        window_end = start + policy.max_chars
        if window_end >= n:
            emit(start, n)
            break
        cut = None
        if policy.split_boundary != "hard":
            cut = _find_cut(text, max(start, prev_end), window_end, policy.split_boundary)
        if cut is None:
            cut = window_end
        emit(start, cut)
        prev_end = cut
        next_start = cut - policy.overlap_chars
        if policy.split_boundary != "hard" and next_start > start:
            adjusted = _find_cut(text, start, next_start, "word")
            if adjusted is not None:
                next_start = adjusted
        if next_start <= start:
            next_start = start + 1  # degenerate overlap; force progress
        start = next_start
    return chunks


def reconstruct_text(chunks: Sequence[Chunk]) -> str:
    """Rebuild document text from ordered chunks by dropping overlap prefixes."""
    parts: list[str] = []
    prev_end = 0
    for chunk in sorted(chunks, key=lambda c: c.ordinal):
        parts.append(chunk.text[prev_end - chunk.char_start :])
        prev_end = chunk.char_end
    return "".join(parts)
