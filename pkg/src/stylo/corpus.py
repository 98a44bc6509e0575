"""Ingest, validate, filter, and index labeled documents with base embeddings.

The on-disk format is one JSON object per line with required keys
``doc_id``, ``author_id``, ``genre``, ``word_count``, ``embedding`` and an
optional ``text``. A Corpus is immutable after load and safe for concurrent
reads; iteration order is the insertion order of the source file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_MIN_WORDS = 350

_REQUIRED_KEYS = ("doc_id", "author_id", "genre", "word_count", "embedding")


class CorpusError(ValueError):
    """Raised for unreadable, malformed, or inconsistent corpus data."""


@dataclass(frozen=True)
class Document:
    doc_id: str
    author_id: str
    genre: str
    word_count: int
    base_embedding: np.ndarray
    text: str | None = None


@dataclass
class Corpus:
    """Ordered document collection with an author index and fixed dimension."""

    documents: list[Document] = field(default_factory=list)
    author_index: dict[str, list[int]] = field(default_factory=dict)
    dimension: int | None = None
    _id_index: dict[str, int] = field(default_factory=dict, repr=False)
    _matrix: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.documents)

    def __getitem__(self, doc_id: str) -> Document:
        return self.documents[self._id_index[doc_id]]

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._id_index

    @property
    def authors(self) -> list[str]:
        return list(self.author_index)

    def docs_for_author(self, author_id: str) -> list[Document]:
        return [self.documents[i] for i in self.author_index.get(author_id, [])]

    def embedding_matrix(self) -> np.ndarray:
        """All base embeddings stacked in document order (cached)."""
        if self._matrix is None:
            self._matrix = np.stack([d.base_embedding for d in self.documents])
        return self._matrix

    def position(self, doc_id: str) -> int:
        return self._id_index[doc_id]


def _build_corpus(documents: list[Document], dimension: int | None) -> Corpus:
    author_index: dict[str, list[int]] = {}
    id_index: dict[str, int] = {}
    for pos, doc in enumerate(documents):
        author_index.setdefault(doc.author_id, []).append(pos)
        id_index[doc.doc_id] = pos
    return Corpus(
        documents=documents,
        author_index=author_index,
        dimension=dimension,
        _id_index=id_index,
    )


def _parse_record(raw: str, line_no: int, expect_dim: int | None) -> Document:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise CorpusError(f"line {line_no}: record is not a key-value object")
    for key in _REQUIRED_KEYS:
        if key not in obj:
            raise CorpusError(f"line {line_no}: missing required key {key!r}")
    if not isinstance(obj["doc_id"], str) or not isinstance(obj["author_id"], str):
        raise CorpusError(f"line {line_no}: doc_id and author_id must be strings")
    if not isinstance(obj["genre"], str):
        raise CorpusError(f"line {line_no}: genre must be a string")
    word_count = obj["word_count"]
    if not isinstance(word_count, int) or isinstance(word_count, bool) or word_count < 0:
        raise CorpusError(f"line {line_no}: word_count must be a non-negative integer")
    emb = obj["embedding"]
    if not isinstance(emb, list) or not emb or not all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in emb
    ):
        raise CorpusError(f"line {line_no}: embedding must be a non-empty array of numbers")
    if expect_dim is not None and len(emb) != expect_dim:
        raise CorpusError(
            f"line {line_no}: embedding dimension {len(emb)}, expected {expect_dim}"
        )
    vector = np.asarray(emb, dtype=np.float64)
    vector.setflags(write=False)
    return Document(
        doc_id=obj["doc_id"],
        author_id=obj["author_id"],
        genre=obj["genre"],
        word_count=word_count,
        base_embedding=vector,
        text=obj.get("text"),
    )


def load_corpus(path: str | Path) -> Corpus:
    """Load a line-delimited record file into a Corpus.

    Every non-empty line must be a well-formed record; errors report the
    offending line number. The corpus dimension is set by the first record
    and enforced on the rest. Duplicate doc_id is a hard error.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc

    documents: list[Document] = []
    seen: set[str] = set()
    dimension: int | None = None
    for line_no, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        doc = _parse_record(raw, line_no, dimension)
        if dimension is None:
            dimension = doc.base_embedding.shape[0]
        if doc.doc_id in seen:
            raise CorpusError(f"line {line_no}: duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        documents.append(doc)
    return _build_corpus(documents, dimension)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus back to the line-delimited record format."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            record: dict = {
                "doc_id": doc.doc_id,
                "author_id": doc.author_id,
                "genre": doc.genre,
                "word_count": doc.word_count,
                "embedding": [float(x) for x in doc.base_embedding],
            }
            if doc.text is not None:
                record["text"] = doc.text
            fh.write(json.dumps(record) + "\n")


def filter_min_words(corpus: Corpus, min_words: int = DEFAULT_MIN_WORDS) -> Corpus:
    """Keep exactly the documents with word_count strictly above min_words.

    The author index is rebuilt; authors left with no documents disappear.
    An empty result is legal.
    """
    kept = [d for d in corpus.documents if d.word_count > min_words]
    return _build_corpus(kept, corpus.dimension)
