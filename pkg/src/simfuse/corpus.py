"""Document ingestion, text preprocessing and term statistics."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import IO, Iterable, Mapping

from simfuse.porter import PorterStemmer

__all__ = [
    "CollectionStats",
    "Document",
    "DuplicateDocId",
    "EmptyCorpus",
    "MalformedRecord",
    "PipelineConfig",
    "TermVector",
    "build_collection_stats",
    "build_term_vector",
    "load_corpus",
    "load_stopwords",
    "tokenize",
    "vectorize_corpus",
    "write_corpus",
]

# Maximal runs of alphanumeric characters; underscore is a separator.
_TOKEN_RE = re.compile(r"[^\W_]+")


class EmptyCorpus(ValueError):
    pass


class DuplicateDocId(ValueError):
    def __init__(self, doc_id: str, line: int):
        super().__init__(f"line {line}: duplicate document id {doc_id!r}")
        self.doc_id = doc_id
        self.line = line


class MalformedRecord(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")


@dataclass(frozen=True)
class PipelineConfig:
    lowercase: bool = True
    stopwords: frozenset[str] = frozenset()
    stemming: bool = True
    stemmer_mode: str = "reference"


def tokenize(text: str, config: PipelineConfig = PipelineConfig()) -> list[str]:
    """Split ``text`` into terms: lowercase, split, drop stopwords, then stem."""
    if config.lowercase:
        text = text.lower()
    tokens = _TOKEN_RE.findall(text)
    if config.stopwords:
        tokens = [t for t in tokens if t not in config.stopwords]
    if config.stemming:
        stemmer = PorterStemmer(config.stemmer_mode)
        cache: dict[str, str] = {}
        out = []
        for t in tokens:
            s = cache.get(t)
            if s is None:
                s = cache[t] = stemmer.stem(t)
            if s:
                out.append(s)
        tokens = out
    return tokens


@dataclass(frozen=True)
class TermVector:
    counts: Mapping[str, int]
    length: int

    def tf(self, term: str) -> int:
        return self.counts.get(term, 0)

    def __len__(self) -> int:
        return self.length


def build_term_vector(tokens: Iterable[str]) -> TermVector:
    counts = Counter(tokens)
    return TermVector(MappingProxyType(dict(sorted(counts.items()))), sum(counts.values()))


@dataclass(frozen=True)
class CollectionStats:
    term_freq: Mapping[str, int] = field(default_factory=dict)
    total_tokens: int = 0

    @property
    def vocabulary_size(self) -> int:
        return len(self.term_freq)

    def prob(self, term: str) -> float:
        """Collection language model p_C(term)."""
        return self.term_freq.get(term, 0) / self.total_tokens

    def __add__(self, other: "CollectionStats") -> "CollectionStats":
        merged = Counter(self.term_freq)
        merged.update(other.term_freq)
        return CollectionStats(
            MappingProxyType(dict(sorted(merged.items()))),
            self.total_tokens + other.total_tokens,
        )


def build_collection_stats(corpus: Iterable[TermVector]) -> CollectionStats:
    merged: Counter[str] = Counter()
    n_docs = 0
    for vec in corpus:
        merged.update(vec.counts)
        n_docs += 1
    if n_docs == 0:
        raise EmptyCorpus("cannot build collection statistics from an empty corpus")
    return CollectionStats(MappingProxyType(dict(sorted(merged.items()))), sum(merged.values()))


def vectorize_corpus(
    docs: Mapping[str, Document], config: PipelineConfig = PipelineConfig()
) -> dict[str, TermVector]:
    return {doc_id: build_term_vector(tokenize(doc.text, config)) for doc_id, doc in docs.items()}


def load_corpus(source: IO[str] | IO[bytes] | Iterable[str]) -> dict[str, Document]:
    """Read JSON-lines records ``{"id": ..., "text": ...}``; blank lines are skipped."""
    docs: dict[str, Document] = {}
    for lineno, raw in enumerate(source, start=1):
        line = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(lineno, f"invalid JSON ({exc.msg})") from None
        if not isinstance(record, dict):
            raise MalformedRecord(lineno, "record is not an object")
        doc_id, text = record.get("id"), record.get("text")
        if not isinstance(doc_id, str) or not doc_id:
            raise MalformedRecord(lineno, "missing or empty string field 'id'")
        if not isinstance(text, str):
            raise MalformedRecord(lineno, "missing string field 'text'")
        if doc_id in docs:
            raise DuplicateDocId(doc_id, lineno)
        docs[doc_id] = Document(doc_id, text)
    return docs


def write_corpus(docs: Iterable[Document], stream: IO[str]) -> None:
    for doc in docs:
        stream.write(json.dumps({"id": doc.doc_id, "text": doc.text}, ensure_ascii=False))
        stream.write("\n")


def load_stopwords(stream: Iterable[str]) -> frozenset[str]:
    """One term per line; surrounding whitespace and blank lines ignored."""
    return frozenset(w.strip() for w in stream if w.strip())
