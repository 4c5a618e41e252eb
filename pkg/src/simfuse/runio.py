"""TREC run and qrels I/O, top-k truncation and score normalization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, TYPE_CHECKING, Iterable, Mapping

if TYPE_CHECKING:
    from simfuse.fusion import FusedRanking

__all__ = [
    "EmptyList",
    "MalformedLine",
    "NonNumericScore",
    "NormalizedEntry",
    "NormalizedRunList",
    "QrelSet",
    "RunEntry",
    "RunList",
    "normalize_scores",
    "parse_qrels",
    "parse_run",
    "read_qrels",
    "read_run",
    "truncate",
    "write_qrels",
    "write_run",
    "write_runs",
]


class MalformedLine(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class NonNumericScore(MalformedLine):
    pass


class EmptyList(ValueError):
    pass


@dataclass(frozen=True)
class RunEntry:
    doc_id: str
    rank: int
    score: float


@dataclass(frozen=True)
class RunList:
    query_id: str
    run_tag: str
    entries: tuple[RunEntry, ...]

    def __post_init__(self):
        ranks = [e.rank for e in self.entries]
        if any(r < 1 for r in ranks) or any(a >= b for a, b in zip(ranks, ranks[1:])):
            raise ValueError("entry ranks must be positive and strictly increasing")
        if len({e.doc_id for e in self.entries}) != len(self.entries):
            raise ValueError("doc_ids must be unique within a list")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]

    @classmethod
    def from_scores(cls, query_id: str, run_tag: str, scored: Iterable[tuple[str, float]]):
        """Build a list from (doc_id, score) pairs already in rank order."""
        return cls(
            query_id,
            run_tag,
            tuple(RunEntry(d, r, float(s)) for r, (d, s) in enumerate(scored, start=1)),
        )


@dataclass(frozen=True)
class NormalizedEntry:
    doc_id: str
    rank: int
    norm_score: float


@dataclass(frozen=True)
class NormalizedRunList:
    query_id: str
    run_tag: str
    entries: tuple[NormalizedEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.scores

    @property
    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]

    @property
    def scores(self) -> dict[str, float]:
        return {e.doc_id: e.norm_score for e in self.entries}


@dataclass(frozen=True)
class QrelSet:
    judgments: Mapping[str, Mapping[str, int]] = field(default_factory=dict)

    def grade(self, query_id: str, doc_id: str) -> int:
        return self.judgments.get(query_id, {}).get(doc_id, 0)

    def is_relevant(self, query_id: str, doc_id: str) -> bool:
        return self.grade(query_id, doc_id) >= 1

    def relevant(self, query_id: str) -> set[str]:
        return {d for d, g in self.judgments.get(query_id, {}).items() if g >= 1}

    def num_relevant(self, query_id: str) -> int:
        return sum(1 for g in self.judgments.get(query_id, {}).values() if g >= 1)

    @property
    def query_ids(self) -> list[str]:
        return sorted(self.judgments)


def _lines(stream) -> Iterable[tuple[int, str]]:
    for lineno, raw in enumerate(stream, start=1):
        line = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        if line.strip():
            yield lineno, line


def parse_run(stream: IO[str] | Iterable[str]) -> dict[str, RunList]:
    """Parse six-field TREC run lines into per-query lists.

    Entries are re-ranked 1..n by descending score with ties kept in file
    order; a document repeated within a query keeps its best-scoring line.
    The rank column of the file is validated as an integer but not trusted.
    """
    rows: dict[str, dict[str, tuple[float, int]]] = {}
    tags: dict[str, str] = {}
    order = 0
    for lineno, line in _lines(stream):
        fields = line.split()
        if len(fields) != 6:
            raise MalformedLine(lineno, f"expected 6 fields, got {len(fields)}")
        qid, _, doc_id, rank, score, tag = fields
        try:
            int(rank)
        except ValueError:
            raise MalformedLine(lineno, f"rank {rank!r} is not an integer") from None
        try:
            value = float(score)
        except ValueError:
            raise NonNumericScore(lineno, f"score {score!r} is not numeric") from None
        if not math.isfinite(value):
            raise NonNumericScore(lineno, f"score {score!r} is not finite")
        per_query = rows.setdefault(qid, {})
        tags.setdefault(qid, tag)
        prev = per_query.get(doc_id)
        if prev is None or value > prev[0]:
            per_query[doc_id] = (value, order)
        order += 1
    runs = {}
    for qid, per_query in rows.items():
        ranked = sorted(per_query.items(), key=lambda item: (-item[1][0], item[1][1]))
        runs[qid] = RunList.from_scores(qid, tags[qid], ((d, s) for d, (s, _) in ranked))
    return runs


def read_run(path) -> dict[str, RunList]:
    with open(path, encoding="utf-8") as fh:
        return parse_run(fh)


def truncate(run: RunList, k: int) -> RunList:
    if k < 1:
        raise ValueError("k must be >= 1")
    return RunList(run.query_id, run.run_tag, run.entries[:k])


def normalize_scores(run: RunList) -> NormalizedRunList:
    """Sum-normalize scores; if any score is <= 0, exponentiate first.

    The exponent is taken relative to the list maximum, which cancels in the
    normalization and keeps large raw scores from overflowing.
    """
    if not run.entries:
        raise EmptyList(f"query {run.query_id}: cannot normalize an empty list")
    raw = [e.score for e in run.entries]
    if min(raw) <= 0:
        top = max(raw)
        raw = [math.exp(s - top) for s in raw]
    total = math.fsum(raw)
    return NormalizedRunList(
        run.query_id,
        run.run_tag,
        tuple(NormalizedEntry(e.doc_id, e.rank, s / total) for e, s in zip(run.entries, raw)),
    )


def parse_qrels(stream: IO[str] | Iterable[str]) -> QrelSet:
    judgments: dict[str, dict[str, int]] = {}
    for lineno, line in _lines(stream):
        fields = line.split()
        if len(fields) != 4:
            raise MalformedLine(lineno, f"expected 4 fields, got {len(fields)}")
        qid, _, doc_id, grade = fields
        try:
            value = int(grade)
        except ValueError:
            raise MalformedLine(lineno, f"relevance {grade!r} is not an integer") from None
        if value < 0:
            # negative grades appear in some TREC qrels; they mean non-relevant
            value = 0
        judgments.setdefault(qid, {})[doc_id] = value
    return QrelSet(judgments)


def read_qrels(path) -> QrelSet:
    with open(path, encoding="utf-8") as fh:
        return parse_qrels(fh)


def write_qrels(qrels: QrelSet, stream: IO[str]) -> None:
    for qid in sorted(qrels.judgments):
        for doc_id, grade in sorted(qrels.judgments[qid].items()):
            stream.write(f"{qid} 0 {doc_id} {grade}\n")


def _format_score(score: float) -> str:
    return f"{score:.6g}"


def write_run(ranking: "FusedRanking", run_tag: str) -> str:
    """Render one fused ranking as TREC run lines."""
    if not ranking.entries:
        raise EmptyList(f"query {ranking.query_id}: cannot write an empty ranking")
    return "".join(
        f"{ranking.query_id} Q0 {doc_id} {rank} {_format_score(score)} {run_tag}\n"
        for rank, (doc_id, score) in enumerate(ranking.entries, start=1)
    )


def write_runs(rankings: Iterable["FusedRanking"], run_tag: str, stream: IO[str]) -> None:
    for ranking in rankings:
        stream.write(write_run(ranking, run_tag))
