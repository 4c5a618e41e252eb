"""Effectiveness metrics, paired significance testing and list-overlap analysis."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from statistics import fmean
from typing import IO, Iterable, Mapping, Sequence

from simfuse.runio import QrelSet, RunList, truncate

__all__ = [
    "METRICS",
    "EvalReport",
    "OverlapReport",
    "SignificanceResult",
    "average_precision_at_k",
    "evaluate",
    "mean_overlap",
    "overlap_analysis",
    "precision_at",
    "report_rows",
    "singleton_relevant_curve",
    "summary_text",
    "wilcoxon_signed_rank",
    "write_report_csv",
]

METRICS = ("p@5", "p@10", "map")
EXACT_LIMIT = 25


def _doc_ids(ranking) -> list[str]:
    if hasattr(ranking, "doc_ids"):
        return list(ranking.doc_ids)
    return list(ranking)


def precision_at(ranking, qrels: QrelSet, n: int, query_id: str | None = None) -> float:
    """Relevant documents among the first ``n``, divided by ``n`` (always)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    qid = query_id if query_id is not None else ranking.query_id
    rel = qrels.relevant(qid)
    return sum(1 for d in _doc_ids(ranking)[:n] if d in rel) / n


def average_precision_at_k(ranking, qrels: QrelSet, k: int, query_id: str | None = None) -> float:
    """Non-interpolated average precision over the top ``k``, normalized by all relevant."""
    if k < 1:
        raise ValueError("k must be >= 1")
    qid = query_id if query_id is not None else ranking.query_id
    rel = qrels.relevant(qid)
    if not rel:
        return 0.0
    hits = 0
    total = 0.0
    for r, d in enumerate(_doc_ids(ranking)[:k], start=1):
        if d in rel:
            hits += 1
            total += hits / r
    return total / len(rel)


@dataclass
class EvalReport:
    system: str
    k: int
    per_query: dict[str, dict[str, float]] = field(default_factory=dict)

    @property
    def query_count(self) -> int:
        return len(self.per_query)

    def values(self, metric: str) -> list[float]:
        return [self.per_query[q][metric] for q in sorted(self.per_query)]

    def mean(self, metric: str) -> float:
        vals = self.values(metric)
        return fmean(vals) if vals else 0.0

    @property
    def means(self) -> dict[str, float]:
        return {m: self.mean(m) for m in METRICS}


def evaluate(
    rankings: Mapping[str, object],
    qrels: QrelSet,
    k: int = 20,
    system: str = "",
    queries: Iterable[str] | None = None,
) -> EvalReport:
    """p@5, p@10 and AP@k per query.

    By default only queries present in both ``rankings`` and ``qrels`` are
    scored; pass ``queries`` to score a fixed set (missing rankings score 0).
    """
    if queries is None:
        queries = sorted(set(rankings) & set(qrels.judgments))
    report = EvalReport(system, k)
    for qid in queries:
        ranking = rankings.get(qid, ())
        report.per_query[qid] = {
            "p@5": precision_at(ranking, qrels, 5, qid),
            "p@10": precision_at(ranking, qrels, 10, qid),
            "map": average_precision_at_k(ranking, qrels, k, qid),
        }
    return report


@dataclass(frozen=True)
class SignificanceResult:
    p_value: float
    significant_95: bool
    significant_bonferroni: bool
    n_effective: int
    statistic: float = 0.0


def _average_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=values.__getitem__)
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for t in range(i, j + 1):
            ranks[order[t]] = avg
        i = j + 1
    return ranks


def _exact_tail_counts(doubled_ranks: Sequence[int], observed: int) -> tuple[int, int]:
    """Sign assignments with doubled W+ <= observed and >= observed."""
    counts = {0: 1}
    for r in doubled_ranks:
        nxt = dict(counts)
        for s, c in counts.items():
            nxt[s + r] = nxt.get(s + r, 0) + c
        counts = nxt
    lower = sum(c for s, c in counts.items() if s <= observed)
    upper = sum(c for s, c in counts.items() if s >= observed)
    return lower, upper


def wilcoxon_signed_rank(
    a: Sequence[float],
    b: Sequence[float],
    *,
    alpha: float = 0.05,
    correction_factor: int = 4,
    exact_limit: int = EXACT_LIMIT,
) -> SignificanceResult:
    """Two-tailed paired Wilcoxon signed-rank test.

    Zero differences are dropped and tied magnitudes get average ranks.
    The p-value is exact (full null distribution of the positive rank sum)
    when at most ``exact_limit`` differences remain, otherwise a normal
    approximation with tie and continuity corrections.
    """
    if len(a) != len(b):
        raise ValueError("paired samples must have equal length")
    if not a:
        raise ValueError("need at least one pair")
    # metric differences like 0.6-0.4 and 0.4-0.2 must tie
    diffs = [round(x - y, 12) for x, y in zip(a, b)]
    diffs = [d for d in diffs if d != 0.0]
    n = len(diffs)
    if n == 0:
        return SignificanceResult(1.0, False, False, 0, 0.0)
    ranks = _average_ranks([abs(d) for d in diffs])
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)
    if n <= exact_limit:
        doubled = [int(round(2 * r)) for r in ranks]
        lower, upper = _exact_tail_counts(doubled, int(round(2 * w_plus)))
        p = min(1.0, 2 * min(lower, upper) / 2**n)
    else:
        mean = n * (n + 1) / 4
        ties: dict[float, int] = {}
        for r in ranks:
            ties[r] = ties.get(r, 0) + 1
        var = n * (n + 1) * (2 * n + 1) / 24 - sum(t**3 - t for t in ties.values()) / 48
        z = max(abs(w_plus - mean) - 0.5, 0.0) / math.sqrt(var)
        p = min(1.0, math.erfc(z / math.sqrt(2)))
    return SignificanceResult(p, p < alpha, p < alpha / correction_factor, n, w_plus)


@dataclass(frozen=True)
class OverlapReport:
    """Documents of the pooled lists bucketed by how many lists contain them.

    ``relevant[i]`` / ``nonrelevant[i]`` count documents found in exactly
    ``i + 1`` lists.
    """

    relevant: tuple[int, ...]
    nonrelevant: tuple[int, ...]

    @staticmethod
    def _pct(counts: tuple[int, ...]) -> tuple[float, ...] | None:
        total = sum(counts)
        if total == 0:
            return None
        return tuple(100.0 * c / total for c in counts)

    @property
    def relevant_pct(self) -> tuple[float, ...] | None:
        return self._pct(self.relevant)

    @property
    def nonrelevant_pct(self) -> tuple[float, ...] | None:
        return self._pct(self.nonrelevant)


def overlap_analysis(lists: Sequence[RunList], qrels: QrelSet) -> OverlapReport:
    if not lists:
        raise ValueError("need at least one list")
    qid = lists[0].query_id
    m = len(lists)
    multiplicity: dict[str, int] = {}
    for lst in lists:
        for d in lst.doc_ids:
            multiplicity[d] = multiplicity.get(d, 0) + 1
    rel = [0] * m
    nonrel = [0] * m
    for d, c in multiplicity.items():
        (rel if qrels.is_relevant(qid, d) else nonrel)[c - 1] += 1
    return OverlapReport(tuple(rel), tuple(nonrel))


def mean_overlap(reports: Iterable[OverlapReport]) -> tuple[tuple[float, ...] | None, tuple[float, ...] | None]:
    """Per-query percentages averaged over queries; queries with an empty group are skipped."""
    reports = list(reports)

    def avg(rows):
        rows = [r for r in rows if r is not None]
        if not rows:
            return None
        return tuple(fmean(col) for col in zip(*rows))

    return avg(r.relevant_pct for r in reports), avg(r.nonrelevant_pct for r in reports)


def singleton_relevant_curve(
    lists: Sequence[RunList], qrels: QrelSet, k_values: Sequence[int]
) -> list[tuple[int, float]]:
    """Percentage of pooled relevant documents present in exactly one list, per cutoff.

    Cutoffs where no relevant document is retrieved yield NaN.
    """
    if list(k_values) != sorted(set(k_values)) or any(k < 1 for k in k_values):
        raise ValueError("k_values must be positive and strictly ascending")
    out = []
    for k in k_values:
        pct = overlap_analysis([truncate(lst, k) for lst in lists], qrels).relevant_pct
        out.append((k, pct[0] if pct is not None else math.nan))
    return out


def report_rows(
    reports: Mapping[str, EvalReport],
    compare_to: Sequence[str] = (),
    metrics: Sequence[str] = METRICS,
    correction_factor: int = 4,
) -> list[dict[str, object]]:
    """One row per (system, metric) with p-values against each ``compare_to`` system."""
    rows = []
    for name, rep in reports.items():
        for metric in metrics:
            row: dict[str, object] = {"system": name, "metric": metric, "mean": rep.mean(metric)}
            for other in compare_to:
                if other == name:
                    row[f"p_vs_{other}"] = ""
                    continue
                res = wilcoxon_signed_rank(
                    rep.values(metric), reports[other].values(metric), correction_factor=correction_factor
                )
                row[f"p_vs_{other}"] = res.p_value
            rows.append(row)
    return rows


def write_report_csv(rows: Sequence[Mapping[str, object]], stream: IO[str]) -> None:
    fields: list[str] = []
    for row in rows:
        fields.extend(k for k in row if k not in fields)
    writer = csv.DictWriter(stream, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})


def summary_text(
    reports: Mapping[str, EvalReport],
    compare_to: Sequence[str] = (),
    metrics: Sequence[str] = METRICS,
    correction_factor: int = 4,
) -> str:
    """Plain-text table. A mark ``[i]`` means significantly different from the
    i-th comparison system at 95%; ``[i*]`` also survives Bonferroni correction.
    """
    lines = []
    if compare_to:
        legend = ", ".join(f"[{i}] {name}" for i, name in enumerate(compare_to, start=1))
        lines.append(f"comparisons: {legend}")
    width = max([len("system")] + [len(n) for n in reports])
    cells: dict[str, list[str]] = {}
    for name, rep in reports.items():
        row = []
        for metric in metrics:
            marks = []
            for i, other in enumerate(compare_to, start=1):
                if other == name:
                    continue
                res = wilcoxon_signed_rank(
                    rep.values(metric), reports[other].values(metric), correction_factor=correction_factor
                )
                if res.significant_95:
                    marks.append(f"{i}*" if res.significant_bonferroni else str(i))
            row.append(f"{rep.mean(metric):.4f}" + (f" [{','.join(marks)}]" if marks else ""))
        cells[name] = row
    col = max([10] + [len(c) for row in cells.values() for c in row])
    lines.append(("system".ljust(width) + "".join(f"  {m:<{col}}" for m in metrics)).rstrip())
    for name, row in cells.items():
        lines.append((name.ljust(width) + "".join(f"  {c:<{col}}" for c in row)).rstrip())
    lines.append(f"queries: {next(iter(reports.values())).query_count if reports else 0}")
    return "\n".join(lines) + "\n"
