"""Experiment driver: parameter sweeps, cross-validation, run sampling."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean
from typing import Iterable, Mapping, Sequence

from simfuse.corpus import (
    CollectionStats,
    PipelineConfig,
    TermVector,
    build_collection_stats,
    load_corpus,
    load_stopwords,
    vectorize_corpus,
)
from simfuse.evaluation import METRICS, EvalReport, average_precision_at_k, evaluate
from simfuse.fusion import BASELINE_METHODS, GRAPH_METHODS, FusedRanking, graph_fuse_grid
from simfuse.runio import NormalizedRunList, QrelSet, RunList, normalize_scores, read_qrels, read_run, truncate
from simfuse.similarity import SimilarityMatrix, SmoothingParams, build_similarity_matrix

__all__ = [
    "DEFAULT_ALPHAS",
    "DEFAULT_LAMBDAS",
    "CVResult",
    "ExperimentConfig",
    "ExperimentData",
    "GridPoint",
    "QueryTask",
    "SweepGrid",
    "SweepResult",
    "TooFewQueries",
    "evaluate_grid",
    "load_experiment",
    "loo_cross_validation",
    "map_at_k",
    "per_query_upper_bound",
    "prepare_tasks",
    "random_run_experiment",
    "random_triplets",
    "select_point",
    "select_runs_by_map",
    "sweep",
]

log = logging.getLogger(__name__)

DEFAULT_LAMBDAS = tuple(round(0.1 * i, 1) for i in range(1, 11))
DEFAULT_ALPHAS = (5, 10, 20, 30, 40, 50)

# (lambda, alpha); both None for parameter-free methods
GridPoint = tuple


class TooFewQueries(ValueError):
    pass


@dataclass(frozen=True)
class SweepGrid:
    lambdas: tuple[float, ...] = DEFAULT_LAMBDAS
    alphas: tuple[int, ...] = DEFAULT_ALPHAS
    k: int = 20

    def __post_init__(self):
        if not self.lambdas or not self.alphas:
            raise ValueError("grid must be non-empty")
        if any(not 0.0 <= lam <= 1.0 for lam in self.lambdas):
            raise ValueError("lambda values must lie in [0, 1]")
        if any(a < 1 for a in self.alphas) or self.k < 1:
            raise ValueError("alpha and k must be >= 1")
        object.__setattr__(self, "lambdas", tuple(sorted(set(self.lambdas))))
        object.__setattr__(self, "alphas", tuple(sorted(set(self.alphas))))

    def points(self, method: str) -> list[GridPoint]:
        if method in BASELINE_METHODS:
            return [(None, None)]
        return [(lam, a) for lam in self.lambdas for a in self.alphas]


@dataclass
class ExperimentConfig:
    method: str = "bagdupmnz"
    grid: SweepGrid = field(default_factory=SweepGrid)
    objective: str = "p@5"
    tie_break: str = "p@10"
    runs: tuple[str, ...] = ()
    corpus: str | None = None
    qrels: str | None = None
    stopwords: str | None = None
    stem: bool = True
    mu: float = 1000.0
    collection_stats: str = "corpus"
    seed: int = 0
    samples: int = 20
    solver: str = "power"

    def __post_init__(self):
        if self.objective not in METRICS or self.tie_break not in METRICS:
            raise ValueError(f"metrics must be among {METRICS}")
        if self.collection_stats not in ("corpus", "pool"):
            raise ValueError("collection_stats must be 'corpus' or 'pool'")


@dataclass(frozen=True)
class QueryTask:
    query_id: str
    lists: tuple[NormalizedRunList, ...]
    similarity: SimilarityMatrix | None = None

    @property
    def pool(self) -> list[str]:
        return list(dict.fromkeys(d for lst in self.lists for d in lst.doc_ids))


@dataclass
class ExperimentData:
    runs: dict[str, dict[str, RunList]]
    qrels: QrelSet
    vectors: dict[str, TermVector] | None = None
    stats: CollectionStats | None = None


def _run_tag(run: Mapping[str, RunList], path: Path) -> str:
    for lst in run.values():
        return lst.run_tag
    return path.stem


def load_experiment(config: ExperimentConfig, need_corpus: bool | None = None) -> ExperimentData:
    if config.qrels is None:
        raise ValueError("a qrels file is required")
    runs: dict[str, dict[str, RunList]] = {}
    for path in map(Path, config.runs):
        run = read_run(path)
        tag = _run_tag(run, path)
        if tag in runs:
            tag = f"{tag}:{path.stem}"
        runs[tag] = run
    qrels = read_qrels(config.qrels)
    if need_corpus is None:
        need_corpus = config.method in GRAPH_METHODS
    data = ExperimentData(runs, qrels)
    if need_corpus:
        if config.corpus is None:
            raise ValueError(f"method {config.method!r} needs --corpus")
        stopwords = frozenset()
        if config.stopwords:
            with open(config.stopwords, encoding="utf-8") as fh:
                stopwords = load_stopwords(fh)
        with open(config.corpus, encoding="utf-8") as fh:
            docs = load_corpus(fh)
        data.vectors = vectorize_corpus(docs, PipelineConfig(stopwords=stopwords, stemming=config.stem))
        if config.collection_stats == "corpus":
            data.stats = build_collection_stats(data.vectors.values())
    return data


def prepare_tasks(
    runs: Sequence[Mapping[str, RunList]],
    qrels: QrelSet,
    k: int,
    vectors: Mapping[str, TermVector] | None = None,
    stats: CollectionStats | None = None,
    params: SmoothingParams = SmoothingParams(),
    queries: Iterable[str] | None = None,
) -> list[QueryTask]:
    """Truncate and normalize each run per query and attach pool similarities.

    Without ``stats`` the collection model is estimated from each query's pool.
    Queries default to those judged in ``qrels`` and retrieved by some run.
    """
    if queries is None:
        retrieved = set().union(*(set(r) for r in runs)) if runs else set()
        queries = sorted(q for q in qrels.judgments if q in retrieved)
    tasks = []
    for qid in queries:
        lists = tuple(
            normalize_scores(truncate(run[qid], k)) for run in runs if qid in run and len(run[qid])
        )
        if not lists:
            continue
        task = QueryTask(qid, lists)
        if vectors is not None:
            pool = task.pool
            q_stats = stats
            if q_stats is None:
                q_stats = build_collection_stats(vectors[d] for d in pool if d in vectors)
            task = QueryTask(qid, lists, build_similarity_matrix(pool, vectors, q_stats, params))
        tasks.append(task)
    return tasks


def _metrics(ranking, qrels: QrelSet, k: int) -> dict[str, float]:
    return evaluate({ranking.query_id: ranking}, qrels, k, queries=[ranking.query_id]).per_query[
        ranking.query_id
    ]


def fuse_grid(task: QueryTask, method: str, grid: SweepGrid, solver: str = "power"):
    """Yield (point, FusedRanking) for every grid point of ``method``."""
    if method in BASELINE_METHODS:
        yield (None, None), BASELINE_METHODS[method](task.lists)
        return
    if task.similarity is None:
        raise ValueError(f"method {method!r} needs inter-document similarities")
    yield from graph_fuse_grid(task.lists, method, task.similarity, grid.lambdas, grid.alphas, solver=solver)


def evaluate_grid(
    tasks: Sequence[QueryTask], qrels: QrelSet, method: str, grid: SweepGrid, solver: str = "power"
) -> dict[GridPoint, dict[str, dict[str, float]]]:
    """Metrics for every (grid point, query)."""
    table: dict[GridPoint, dict[str, dict[str, float]]] = {p: {} for p in grid.points(method)}
    for task in tasks:
        for point, ranking in fuse_grid(task, method, grid, solver):
            table[point][task.query_id] = _metrics(ranking, qrels, grid.k)
    return table


def _point_key(point: GridPoint):
    lam, alpha = point
    return (-1.0 if lam is None else lam, -1 if alpha is None else alpha)


def _mean(values: Iterable[float]) -> float:
    values = list(values)
    # rounded so that equal averages computed from different summands compare equal
    return round(fmean(values), 10) if values else 0.0


def select_point(
    table: Mapping[GridPoint, Mapping[str, Mapping[str, float]]],
    queries: Iterable[str],
    objective: str = "p@5",
    tie_break: str = "p@10",
) -> GridPoint:
    """Maximize mean ``objective``; ties go to the smaller mean ``tie_break``,
    then to the smallest (lambda, alpha)."""
    queries = list(queries)

    def key(point):
        rows = table[point]
        return (
            -_mean(rows[q][objective] for q in queries),
            _mean(rows[q][tie_break] for q in queries),
            _point_key(point),
        )

    return min(table, key=key)


@dataclass
class SweepResult:
    best: GridPoint
    table: dict[GridPoint, dict[str, dict[str, float]]]
    queries: list[str]

    @property
    def best_lambda(self):
        return self.best[0]

    @property
    def best_alpha(self):
        return self.best[1]

    def means(self, point: GridPoint) -> dict[str, float]:
        return {m: fmean(self.table[point][q][m] for q in self.queries) for m in METRICS}

    def report(self, system: str, k: int) -> EvalReport:
        return EvalReport(system, k, {q: dict(self.table[self.best][q]) for q in self.queries})


def sweep(
    tasks: Sequence[QueryTask],
    qrels: QrelSet,
    method: str,
    grid: SweepGrid = SweepGrid(),
    objective: str = "p@5",
    tie_break: str = "p@10",
    solver: str = "power",
    table: dict | None = None,
) -> SweepResult:
    if table is None:
        table = evaluate_grid(tasks, qrels, method, grid, solver)
    queries = [t.query_id for t in tasks]
    return SweepResult(select_point(table, queries, objective, tie_break), table, queries)


@dataclass
class CVResult:
    chosen: dict[str, GridPoint]
    per_query: dict[str, dict[str, float]]

    def report(self, system: str, k: int) -> EvalReport:
        return EvalReport(system, k, {q: dict(v) for q, v in sorted(self.per_query.items())})

    @property
    def means(self) -> dict[str, float]:
        return {m: fmean(v[m] for v in self.per_query.values()) for m in METRICS}


def loo_cross_validation(
    tasks: Sequence[QueryTask],
    qrels: QrelSet,
    method: str,
    grid: SweepGrid = SweepGrid(),
    objective: str = "p@5",
    tie_break: str = "p@10",
    solver: str = "power",
    table: dict | None = None,
) -> CVResult:
    """Leave-one-out: each query is scored at the point chosen on all other queries."""
    queries = [t.query_id for t in tasks]
    if len(queries) < 2:
        raise TooFewQueries(f"leave-one-out needs at least 2 queries, got {len(queries)}")
    if table is None:
        table = evaluate_grid(tasks, qrels, method, grid, solver)
    chosen, per_query = {}, {}
    for held_out in queries:
        rest = [q for q in queries if q != held_out]
        point = select_point(table, rest, objective, tie_break)
        chosen[held_out] = point
        per_query[held_out] = dict(table[point][held_out])
    return CVResult(chosen, per_query)


def per_query_upper_bound(
    tasks: Sequence[QueryTask],
    qrels: QrelSet,
    method: str,
    grid: SweepGrid = SweepGrid(),
    objective: str = "p@5",
    tie_break: str = "p@10",
    solver: str = "power",
    table: dict | None = None,
) -> CVResult:
    """Oracle setting: every query uses its own best grid point."""
    if table is None:
        table = evaluate_grid(tasks, qrels, method, grid, solver)
    chosen, per_query = {}, {}
    for task in tasks:
        point = select_point(table, [task.query_id], objective, tie_break)
        chosen[task.query_id] = point
        per_query[task.query_id] = dict(table[point][task.query_id])
    return CVResult(chosen, per_query)


def map_at_k(run: Mapping[str, RunList], qrels: QrelSet, k: int) -> float:
    """Mean AP@k over all judged queries; unretrieved queries score 0."""
    queries = qrels.query_ids
    if not queries:
        return 0.0
    return fmean(average_precision_at_k(run.get(q, ()), qrels, k, q) for q in queries)


def select_runs_by_map(
    runs: Mapping[str, Mapping[str, RunList]], qrels: QrelSet, k: int, m: int
) -> list[str]:
    """Tags of the ``m`` best runs by MAP@k, best first; ties by tag."""
    if m > len(runs):
        raise ValueError(f"asked for {m} runs but only {len(runs)} supplied")
    scored = sorted(runs, key=lambda tag: (-map_at_k(runs[tag], qrels, k), tag))
    return scored[:m]


def random_triplets(
    runs: Mapping[str, Mapping[str, RunList]] | Sequence[str],
    seed: int,
    samples: int = 20,
    qrels: QrelSet | None = None,
    k: int = 20,
) -> list[tuple[str, str, str]]:
    """``samples`` independent triples of distinct runs.

    With ``qrels`` (and ``runs`` as a mapping) each triple is ordered by
    MAP@k, best first; otherwise by tag. The same triple may recur.
    """
    tags = sorted(runs)
    if len(tags) < 3:
        raise ValueError("need at least 3 runs to sample triplets")
    rng = random.Random(seed)
    if qrels is not None and isinstance(runs, Mapping):
        quality = {t: map_at_k(runs[t], qrels, k) for t in tags}
    else:
        quality = {t: 0.0 for t in tags}
    out = []
    for _ in range(samples):
        picked = rng.sample(tags, 3)
        out.append(tuple(sorted(picked, key=lambda t: (-quality[t], t))))
    return out


def random_run_experiment(
    data: ExperimentData,
    methods: Sequence[str],
    grid: SweepGrid,
    seed: int,
    samples: int,
    params: SmoothingParams = SmoothingParams(),
    objective: str = "p@5",
    tie_break: str = "p@10",
    solver: str = "power",
) -> tuple[list[tuple[str, str, str]], dict[str, EvalReport]]:
    """Fuse random run triplets, sweeping each method per triplet.

    Returns the triplets and per-system reports whose per-query values are
    averages over samples; systems are run1..run3 and each method.
    """
    triplets = random_triplets(data.runs, seed, samples, data.qrels, grid.k)
    sums: dict[str, dict[str, dict[str, float]]] = {}
    counts: dict[str, int] = {}
    for idx, triple in enumerate(triplets):
        log.info("sample %d/%d: %s", idx + 1, len(triplets), ", ".join(triple))
        chosen = [data.runs[t] for t in triple]
        tasks = prepare_tasks(chosen, data.qrels, grid.k, data.vectors, data.stats, params)
        queries = [t.query_id for t in tasks]
        systems: dict[str, dict[str, dict[str, float]]] = {}
        for i, run in enumerate(chosen, start=1):
            systems[f"run{i}"] = evaluate(
                {q: truncate(run[q], grid.k) for q in queries if q in run}, data.qrels, grid.k, queries=queries
            ).per_query
        for method in methods:
            res = sweep(tasks, data.qrels, method, grid, objective, tie_break, solver)
            systems[method] = res.table[res.best]
        for name, per_query in systems.items():
            acc = sums.setdefault(name, {})
            for q, vals in per_query.items():
                row = acc.setdefault(q, {m: 0.0 for m in METRICS})
                for m in METRICS:
                    row[m] += vals[m]
                counts[(name, q)] = counts.get((name, q), 0) + 1
    reports = {}
    for name, acc in sums.items():
        reports[name] = EvalReport(
            name,
            grid.k,
            {q: {m: v / counts[(name, q)] for m, v in row.items()} for q, row in sorted(acc.items())},
        )
    return triplets, reports


def fused_rankings(
    tasks: Sequence[QueryTask], method: str, point: GridPoint, solver: str = "power"
) -> dict[str, FusedRanking]:
    lam, alpha = point
    grid = SweepGrid((1.0 if lam is None else lam,), (5 if alpha is None else alpha,))
    out = {}
    for task in tasks:
        for _, ranking in fuse_grid(task, method, grid, solver):
            out[task.query_id] = ranking
    return out
