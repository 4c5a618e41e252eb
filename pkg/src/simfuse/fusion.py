"""Score-, rank- and similarity-based fusion of retrieved lists."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping, Sequence

from simfuse.graph import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    NodeSetKind,
    QuerySimMode,
    build_graph,
    build_nodes,
    combmnz_scores,
    combsum_scores,
    stationary_distribution,
)
from simfuse.runio import NormalizedRunList
from simfuse.similarity import SimilarityMatrix

__all__ = [
    "BASELINE_METHODS",
    "GRAPH_METHODS",
    "METHODS",
    "FusedRanking",
    "borda",
    "comb_mnz",
    "comb_sum",
    "fuse",
    "graph_fuse",
    "graph_fuse_grid",
    "round_robin",
]

# relative gap below which two fused scores count as tied
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class FusedRanking:
    query_id: str
    entries: tuple[tuple[str, float], ...]

    @classmethod
    def from_scores(
        cls, query_id: str, scores: Mapping[str, float], tie_tolerance: float = TIE_TOLERANCE
    ) -> "FusedRanking":
        """Order by score descending, ties by ascending doc_id.

        Adjacent scores closer than ``tie_tolerance`` times the largest
        magnitude are floating-point noise around a true tie: they are
        snapped to the group's top score and ordered by doc_id.
        """
        ordered = sorted(((d, float(s)) for d, s in scores.items()), key=lambda item: (-item[1], item[0]))
        if not ordered or tie_tolerance <= 0:
            return cls(query_id, tuple(ordered))
        eps = tie_tolerance * max(abs(s) for _, s in ordered)
        entries: list[tuple[str, float]] = []
        group: list[str] = []
        top = prev = ordered[0][1]
        for doc_id, s in ordered:
            if prev - s > eps:
                entries.extend((d, top) for d in sorted(group))
                group, top = [], s
            group.append(doc_id)
            prev = s
        entries.extend((d, top) for d in sorted(group))
        return cls(query_id, tuple(entries))

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.entries]

    @property
    def scores(self) -> dict[str, float]:
        return dict(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def _query_id(lists: Sequence[NormalizedRunList]) -> str:
    if not lists:
        raise ValueError("need at least one list to fuse")
    qids = {lst.query_id for lst in lists}
    if len(qids) != 1:
        raise ValueError(f"lists belong to different queries: {sorted(qids)}")
    return lists[0].query_id


def comb_sum(lists: Sequence[NormalizedRunList]) -> FusedRanking:
    return FusedRanking.from_scores(_query_id(lists), combsum_scores(lists))


def comb_mnz(lists: Sequence[NormalizedRunList]) -> FusedRanking:
    return FusedRanking.from_scores(_query_id(lists), combmnz_scores(lists))


def borda(lists: Sequence[NormalizedRunList]) -> FusedRanking:
    """Score each document by how many documents it is not outranked by, per list."""
    qid = _query_id(lists)
    totals: dict[str, float] = {}
    for lst in lists:
        scores = [e.norm_score for e in lst.entries]
        for e in lst.entries:
            not_higher = sum(1 for s in scores if s <= e.norm_score)
            totals[e.doc_id] = totals.get(e.doc_id, 0) + not_higher
    return FusedRanking.from_scores(qid, totals)


def round_robin(lists: Sequence[NormalizedRunList]) -> FusedRanking:
    """Interleave lists rank by rank in the given list order, skipping repeats.

    Scores are 1/position so the result can be written as a run.
    """
    qid = _query_id(lists)
    seen: list[str] = []
    emitted = set()
    depth = max(len(lst) for lst in lists)
    for j in range(depth):
        for lst in lists:
            if j < len(lst):
                doc_id = lst.entries[j].doc_id
                if doc_id not in emitted:
                    emitted.add(doc_id)
                    seen.append(doc_id)
    return FusedRanking(qid, tuple((d, 1.0 / pos) for pos, d in enumerate(seen, start=1)))


GRAPH_METHODS: dict[str, tuple[NodeSetKind, QuerySimMode]] = {
    "setuni": (NodeSetKind.SET, QuerySimMode.UNIFORM),
    "setsum": (NodeSetKind.SET, QuerySimMode.COMBSUM),
    "setmnz": (NodeSetKind.SET, QuerySimMode.COMBMNZ),
    "baguni": (NodeSetKind.BAG, QuerySimMode.UNIFORM),
    "bagsum": (NodeSetKind.BAG, QuerySimMode.INSTANCE_SCORE),
    "bagdupuni": (NodeSetKind.BAGDUP, QuerySimMode.UNIFORM),
    "bagdupmnz": (NodeSetKind.BAGDUP, QuerySimMode.INSTANCE_SCORE),
}

BASELINE_METHODS: dict[str, Callable[[Sequence[NormalizedRunList]], FusedRanking]] = {
    "combsum": comb_sum,
    "combmnz": comb_mnz,
    "borda": borda,
    "roundrobin": round_robin,
}

METHODS = tuple(BASELINE_METHODS) + tuple(GRAPH_METHODS)


def _nodes_for(lists, method, query_sim):
    try:
        kind, mode = GRAPH_METHODS[method]
    except KeyError:
        raise ValueError(f"{method!r} is not a graph fusion method") from None
    if query_sim is not None:
        if kind is not NodeSetKind.SET:
            raise ValueError("a custom query-similarity score applies to set methods only")
        mode = query_sim
    return build_nodes(lists, kind, mode)


def _collect(qid, nodes, prestige) -> FusedRanking:
    scores: dict[str, float] = {}
    for n in nodes:
        scores[n.doc_id] = scores.get(n.doc_id, 0.0) + float(prestige.values[n.node_id])
    return FusedRanking.from_scores(qid, scores)


def graph_fuse(
    lists: Sequence[NormalizedRunList],
    method: str,
    lam: float,
    alpha: int,
    similarity: SimilarityMatrix,
    *,
    query_sim: Mapping[str, float] | Callable[[str], float] | None = None,
    solver: str = "power",
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FusedRanking:
    """Fuse ``lists`` with one of the similarity-graph methods.

    A document's final score is the total prestige of the nodes that
    represent it. ``query_sim`` replaces the query-similarity estimate of a
    set method with an arbitrary per-document fusion score.
    """
    qid = _query_id(lists)
    nodes = _nodes_for(lists, method, query_sim)
    graph = build_graph(nodes, similarity, lam, alpha)
    prestige = stationary_distribution(graph, tol=tol, max_iter=max_iter, solver=solver)
    return _collect(qid, nodes, prestige)


def graph_fuse_grid(
    lists: Sequence[NormalizedRunList],
    method: str,
    similarity: SimilarityMatrix,
    lambdas: Iterable[float],
    alphas: Iterable[int],
    *,
    solver: str = "power",
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> Iterator[tuple[tuple[float, int], FusedRanking]]:
    """Fuse once per (lambda, alpha), sharing the neighbor graph across lambdas."""
    qid = _query_id(lists)
    nodes = _nodes_for(lists, method, None)
    lambdas = list(lambdas)
    for alpha in alphas:
        graph = build_graph(nodes, similarity, lambdas[0], alpha)
        for lam in lambdas:
            prestige = stationary_distribution(
                graph.with_lambda(lam), tol=tol, max_iter=max_iter, solver=solver
            )
            yield (lam, alpha), _collect(qid, nodes, prestige)


def fuse(
    lists: Sequence[NormalizedRunList],
    method: str,
    *,
    lam: float = 1.0,
    alpha: int = 5,
    similarity: SimilarityMatrix | None = None,
    solver: str = "power",
) -> FusedRanking:
    """Dispatch on a method token (``combsum``, ``bagdupmnz``, ...)."""
    method = method.lower()
    if method in BASELINE_METHODS:
        return BASELINE_METHODS[method](lists)
    if method in GRAPH_METHODS:
        if similarity is None:
            raise ValueError(f"method {method!r} needs inter-document similarities")
        return graph_fuse(lists, method, lam, alpha, similarity, solver=solver)
    raise ValueError(f"unknown fusion method {method!r}; expected one of {', '.join(METHODS)}")
