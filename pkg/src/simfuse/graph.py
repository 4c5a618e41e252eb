"""Prestige propagation graphs over fused documents or document instances.

Nodes are documents (``SET``), document instances (``BAG``) or instances
duplicated once per list containing the document (``BAGDUP``). An edge
v1 -> v2 carries ``sim(v1, v2)`` when v2 is among v1's ``alpha`` nearest
neighbors. The smoothed transition is

    W[v1, v2] = lam * q(v2) / sum(q) + (1 - lam) * wt(v1 -> v2) / sum_v wt(v1 -> v)

with ``q`` the query-similarity estimate of each node, and node prestige is
the stationary distribution of ``W``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import IO, Callable, Mapping, Sequence

import numpy as np

from simfuse.runio import NormalizedRunList
from simfuse.similarity import NeighborhoodIndex, SimilarityMatrix, neighborhoods

__all__ = [
    "DEFAULT_MAX_ITER",
    "DEFAULT_TOL",
    "LAMBDA_FLOOR",
    "FusionGraph",
    "GraphNode",
    "NodeSetKind",
    "NotConverged",
    "PrestigeVector",
    "QuerySimMode",
    "base_weight",
    "build_graph",
    "build_nodes",
    "dump_graph",
    "smoothed_weight",
    "stationary_distribution",
]

LAMBDA_FLOOR = 1e-6
DEFAULT_TOL = 1e-10
# Worst case the L1 step shrinks by (1 - lam) per iteration, so lam = 0.1
# needs ~225 iterations to reach 1e-10 on a periodic neighbor graph.
DEFAULT_MAX_ITER = 1000


class NotConverged(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"power iteration did not converge after {iterations} iterations "
            f"(last L1 change {residual:.3g})"
        )
        self.iterations = iterations
        self.residual = residual


class NodeSetKind(enum.Enum):
    SET = "set"
    BAG = "bag"
    BAGDUP = "bagdup"


class QuerySimMode(enum.Enum):
    UNIFORM = "uniform"
    COMBSUM = "combsum"
    COMBMNZ = "combmnz"
    INSTANCE_SCORE = "instance"


_ALLOWED_MODES = {
    NodeSetKind.SET: {QuerySimMode.UNIFORM, QuerySimMode.COMBSUM, QuerySimMode.COMBMNZ},
    NodeSetKind.BAG: {QuerySimMode.UNIFORM, QuerySimMode.INSTANCE_SCORE},
    NodeSetKind.BAGDUP: {QuerySimMode.UNIFORM, QuerySimMode.INSTANCE_SCORE},
}


@dataclass(frozen=True)
class GraphNode:
    node_id: int
    doc_id: str
    # (list index, rank) for bag nodes, (list index, rank, copy) for bagdup
    # copies, () for set nodes
    origin: tuple[int, ...]
    query_sim: float


def _membership(lists: Sequence[NormalizedRunList]) -> dict[str, list[float]]:
    """doc_id -> normalized scores of its instances, in first-appearance order."""
    found: dict[str, list[float]] = {}
    for lst in lists:
        for e in lst.entries:
            found.setdefault(e.doc_id, []).append(e.norm_score)
    return found


def combsum_scores(lists: Sequence[NormalizedRunList]) -> dict[str, float]:
    return {d: sum(scores) for d, scores in _membership(lists).items()}


def combmnz_scores(lists: Sequence[NormalizedRunList]) -> dict[str, float]:
    return {d: len(scores) * sum(scores) for d, scores in _membership(lists).items()}


def build_nodes(
    lists: Sequence[NormalizedRunList],
    kind: NodeSetKind,
    query_sim_mode: QuerySimMode | Mapping[str, float] | Callable[[str], float] = QuerySimMode.UNIFORM,
) -> list[GraphNode]:
    """Create graph nodes for ``lists``.

    For ``SET`` graphs ``query_sim_mode`` may also be a mapping or callable
    giving an arbitrary per-document fusion score to use as the query
    similarity.
    """
    if not lists:
        raise ValueError("need at least one list")
    kind = NodeSetKind(kind)
    custom = None
    if isinstance(query_sim_mode, (str, QuerySimMode)):
        mode = QuerySimMode(query_sim_mode)
        if mode not in _ALLOWED_MODES[kind]:
            raise ValueError(f"query-similarity mode {mode.value} is not defined for {kind.value} graphs")
    else:
        if kind is not NodeSetKind.SET:
            raise ValueError("custom query-similarity scores are only supported for set graphs")
        custom = query_sim_mode if callable(query_sim_mode) else query_sim_mode.__getitem__
        mode = None

    nodes: list[GraphNode] = []
    if kind is NodeSetKind.SET:
        if custom is not None:
            scores = {d: float(custom(d)) for d in _membership(lists)}
        elif mode is QuerySimMode.COMBSUM:
            scores = combsum_scores(lists)
        elif mode is QuerySimMode.COMBMNZ:
            scores = combmnz_scores(lists)
        else:
            scores = {d: 1.0 for d in _membership(lists)}
        for nid, (doc_id, q) in enumerate(scores.items()):
            nodes.append(GraphNode(nid, doc_id, (), q))
    else:
        copies = {d: len(s) for d, s in _membership(lists).items()}
        for i, lst in enumerate(lists):
            for e in lst.entries:
                q = 1.0 if mode is QuerySimMode.UNIFORM else e.norm_score
                if kind is NodeSetKind.BAG:
                    nodes.append(GraphNode(len(nodes), e.doc_id, (i, e.rank), q))
                else:
                    for c in range(1, copies[e.doc_id] + 1):
                        nodes.append(GraphNode(len(nodes), e.doc_id, (i, e.rank, c), q))

    if any(n.query_sim < 0 for n in nodes) or not any(n.query_sim > 0 for n in nodes):
        raise ValueError("query similarities must be nonnegative with at least one positive")
    return nodes


@dataclass(frozen=True)
class FusionGraph:
    nodes: tuple[GraphNode, ...]
    neighborhoods: NeighborhoodIndex
    lam: float
    alpha: int
    similarity: SimilarityMatrix
    # row-normalized base weights; rows with no neighbors are uniform
    propagation: np.ndarray = field(repr=False, compare=False)

    @property
    def effective_lambda(self) -> float:
        return max(self.lam, LAMBDA_FLOOR)

    @property
    def teleport(self) -> np.ndarray:
        q = np.array([n.query_sim for n in self.nodes])
        return q / q.sum()

    def transition_matrix(self) -> np.ndarray:
        lam = self.effective_lambda
        return lam * self.teleport[None, :] + (1.0 - lam) * self.propagation

    def with_lambda(self, lam: float) -> "FusionGraph":
        _check_lambda(lam)
        return replace(self, lam=lam)

    def __len__(self) -> int:
        return len(self.nodes)


def _check_lambda(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")


def build_graph(
    nodes: Sequence[GraphNode], similarity: SimilarityMatrix, lam: float, alpha: int
) -> FusionGraph:
    _check_lambda(lam)
    nodes = tuple(nodes)
    if [n.node_id for n in nodes] != list(range(len(nodes))):
        raise ValueError("node ids must be 0..n-1 in order")
    nbhd = neighborhoods([(n.node_id, n.doc_id) for n in nodes], similarity, alpha)
    size = len(nodes)
    base = np.zeros((size, size))
    for n in nodes:
        for other in nbhd[n.node_id]:
            base[n.node_id, other] = similarity[n.doc_id, nodes[other].doc_id]
    row = base.sum(axis=1)
    propagation = np.where(row[:, None] > 0, base / np.where(row > 0, row, 1.0)[:, None], 1.0 / size)
    propagation.setflags(write=False)
    return FusionGraph(nodes, nbhd, lam, alpha, similarity, propagation)


def base_weight(v1: GraphNode, v2: GraphNode, graph: FusionGraph) -> float:
    if v2.node_id in graph.neighborhoods[v1.node_id]:
        return graph.similarity[v1.doc_id, v2.doc_id]
    return 0.0


def smoothed_weight(v1: GraphNode, v2: GraphNode, graph: FusionGraph) -> float:
    lam = graph.effective_lambda
    return lam * graph.teleport[v2.node_id] + (1.0 - lam) * graph.propagation[v1.node_id, v2.node_id]


@dataclass(frozen=True)
class PrestigeVector:
    values: np.ndarray
    iterations: int
    residual: float

    def __getitem__(self, node_id: int) -> float:
        return float(self.values[node_id])

    def __len__(self) -> int:
        return len(self.values)

    def as_dict(self) -> dict[int, float]:
        return {i: float(v) for i, v in enumerate(self.values)}


def stationary_distribution(
    graph: FusionGraph,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    solver: str = "power",
) -> PrestigeVector:
    """Stationary distribution of the smoothed transition matrix.

    ``solver="power"`` runs power iteration from the uniform vector until the
    L1 change drops below ``tol``. ``solver="direct"`` solves the balance
    equations with a dense linear solve instead, which is preferable for
    lambda close to 0 where power iteration can need millions of steps.
    """
    if solver not in ("power", "direct"):
        raise ValueError(f"unknown solver {solver!r}")
    if graph.effective_lambda == 1.0:
        # every row equals the teleport vector; returning it directly keeps
        # tied query similarities exactly tied
        return PrestigeVector(graph.teleport, 1, 0.0)
    w = graph.transition_matrix()
    n = len(w)
    if solver == "direct":
        a = w.T - np.eye(n)
        a[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        x = np.linalg.solve(a, b)
        return PrestigeVector(x, 0, float(np.abs(x @ w - x).sum()))
    x = np.full(n, 1.0 / n)
    change = float("inf")
    for it in range(1, max_iter + 1):
        nxt = x @ w
        change = float(np.abs(nxt - x).sum())
        x = nxt
        if change < tol:
            return PrestigeVector(x, it, change)
    raise NotConverged(max_iter, change)


def dump_graph(graph: FusionGraph, stream: IO[str]) -> None:
    """Write nodes and nonzero base edges as two tab-separated tables."""
    stream.write(f"# nodes lambda={graph.lam!r} alpha={graph.alpha}\n")
    stream.write("node_id\tdoc_id\torigin\tquery_sim\n")
    for n in graph.nodes:
        origin = ",".join(str(x) for x in n.origin) or "-"
        stream.write(f"{n.node_id}\t{n.doc_id}\t{origin}\t{n.query_sim!r}\n")
    stream.write("# edges\n")
    stream.write("from\tto\tweight\n")
    for n in graph.nodes:
        for other in graph.neighborhoods[n.node_id]:
            w = graph.similarity[n.doc_id, graph.nodes[other].doc_id]
            stream.write(f"{n.node_id}\t{other}\t{w!r}\n")
