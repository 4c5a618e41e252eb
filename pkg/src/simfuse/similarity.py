"""Language-model inter-document similarity and nearest-neighbor sets.

``sim(d1, d2) = exp(-KL(p_d1^MLE || p_d2^Dirichlet(mu)))``. The measure is
asymmetric: the first document contributes its unsmoothed maximum
likelihood model, the second a Dirichlet-smoothed one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from simfuse.corpus import CollectionStats, TermVector

__all__ = [
    "CACHE_HEADER",
    "MissingDocumentText",
    "NeighborhoodIndex",
    "SimilarityMatrix",
    "SmoothingParams",
    "ZeroSmoothedProbability",
    "build_similarity_matrix",
    "kl_divergence",
    "neighborhoods",
    "read_similarity_cache",
    "sim",
    "smoothed_prob",
    "write_similarity_cache",
]

CACHE_HEADER = "# simfuse similarity cache v1"


class ZeroSmoothedProbability(ValueError):
    """A term of the first document has zero probability under the second."""


class MissingDocumentText(KeyError):
    def __init__(self, doc_id: str):
        super().__init__(doc_id)
        self.doc_id = doc_id

    def __str__(self):
        return f"no text available for document {self.doc_id!r}"


@dataclass(frozen=True)
class SmoothingParams:
    mu: float = 1000.0

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")


def smoothed_prob(
    term: str, doc: TermVector, stats: CollectionStats, params: SmoothingParams = SmoothingParams()
) -> float:
    return (doc.tf(term) + params.mu * stats.prob(term)) / (doc.length + params.mu)


def kl_divergence(
    d1: TermVector, d2: TermVector, stats: CollectionStats, params: SmoothingParams = SmoothingParams()
) -> float:
    """KL divergence of d1's MLE model from d2's smoothed model (natural log).

    Not clamped: the two models have different supports, so small negative
    values are possible.
    """
    terms = []
    for w, tf in sorted(d1.counts.items()):
        p1 = tf / d1.length
        p2 = smoothed_prob(w, d2, stats, params)
        if p2 <= 0.0:
            raise ZeroSmoothedProbability(f"term {w!r} has zero smoothed probability")
        terms.append(p1 * math.log(p1 / p2))
    return math.fsum(terms)


def sim(
    d1: TermVector, d2: TermVector, stats: CollectionStats, params: SmoothingParams = SmoothingParams()
) -> float:
    return math.exp(-kl_divergence(d1, d2, stats, params))


class SimilarityMatrix:
    """Directed document-to-document similarities over a fixed pool.

    Self pairs are not stored; ``matrix[a, b]`` raises ``KeyError`` for them.
    """

    def __init__(self, doc_ids: Sequence[str], values: np.ndarray):
        self.doc_ids = tuple(doc_ids)
        self.index = {d: i for i, d in enumerate(self.doc_ids)}
        if len(self.index) != len(self.doc_ids):
            raise ValueError("duplicate doc_ids in similarity matrix")
        values = np.array(values, dtype=float)
        if values.shape != (len(self.doc_ids), len(self.doc_ids)):
            raise ValueError("value array shape does not match doc_ids")
        np.fill_diagonal(values, np.nan)
        values.setflags(write=False)
        self.values = values

    def __getitem__(self, pair: tuple[str, str]) -> float:
        a, b = pair
        if a == b:
            raise KeyError(pair)
        return float(self.values[self.index[a], self.index[b]])

    def __len__(self) -> int:
        n = len(self.doc_ids)
        return n * (n - 1)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.index

    def items(self) -> Iterable[tuple[str, str, float]]:
        for i, a in enumerate(self.doc_ids):
            for j, b in enumerate(self.doc_ids):
                if i != j:
                    yield a, b, float(self.values[i, j])

    def restrict(self, doc_ids: Sequence[str]) -> "SimilarityMatrix":
        """Sub-matrix over ``doc_ids``, which must all be present."""
        missing = [d for d in doc_ids if d not in self.index]
        if missing:
            raise MissingDocumentText(missing[0])
        idx = np.array([self.index[d] for d in doc_ids], dtype=int)
        return SimilarityMatrix(doc_ids, self.values[np.ix_(idx, idx)])


def build_similarity_matrix(
    pool: Iterable[str],
    vectors: Mapping[str, TermVector],
    stats: CollectionStats,
    params: SmoothingParams = SmoothingParams(),
) -> SimilarityMatrix:
    """Similarities for all ordered pairs of distinct pool documents.

    Vectorized form of :func:`sim`; pool order is preserved (duplicates dropped).
    """
    doc_ids = list(dict.fromkeys(pool))
    for d in doc_ids:
        if d not in vectors:
            raise MissingDocumentText(d)
    n = len(doc_ids)
    vocab = sorted({w for d in doc_ids for w in vectors[d].counts})
    col = {w: i for i, w in enumerate(vocab)}
    counts = np.zeros((n, len(vocab)))
    for i, d in enumerate(doc_ids):
        for w, tf in vectors[d].counts.items():
            counts[i, col[w]] = tf
    lengths = counts.sum(axis=1)
    p_coll = np.array([stats.prob(w) for w in vocab]) if vocab else np.zeros(0)

    with np.errstate(divide="ignore", invalid="ignore"):
        mle = np.where(lengths[:, None] > 0, counts / lengths[:, None], 0.0)
        smoothed = (counts + params.mu * p_coll) / (lengths[:, None] + params.mu)
    present = mle > 0
    zero = smoothed <= 0
    blocked = present.astype(float) @ zero.T.astype(float)
    np.fill_diagonal(blocked, 0.0)
    if blocked.any():
        i, j = np.argwhere(blocked > 0)[0]
        raise ZeroSmoothedProbability(
            f"a term of {doc_ids[i]!r} has zero smoothed probability in {doc_ids[j]!r}"
        )
    with np.errstate(divide="ignore"):
        log_mle = np.where(present, np.log(np.where(present, mle, 1.0)), 0.0)
        log_smoothed = np.where(zero, 0.0, np.log(np.where(zero, 1.0, smoothed)))
    neg_entropy = (mle * log_mle).sum(axis=1)
    cross = mle @ log_smoothed.T
    kl = neg_entropy[:, None] - cross
    return SimilarityMatrix(doc_ids, np.exp(-kl))


@dataclass(frozen=True)
class NeighborhoodIndex:
    alpha: int
    members: Mapping[int, tuple[int, ...]]

    def __getitem__(self, node_id: int) -> tuple[int, ...]:
        return self.members[node_id]

    def __len__(self) -> int:
        return len(self.members)


def neighborhoods(
    nodes: Sequence[tuple[int, str]], matrix: SimilarityMatrix, alpha: int
) -> NeighborhoodIndex:
    """The ``alpha`` most similar nodes of each node among nodes of other documents.

    Ties are broken by ascending node id.
    """
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    node_ids = np.array([nid for nid, _ in nodes], dtype=int)
    try:
        doc_idx = np.array([matrix.index[d] for _, d in nodes], dtype=int)
    except KeyError as exc:
        raise MissingDocumentText(exc.args[0]) from None
    sims = matrix.values[doc_idx[:, None], doc_idx[None, :]]
    members = {}
    for row, nid in enumerate(node_ids):
        eligible = np.flatnonzero(doc_idx != doc_idx[row])
        order = np.lexsort((node_ids[eligible], -sims[row, eligible]))
        members[int(nid)] = tuple(int(x) for x in node_ids[eligible[order[:alpha]]])
    return NeighborhoodIndex(alpha, members)


def write_similarity_cache(matrix: SimilarityMatrix, stream: IO[str], mu: float | None = None) -> None:
    stream.write(CACHE_HEADER + "\n")
    if mu is not None:
        stream.write(f"# mu={mu!r}\n")
    stream.write("# doc_i\tdoc_j\tsim\n")
    for a, b, v in matrix.items():
        stream.write(f"{a}\t{b}\t{v!r}\n")


def read_similarity_cache(stream: Iterable[str]) -> SimilarityMatrix:
    lines = iter(stream)
    first = next(lines, "").rstrip("\n")
    if first != CACHE_HEADER:
        raise ValueError(f"not a similarity cache (header {first!r})")
    triples = []
    doc_ids: dict[str, None] = {}
    for lineno, line in enumerate(lines, start=2):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 3 tab-separated fields")
        a, b, v = parts
        doc_ids.setdefault(a)
        doc_ids.setdefault(b)
        triples.append((a, b, float(v)))
    ids = list(doc_ids)
    index = {d: i for i, d in enumerate(ids)}
    values = np.full((len(ids), len(ids)), np.nan)
    for a, b, v in triples:
        values[index[a], index[b]] = v
    return SimilarityMatrix(ids, values)
