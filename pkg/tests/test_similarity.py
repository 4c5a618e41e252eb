import io
import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simfuse.corpus import CollectionStats, build_collection_stats, build_term_vector
from simfuse.similarity import (
    MissingDocumentText,
    SimilarityMatrix,
    SmoothingParams,
    ZeroSmoothedProbability,
    build_similarity_matrix,
    kl_divergence,
    neighborhoods,
    read_similarity_cache,
    sim,
    smoothed_prob,
    write_similarity_cache,
)

D1 = build_term_vector(["a", "a", "b"])
D2 = build_term_vector(["a", "b", "b"])
STATS = build_collection_stats([D1, D2])
MU2 = SmoothingParams(mu=2)


def brute_force_kl(c1, c2, coll, mu):
    """KL(MLE(d1) || Dirichlet(d2)) summed over an explicit vocabulary."""
    n1, n2, total = sum(c1.values()), sum(c2.values()), sum(coll.values())
    out = 0.0
    for w in sorted(coll):
        p = c1.get(w, 0) / n1
        if p == 0:
            continue
        q = (c2.get(w, 0) + mu * coll[w] / total) / (n2 + mu)
        out += p * math.log(p / q)
    return out


def test_smoothed_prob_examples():
    assert smoothed_prob("a", D2, STATS, MU2) == pytest.approx(0.4, abs=1e-15)
    assert smoothed_prob("a", D1, STATS, SmoothingParams(0)) == pytest.approx(2 / 3)
    absent = build_term_vector(["b"])
    assert smoothed_prob("a", absent, STATS, MU2) == pytest.approx(2 * 0.5 / (1 + 2))


def test_two_term_kl_example():
    oracle = brute_force_kl({"a": 2, "b": 1}, {"a": 1, "b": 2}, {"a": 3, "b": 3}, 2.0)
    assert oracle == pytest.approx(0.1446, abs=5e-5)
    assert kl_divergence(D1, D2, STATS, MU2) == pytest.approx(oracle, abs=1e-12)
    assert sim(D1, D2, STATS, MU2) == pytest.approx(math.exp(-oracle), abs=1e-12)
    # 0.8654 is exp(-0.1446) taken from the rounded divergence
    assert sim(D1, D2, STATS, MU2) == pytest.approx(0.8654, abs=1e-4)
    assert oracle == pytest.approx(0.1446215275432874, abs=1e-12)
    assert sim(D1, D2, STATS, MU2) == pytest.approx(0.865349742184445, abs=1e-6)


def test_identical_mle_zero():
    a = build_term_vector(["a"])
    stats = build_collection_stats([a])
    assert kl_divergence(a, a, stats, SmoothingParams(0)) == 0.0
    assert sim(a, a, stats, SmoothingParams(0)) == 1.0


def test_zero_probability():
    a, b = build_term_vector(["a"]), build_term_vector(["b"])
    stats = build_collection_stats([a, b])
    with pytest.raises(ZeroSmoothedProbability):
        kl_divergence(a, b, stats, SmoothingParams(0))
    with pytest.raises(ZeroSmoothedProbability):
        build_similarity_matrix(["x", "y"], {"x": a, "y": b}, stats, SmoothingParams(0))


def test_negative_mu():
    with pytest.raises(ValueError):
        SmoothingParams(-1)


def test_sim_monotone_in_divergence():
    far = build_term_vector(["b", "b", "b", "c"])
    stats = build_collection_stats([D1, D2, far])
    assert kl_divergence(D1, far, stats, MU2) > kl_divergence(D1, D2, stats, MU2)
    assert sim(D1, far, stats, MU2) < sim(D1, D2, stats, MU2)


def _random_corpus(rng, n):
    words = [f"w{i}" for i in range(8)]
    vecs = {f"d{i}": build_term_vector(rng.choices(words, k=rng.randint(1, 12))) for i in range(n)}
    return vecs, build_collection_stats(vecs.values())


@pytest.mark.parametrize("seed", range(20))
def test_matrix_matches_scalar(seed):
    rng = random.Random(seed)
    vecs, stats = _random_corpus(rng, rng.randint(2, 9))
    params = SmoothingParams(rng.choice([0.5, 10.0, 1000.0]))
    m = build_similarity_matrix(list(vecs), vecs, stats, params)
    assert len(m) == len(vecs) * (len(vecs) - 1)
    assert len(list(m.items())) == len(m)
    for a, b, v in m.items():
        ref = brute_force_kl(dict(vecs[a].counts), dict(vecs[b].counts), dict(stats.term_freq), params.mu)
        assert v == pytest.approx(math.exp(-ref), rel=1e-10)
        assert 0.0 < v


def test_matrix_count_and_self_pairs():
    vecs = {"x": D1, "y": D2}
    m = build_similarity_matrix(["x", "y", "x"], vecs, STATS, MU2)
    assert m.doc_ids == ("x", "y") and len(m) == 2
    with pytest.raises(KeyError):
        m["x", "x"]
    assert m["x", "y"] == pytest.approx(sim(D1, D2, STATS, MU2))


def test_missing_document():
    with pytest.raises(MissingDocumentText):
        build_similarity_matrix(["x", "nope"], {"x": D1}, STATS, MU2)


def test_empty_document_row():
    empty = build_term_vector([])
    m = build_similarity_matrix(["e", "x"], {"e": empty, "x": D1}, STATS, MU2)
    assert m["e", "x"] == 1.0
    assert 0 < m["x", "e"] <= 1.0


def test_restrict():
    rng = random.Random(3)
    vecs, stats = _random_corpus(rng, 5)
    m = build_similarity_matrix(list(vecs), vecs, stats)
    sub = m.restrict(["d3", "d1"])
    assert sub.doc_ids == ("d3", "d1") and sub["d3", "d1"] == m["d3", "d1"]
    with pytest.raises(MissingDocumentText):
        m.restrict(["zz"])


def test_cache_round_trip():
    rng = random.Random(5)
    vecs, stats = _random_corpus(rng, 6)
    m = build_similarity_matrix(list(vecs), vecs, stats)
    buf = io.StringIO()
    write_similarity_cache(m, buf, mu=1000.0)
    buf.seek(0)
    back = read_similarity_cache(buf)
    assert back.doc_ids == m.doc_ids
    assert np.array_equal(np.nan_to_num(back.values), np.nan_to_num(m.values))


def test_cache_bad_header():
    with pytest.raises(ValueError):
        read_similarity_cache(io.StringIO("x\ty\t0.5\n"))


def _matrix(doc_ids, rng):
    return SimilarityMatrix(doc_ids, np.array([[rng.choice([0.2, 0.5, 0.9]) for _ in doc_ids] for _ in doc_ids]))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12))
def test_neighborhood_properties(seed, alpha):
    rng = random.Random(seed)
    docs = [f"d{i}" for i in range(rng.randint(1, 6))]
    nodes = [(i, rng.choice(docs)) for i in range(rng.randint(1, 12))]
    m = _matrix(docs, rng)
    index = neighborhoods(nodes, m, alpha)
    doc_of = dict(nodes)
    for nid, doc in nodes:
        nb = index[nid]
        eligible = [o for o, d in nodes if d != doc]
        assert len(nb) == min(alpha, len(eligible))
        assert all(doc_of[o] != doc for o in nb)
        assert len(set(nb)) == len(nb)
        # brute force: sort eligible by (-sim, node_id)
        expected = sorted(eligible, key=lambda o: (-m[doc, doc_of[o]], o))[:alpha]
        assert list(nb) == expected


def test_neighborhood_saturation_sorted():
    m = SimilarityMatrix(["a", "b", "c"], np.array([[0, 0.3, 0.7], [0.5, 0, 0.5], [0.1, 0.1, 0]]))
    nodes = [(0, "a"), (1, "b"), (2, "c"), (3, "b")]
    index = neighborhoods(nodes, m, alpha=10)
    assert index[0] == (2, 1, 3)
    assert index[1] == (0, 2)
    assert index[2] == (0, 1, 3)
    assert neighborhoods(nodes, m, alpha=1)[0] == (2,)
    with pytest.raises(ValueError):
        neighborhoods(nodes, m, alpha=0)


def test_neighborhood_unknown_document():
    m = SimilarityMatrix(["a", "b"], np.ones((2, 2)))
    with pytest.raises(MissingDocumentText):
        neighborhoods([(0, "a"), (1, "zz")], m, 1)
