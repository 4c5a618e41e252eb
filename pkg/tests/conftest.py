import random

import numpy as np
import pytest

from simfuse.corpus import build_collection_stats, build_term_vector
from simfuse.runio import RunList, normalize_scores
from simfuse.similarity import SimilarityMatrix, SmoothingParams, build_similarity_matrix


def nlist(qid, tag, scored):
    """Normalized list from (doc_id, raw score) pairs given in rank order."""
    return normalize_scores(RunList.from_scores(qid, tag, scored))


@pytest.fixture
def table2():
    # two three-document lists: L1 = d1, d2, d3 and L2 = d2, d4, d1
    l1 = nlist("q1", "L1", [("d1", 0.5), ("d2", 0.3), ("d3", 0.2)])
    l2 = nlist("q1", "L2", [("d2", 0.5), ("d4", 0.3), ("d1", 0.2)])
    return [l1, l2]


def random_instance(seed, n_lists=3, max_k=10, max_docs=30, vocab=12):
    """Random lists over a small synthetic corpus plus the pool similarity matrix."""
    rng = random.Random(seed)
    n_docs = rng.randint(4, max_docs)
    docs = [f"d{i:02d}" for i in range(n_docs)]
    words = [f"w{i}" for i in range(vocab)]
    vectors = {
        d: build_term_vector(rng.choices(words, k=rng.randint(1, 15))) for d in docs
    }
    lists = []
    for i in range(n_lists):
        k = rng.randint(1, min(max_k, n_docs))
        picked = rng.sample(docs, k)
        scores = sorted((rng.uniform(0.1, 10.0) for _ in picked), reverse=True)
        lists.append(nlist("q", f"r{i}", list(zip(picked, scores))))
    pool = list(dict.fromkeys(d for lst in lists for d in lst.doc_ids))
    stats = build_collection_stats(vectors.values())
    matrix = build_similarity_matrix(pool, vectors, stats, SmoothingParams(mu=rng.choice([10.0, 100.0, 1000.0])))
    return lists, matrix


def random_matrix(doc_ids, rng):
    vals = np.array([[rng.uniform(0.05, 1.0) for _ in doc_ids] for _ in doc_ids])
    return SimilarityMatrix(doc_ids, vals)



# acceptance bookkeeping: one PASS/FAIL line per criterion in the summary
_markers: dict[str, tuple[int, str]] = {}
_results: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _markers[item.nodeid] = (m.args[0], m.args[1])


def pytest_runtest_logreport(report):
    if report.nodeid not in _markers:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        number, title = _markers[report.nodeid]
        _results[number] = ("PASS" if report.passed else "FAIL", title)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        status, title = _results[number]
        terminalreporter.write_line(f"{status}  [{number:2d}] {title}")
