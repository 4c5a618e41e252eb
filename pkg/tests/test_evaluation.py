import io
import itertools
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import nlist
from simfuse.evaluation import (
    EvalReport,
    average_precision_at_k,
    evaluate,
    mean_overlap,
    overlap_analysis,
    precision_at,
    report_rows,
    singleton_relevant_curve,
    summary_text,
    wilcoxon_signed_rank,
    write_report_csv,
)
from simfuse.fusion import FusedRanking
from simfuse.runio import QrelSet, RunList


def ranking(*docs):
    return FusedRanking("q", tuple((d, 1.0 / (i + 1)) for i, d in enumerate(docs)))


def qrels(rel, nonrel=()):
    return QrelSet({"q": {d: 1 for d in rel} | {d: 0 for d in nonrel}})


# (ranking, relevant set, p@5, p@10) worked out by hand
P_FIXTURES = [
    ("abcdefghij", "ace", 0.6, 0.3),
    ("abc", "abc", 0.6, 0.3),
    ("abcdefghij", "", 0.0, 0.0),
    ("abcdefghij", "abcdefghij", 1.0, 1.0),
    ("abcdefghij", "fghij", 0.0, 0.5),
    ("abcdefghijkl", "kl", 0.0, 0.0),
    ("abcdefghij", "j", 0.0, 0.1),
    ("abcdefghij", "a", 0.2, 0.1),
    ("a", "a", 0.2, 0.1),
    ("", "a", 0.0, 0.0),
    ("abcde", "xyz", 0.0, 0.0),
    ("abcdefg", "bdfg", 0.4, 0.4),
    ("abcdefghij", "bcde", 0.8, 0.4),
    ("abcdefghij", "abcde", 1.0, 0.5),
    ("abcdefghijklmnop", "aeimo", 0.4, 0.3),
    ("abcdefghij", "ej", 0.2, 0.2),
    ("abcdef", "f", 0.0, 0.1),
    ("abcdefghij", "acegi", 0.6, 0.5),
    ("abcdefghij", "bdfhj", 0.4, 0.5),
    ("zyxwvutsrq", "zyx", 0.6, 0.3),
]


@pytest.mark.parametrize("docs,rel,p5,p10", P_FIXTURES)
def test_precision_fixtures(docs, rel, p5, p10):
    r, q = ranking(*docs), qrels(rel)
    assert precision_at(r, q, 5) == p5
    assert precision_at(r, q, 10) == p10


def test_precision_validation():
    with pytest.raises(ValueError):
        precision_at(ranking("a"), qrels("a"), 0)


def brute_force_ap(docs, rel, k):
    """Mean over relevant documents of precision at its rank (0 when outside top k)."""
    if not rel:
        return 0.0
    total = 0.0
    for d in rel:
        if d in docs[:k]:
            r = docs.index(d) + 1
            total += sum(1 for x in docs[:r] if x in rel) / r
    return total / len(rel)


def test_ap_hand_values():
    assert average_precision_at_k(ranking("a", "b"), qrels("ab"), 5) == 1.0
    assert average_precision_at_k(ranking("x", "a"), qrels("a"), 5) == 0.5
    assert average_precision_at_k(ranking("a", "x", "b", "y", "z"), qrels("abc"), 5) == pytest.approx(
        (1 + 2 / 3) / 3
    )
    assert average_precision_at_k(ranking("a", "x", "b"), qrels(""), 5) == 0.0


def test_ap_exhaustive():
    checked = 0
    universe = "abcdef"
    for n in range(0, 7):
        for perm in itertools.permutations(universe, n):
            for n_rel in range(0, 4):
                for rel in itertools.combinations(universe, n_rel):
                    for k in (1, 3, 6):
                        got = average_precision_at_k(ranking(*perm), qrels(rel), k)
                        assert abs(got - brute_force_ap(list(perm), set(rel), k)) < 1e-12
                        checked += 1
    assert checked > 100_000


def test_evaluate_defaults_to_shared_queries():
    q = QrelSet({"q": {"a": 1}, "q2": {"b": 1}})
    rep = evaluate({"q": ranking("a", "x"), "other": ranking("z")}, q, k=20, system="s")
    assert list(rep.per_query) == ["q"]
    assert rep.per_query["q"] == {"p@5": 0.2, "p@10": 0.1, "map": 1.0}
    fixed = evaluate({"q": ranking("a")}, q, k=20, queries=["q", "q2"])
    assert fixed.per_query["q2"] == {"p@5": 0.0, "p@10": 0.0, "map": 0.0}
    assert fixed.mean("map") == 0.5 and fixed.query_count == 2


def enumerate_p(diffs):
    """Two-tailed p from all 2^n sign assignments of the average-ranked magnitudes."""
    diffs = [d for d in diffs if d != 0]
    n = len(diffs)
    mags = sorted(abs(d) for d in diffs)
    rank = {}
    for m in set(mags):
        idx = [i + 1 for i, x in enumerate(mags) if x == m]
        rank[m] = sum(idx) / len(idx)
    ranks = [rank[abs(d)] for d in diffs]
    observed = sum(r for r, d in zip(ranks, diffs) if d > 0)
    lo = hi = 0
    for signs in itertools.product((0, 1), repeat=n):
        w = sum(r for r, s in zip(ranks, signs) if s)
        lo += w <= observed + 1e-9
        hi += w >= observed - 1e-9
    return min(1.0, 2 * min(lo, hi) / 2**n)


def test_wilcoxon_identical():
    res = wilcoxon_signed_rank([0.1, 0.5], [0.1, 0.5])
    assert res.p_value == 1.0 and not res.significant_95 and res.n_effective == 0


def test_wilcoxon_five_positive():
    res = wilcoxon_signed_rank([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
    assert res.p_value == 2 / 32 and not res.significant_95


def test_wilcoxon_six_positive_significant_but_not_bonferroni():
    res = wilcoxon_signed_rank([1] * 6, [0] * 6)
    assert res.p_value == 2 / 64
    assert res.significant_95 and not res.significant_bonferroni
    assert wilcoxon_signed_rank([1] * 8, [0] * 8).significant_bonferroni


@pytest.mark.parametrize("seed", range(50))
def test_wilcoxon_exact_matches_enumeration(seed):
    rng = random.Random(seed)
    n = rng.randint(1, 10)
    # values on a p@5-like grid so ties and zeros are common
    a = [rng.choice([0, 0.2, 0.4, 0.6, 0.8, 1.0]) for _ in range(n)]
    b = [rng.choice([0, 0.2, 0.4, 0.6, 0.8, 1.0]) for _ in range(n)]
    diffs = [round(x - y, 12) for x, y in zip(a, b)]
    assert wilcoxon_signed_rank(a, b).p_value == enumerate_p(diffs)


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=30))
def test_wilcoxon_symmetric(pairs):
    a, b = [x for x, _ in pairs], [y for _, y in pairs]
    p1 = wilcoxon_signed_rank(a, b).p_value
    assert abs(p1 - wilcoxon_signed_rank(b, a).p_value) < 1e-12
    assert 0.0 < p1 <= 1.0


@pytest.mark.parametrize("seed", range(10))
def test_wilcoxon_normal_approximation_matches_scipy(seed):
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = random.Random(seed)
    n = rng.randint(30, 60)
    a = [round(rng.random(), 2) for _ in range(n)]
    b = [round(rng.random() * 0.8, 2) for _ in range(n)]
    ours = wilcoxon_signed_rank(a, b).p_value
    ref = scipy_stats.wilcoxon(
        [round(x - y, 12) for x, y in zip(a, b)], zero_method="wilcox", correction=True, method="approx"
    ).pvalue
    assert ours == pytest.approx(ref, rel=1e-9)


def test_wilcoxon_errors():
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1], [1, 2])
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([], [])


def _lists(*doc_lists):
    return [RunList.from_scores("q", f"r{i}", [(d, 10 - j) for j, d in enumerate(ds)]) for i, ds in enumerate(doc_lists)]


def test_overlap_two_lists():
    rep = overlap_analysis(_lists(["d1", "d2", "d3"], ["d2", "d4", "d1"]), qrels("d1 d2".split(), ["d3", "d4"]))
    assert rep.relevant == (0, 2) and rep.nonrelevant == (2, 0)
    assert rep.relevant_pct == (0.0, 100.0) and rep.nonrelevant_pct == (100.0, 0.0)


def test_overlap_identical_and_disjoint():
    q = qrels(["a"], ["b"])
    same = overlap_analysis(_lists("ab", "ab", "ab"), q)
    assert same.relevant_pct == (0.0, 0.0, 100.0) and same.nonrelevant_pct == (0.0, 0.0, 100.0)
    apart = overlap_analysis(_lists("a", "b", "c"), q)
    assert apart.relevant_pct == (100.0, 0.0, 0.0) and apart.nonrelevant_pct == (100.0, 0.0, 0.0)
    none = overlap_analysis(_lists("b", "b", "c"), q)
    assert none.relevant_pct is None


def test_mean_overlap_skips_empty_groups():
    q = qrels(["a"], ["b"])
    reps = [overlap_analysis(_lists("ab", "a", "x"), q), overlap_analysis(_lists("b", "y", "z"), q)]
    rel, nonrel = mean_overlap(reps)
    assert rel == (0.0, 100.0, 0.0)
    assert nonrel == pytest.approx((100.0, 0.0, 0.0))


def test_singleton_curve_extremes():
    q = qrels(list("abcdef"))
    same = _lists("abcdef", "abcdef", "abcdef")
    assert [p for _, p in singleton_relevant_curve(same, q, [1, 3, 6])] == [0.0, 0.0, 0.0]
    apart = _lists("ab", "cd", "ef")
    assert [p for _, p in singleton_relevant_curve(apart, q, [1, 2])] == [100.0, 100.0]
    assert math.isnan(singleton_relevant_curve(_lists("x", "y", "z"), q, [1])[0][1])
    with pytest.raises(ValueError):
        singleton_relevant_curve(same, q, [3, 1])


@pytest.mark.parametrize("seed", range(10))
def test_singleton_curve_brute_force(seed):
    rng = random.Random(seed)
    docs = [f"d{i}" for i in range(25)]
    lists = _lists(*(rng.sample(docs, 12) for _ in range(3)))
    q = qrels(rng.sample(docs, 10))
    for k, pct in singleton_relevant_curve(lists, q, [2, 5, 8, 12]):
        tops = [set(lst.doc_ids[:k]) for lst in lists]
        pooled_rel = [d for d in set().union(*tops) if q.is_relevant("q", d)]
        if not pooled_rel:
            assert math.isnan(pct)
            continue
        once = sum(1 for d in pooled_rel if sum(d in t for t in tops) == 1)
        assert pct == pytest.approx(100.0 * once / len(pooled_rel))


def _reports():
    base = EvalReport("base", 20, {f"q{i}": {"p@5": 0.2, "p@10": 0.1, "map": 0.1} for i in range(10)})
    better = EvalReport("new", 20, {f"q{i}": {"p@5": 0.8, "p@10": 0.1, "map": 0.1 + i / 100} for i in range(10)})
    return {"base": base, "new": better}


def test_summary_marks():
    text = summary_text(_reports(), compare_to=["base"])
    lines = text.splitlines()
    assert lines[0] == "comparisons: [1] base"
    new_row = next(l for l in lines if l.startswith("new"))
    assert "0.8000 [1*]" in new_row and "0.1000 " in new_row
    assert "[1" not in next(l for l in lines if l.startswith("base"))
    assert lines[-1] == "queries: 10"


def test_report_csv():
    rows = report_rows(_reports(), compare_to=["base"])
    buf = io.StringIO()
    write_report_csv(rows, buf)
    out = buf.getvalue().splitlines()
    assert out[0] == "system,metric,mean,p_vs_base"
    assert out[1] == "base,p@5,0.200000,"
    assert out[4].startswith("new,p@5,0.800000,0.00")
