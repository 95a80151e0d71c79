import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from childci import stats
from childci.model import DomainError

distinct = st.lists(st.integers(-1000, 1000), min_size=2, max_size=14, unique=True)


def test_mann_whitney_separated_triples():
    u, p = stats.mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert u == 0 and p == pytest.approx(0.1)


def test_u_distribution_counts():
    dist = stats.u_distribution(3, 3)
    assert sum(dist) == math.comb(6, 3)
    assert list(dist) == [1, 1, 2, 3, 3, 3, 3, 2, 1, 1]


@settings(max_examples=60)
@given(distinct, st.integers(1, 6))
def test_exact_p_equals_enumeration(values, m):
    m = min(m, len(values) - 1)
    a, b = values[:m], values[m:]
    if min(len(a), len(b)) > stats.EXACT_MAX_MIN_SIZE:
        return
    assert stats.mann_whitney_u(a, b)[1] == oracles.mann_whitney_exact_p(a, b)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=12), st.lists(st.floats(0, 1), min_size=1, max_size=12))
def test_mann_whitney_symmetric(a, b):
    ua, pa = stats.mann_whitney_u(a, b)
    ub, pb = stats.mann_whitney_u(b, a)
    assert ua == ub and pa == pytest.approx(pb, abs=1e-12)
    assert 0 <= pa <= 1


@pytest.mark.parametrize("a", [[0.5, 0.5, 0.7], [1, 2, 3, 4, 5, 6, 7, 8, 9, 10], list(range(3))])
def test_identical_samples_give_p_one(a):
    assert stats.mann_whitney_u(a, list(a))[1] == pytest.approx(1.0, abs=1e-9)


def test_mann_whitney_normal_path_with_ties():
    rng = np.random.default_rng(0)
    a, b = rng.integers(0, 5, 30), rng.integers(2, 7, 30)
    from scipy.stats import mannwhitneyu
    ref = mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
    assert stats.mann_whitney_u(a, b)[1] == pytest.approx(ref.pvalue, rel=1e-9)


def test_kruskal_examples():
    h, p = stats.kruskal_wallis([[1, 2, 3], [10, 11, 12], [20, 21, 22]])
    assert p < 0.05
    perm = oracles.kruskal_permutation_p([np.array(g, float) for g in ([1, 2, 3], [10, 11, 12], [20, 21, 22])],
                                         20000, np.random.default_rng(1))
    assert perm < 0.05
    assert stats.kruskal_wallis([[1, 2, 3], [1, 2, 3]])[0] == pytest.approx(0.0, abs=1e-12)
    assert stats.kruskal_wallis([[4, 4], [4], [4, 4, 4]]) == (0.0, 1.0)
    with pytest.raises(DomainError):
        stats.kruskal_wallis([[1, 2]])
    with pytest.raises(DomainError):
        stats.kruskal_wallis([[1], []])


@settings(max_examples=40)
@given(st.lists(st.lists(st.integers(-50, 50), min_size=1, max_size=8), min_size=2, max_size=4))
def test_kruskal_rank_invariance(groups):
    # integer inputs keep the cubic map exact, so ranks and ties are preserved
    h1, p1 = stats.kruskal_wallis(groups)
    h2, p2 = stats.kruskal_wallis([[v ** 3 + 2 * v - 9 for v in g] for g in groups])
    assert h1 == pytest.approx(h2, rel=1e-9, abs=1e-9)
    assert 0 <= p1 <= 1


@settings(max_examples=30)
@given(st.lists(st.lists(st.floats(-50, 50), min_size=1, max_size=8), min_size=2, max_size=4))
def test_kruskal_matches_scipy(groups):
    from scipy.stats import kruskal
    if len({v for g in groups for v in g}) < 2:
        return
    ref = kruskal(*groups)
    h, p = stats.kruskal_wallis(groups, "chi2")
    assert h == pytest.approx(ref.statistic, rel=1e-9, abs=1e-9)
    assert p == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-12)


def test_mann_whitney_method_switch():
    a, b = [1, 2, 3, 4], [5, 6, 7, 9]
    assert stats.mann_whitney_u(a, b)[1] == stats.mann_whitney_u(a, b, "exact")[1]
    assert stats.mann_whitney_u(a, b, "normal")[1] != stats.mann_whitney_u(a, b, "exact")[1]
    with pytest.raises(DomainError):
        stats.mann_whitney_u([1, 1], [2, 3], "exact")
    with pytest.raises(DomainError):
        stats.mann_whitney_u(a, b, "bootstrap")


def _kruskal_enumerated_p(groups):
    """Share of all distinct relabellings with H at least the observed one."""
    sizes = [len(g) for g in groups]
    allv = np.concatenate(groups)
    h0 = stats.kruskal_wallis(groups, "chi2")[0]
    hits = total = 0
    for perm in set(itertools.permutations(np.repeat(np.arange(len(sizes)), sizes))):
        perm = np.array(perm)
        h = stats.kruskal_wallis([allv[perm == j] for j in range(len(sizes))], "chi2")[0]
        total += 1
        hits += h >= h0 - 1e-9
    return hits / total


@settings(max_examples=15, deadline=None)
@given(st.lists(st.integers(-100, 100), min_size=6, max_size=7, unique=True), st.integers(1, 3), st.integers(1, 3))
def test_kruskal_exact_matches_enumeration(values, n1, n2):
    if len(values) - n1 - n2 < 1:
        return
    groups = [np.array(values[:n1], float), np.array(values[n1:n1 + n2], float),
              np.array(values[n1 + n2:], float)]
    assert stats.kruskal_wallis(groups, "exact")[1] == pytest.approx(_kruskal_enumerated_p(groups), abs=1e-12)


def test_kruskal_method_selection():
    small = [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]
    assert stats.kruskal_wallis(small)[1] == stats.kruskal_wallis(small, "exact")[1]
    big = [np.arange(30.0), np.arange(30.0) + 0.5, np.arange(30.0) + 0.25]
    assert stats.kruskal_wallis(big)[1] == stats.kruskal_wallis(big, "chi2")[1]
    tied = [[1.0, 1.0, 2.0], [2.0, 3.0]]
    assert stats.kruskal_wallis(tied)[1] == stats.kruskal_wallis(tied, "chi2")[1]
    with pytest.raises(DomainError):
        stats.kruskal_wallis(tied, "exact")


def test_bonferroni_five_combinations():
    rng = np.random.default_rng(2)
    samples = {f"C{k}": rng.normal(0.7 + 0.05 * k, 0.02, 25) for k in range(5)}
    t = stats.bonferroni_pairwise(samples)
    assert t.alpha_corrected == pytest.approx(0.01)
    assert len(t.rows) == 10
    assert [(r.first, r.second) for r in t.rows] == list(itertools.combinations(samples, 2))
    assert all(r.rejected == (r.p < 0.01) for r in t.rows)
    assert t.to_dict()["sample_unit"] == "repetition mean accuracy"


def test_bonferroni_identical_samples_never_reject():
    s = list(np.linspace(0.6, 0.9, 25))
    t = stats.bonferroni_pairwise({k: s for k in "ABCDE"})
    assert not any(r.rejected for r in t.rows)
    assert t.kruskal_h == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(DomainError):
        stats.bonferroni_pairwise({"A": s})
