"""Rank-based tests used to compare combination accuracies."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import chi2, norm, rankdata

from .model import DomainError

EXACT_MAX_MIN_SIZE = 8
EXACT_MAX_ARRANGEMENTS = 2_000_000


def _tie_term(values: np.ndarray) -> float:
    _, counts = np.unique(values, return_counts=True)
    return float((counts ** 3 - counts).sum())


def kruskal_wallis(groups: Sequence[Sequence[float]], method: str = "auto") -> tuple[float, float]:
    """H statistic with tie correction and its upper-tail p.

    ``chi2`` uses the chi-square tail with ``groups - 1`` degrees of freedom.
    ``exact`` enumerates every assignment of ranks to groups and needs
    untied data. ``auto`` is exact for untied data with at most
    ``EXACT_MAX_ARRANGEMENTS`` assignments, chi-square otherwise.
    """
    if method not in ("auto", "exact", "chi2"):
        raise DomainError(f"unknown method {method!r}")
    groups = [np.asarray(g, dtype=float).ravel() for g in groups]
    if len(groups) < 2 or any(len(g) == 0 for g in groups):
        raise DomainError("kruskal_wallis needs >= 2 non-empty groups")
    allv = np.concatenate(groups)
    n = len(allv)
    ranks = rankdata(allv)
    ties = _tie_term(allv)
    denom = 1.0 - ties / (n ** 3 - n) if n > 1 else 0.0
    if denom <= 0:
        return 0.0, 1.0
    sizes = [len(g) for g in groups]
    sums = np.add.reduceat(ranks, np.cumsum([0] + sizes[:-1]))
    h = 12.0 / (n * (n + 1)) * float(np.sum(sums ** 2 / sizes)) - 3.0 * (n + 1)
    h = max(h / denom, 0.0)
    if method == "exact" and ties:
        raise DomainError("exact Kruskal-Wallis p needs untied samples")
    small = _arrangements(sizes) <= EXACT_MAX_ARRANGEMENTS
    if method == "exact" or (method == "auto" and ties == 0 and small):
        return float(h), _kruskal_exact_p(sizes, [int(round(v)) for v in sums])
    return float(h), float(min(1.0, chi2.sf(h, len(groups) - 1)))


def _arrangements(sizes: Sequence[int]) -> int:
    out, left = 1, sum(sizes)
    for k in sizes:
        out *= math.comb(left, k)
        left -= k
    return out


def _kruskal_exact_p(sizes: Sequence[int], rank_sums: Sequence[int]) -> float:
    """Share of rank assignments whose H is at least the observed one.

    H grows with sum(R_j^2 / n_j); scaling by lcm(n_j) keeps the comparison
    in integers.
    """
    L = math.lcm(*sizes)
    score = lambda s: sum(v * v * (L // k) for v, k in zip(s, sizes))
    observed = score(rank_sums)
    k = len(sizes)
    states: dict[tuple, int] = {((0,) * k, (0,) * k): 1}
    for r in range(1, sum(sizes) + 1):
        nxt: dict[tuple, int] = {}
        for (c, s), w in states.items():
            for j in range(k):
                if c[j] < sizes[j]:
                    key = (c[:j] + (c[j] + 1,) + c[j + 1:], s[:j] + (s[j] + r,) + s[j + 1:])
                    nxt[key] = nxt.get(key, 0) + w
        states = nxt
    hit = sum(w for (_, s), w in states.items() if score(s) >= observed)
    return hit / sum(states.values())


def u_distribution(m: int, n: int) -> np.ndarray:
    """Counts of each U value over all C(m+n, m) rank arrangements (no ties)."""
    if m > n:
        m, n = n, m
    top = m * n
    # dp[j][u]: ways to place j of the first-sample ranks with U-contribution u
    dp = np.zeros((m + 1, top + 1), dtype=object)
    dp[0, 0] = 1
    for pos in range(m + n):
        for j in range(min(m, pos + 1), 0, -1):
            # choosing position pos (0-based) as the j-th first-sample rank
            # adds pos - (j - 1) second-sample values below it
            shift = pos - (j - 1)
            if shift > n:
                continue
            dp[j, shift:] = dp[j, shift:] + dp[j - 1, :top + 1 - shift]
    return np.array([int(v) for v in dp[m]], dtype=object)


def mann_whitney_u(a, b, method: str = "auto") -> tuple[float, float]:
    """U = min(U_a, U_b) and a two-sided p.

    ``auto`` is exact when the smaller sample has at most 8 values and there
    are no ties, otherwise normal approximation with tie and continuity
    correction. ``exact`` and ``normal`` force one path; exact needs untied data.
    """
    if method not in ("auto", "exact", "normal"):
        raise DomainError(f"unknown method {method!r}")
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    m, n = len(a), len(b)
    if m == 0 or n == 0:
        raise DomainError("mann_whitney_u needs non-empty samples")
    allv = np.concatenate([a, b])
    ranks = rankdata(allv)
    ua = float(ranks[:m].sum() - m * (m + 1) / 2.0)
    ub = m * n - ua
    u = min(ua, ub)
    ties = _tie_term(allv)
    if method == "exact" and ties:
        raise DomainError("exact Mann-Whitney p needs untied samples")
    if method == "exact" or (method == "auto" and min(m, n) <= EXACT_MAX_MIN_SIZE and ties == 0):
        dist = u_distribution(m, n)
        k = int(round(u))
        p = 2 * sum(dist[:k + 1]) / math.comb(m + n, m)
        return u, float(min(1.0, p))
    N = m + n
    mu = m * n / 2.0
    var = m * n / 12.0 * ((N + 1) - ties / (N * (N - 1)))
    if var <= 0:
        return u, 1.0
    z = max(0.0, abs(ua - mu) - 0.5) / math.sqrt(var)
    return u, float(min(1.0, 2.0 * norm.sf(z)))


@dataclass(frozen=True)
class PairwiseRow:
    first: str
    second: str
    u: float
    p: float
    rejected: bool


@dataclass(frozen=True)
class StatTable:
    kruskal_h: float
    kruskal_p: float
    alpha: float
    alpha_corrected: float
    rows: tuple[PairwiseRow, ...]
    sample_unit: str = "repetition mean accuracy"

    def to_dict(self) -> dict:
        return {
            "kruskal": {"H": self.kruskal_h, "p": self.kruskal_p},
            "alpha": self.alpha, "alpha_corrected": self.alpha_corrected,
            "sample_unit": self.sample_unit,
            "pairwise": [{"first": r.first, "second": r.second, "U": r.u, "p": r.p,
                          "rejected": r.rejected} for r in self.rows],
        }


def bonferroni_pairwise(samples: Mapping[str, Sequence[float]], alpha: float = 0.05) -> StatTable:
    """Kruskal-Wallis over all combinations plus every pairwise Mann-Whitney.

    The corrected threshold divides ``alpha`` by the number of
    combinations compared. Rows follow the mapping's insertion order.
    """
    names = list(samples)
    if len(names) < 2:
        raise DomainError("bonferroni_pairwise needs >= 2 combinations")
    h, p = kruskal_wallis([samples[k] for k in names])
    a_cor = alpha / len(names)
    rows = []
    for x, y in itertools.combinations(names, 2):
        u, pv = mann_whitney_u(samples[x], samples[y])
        rows.append(PairwiseRow(x, y, u, pv, pv < a_cor))
    return StatTable(h, p, alpha, a_cor, tuple(rows))
