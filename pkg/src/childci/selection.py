"""Wrapper feature selection: SFFS and a bitmask genetic algorithm.

An evaluator is any callable ``evaluator(X_sub, y) -> accuracy``. The empty
subset is never passed to it; its fitness is the majority-class rate.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .model import DomainError

log = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray, np.ndarray], float]


@dataclass(frozen=True)
class FeatureSubset:
    columns: tuple[int, ...]
    fitness: float
    history: tuple[float, ...] = ()
    feature_ids: tuple[str, ...] = ()

    def to_dict(self, test_id=None, params=None, seed=None) -> dict:
        return {
            "test_id": None if test_id is None else str(getattr(test_id, "value", test_id)),
            "feature_ids": list(self.feature_ids),
            "columns": list(self.columns),
            "fitness": None if math.isnan(self.fitness) else self.fitness,
            "history": list(self.history),
            "params": params or {},
            "seed": seed,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSubset":
        fit = d.get("fitness")
        return cls(tuple(d["columns"]), float("nan") if fit is None else float(fit), tuple(d.get("history", ())),
                   tuple(d.get("feature_ids", ())))


@dataclass(frozen=True)
class GaParams:
    population: int = 200
    generations: int = 100
    crossover_rate: float = 0.6
    mutation_rate: float = 0.05
    tournament: int = 3
    elitism: int = 1
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.crossover_rate <= 1 and 0 <= self.mutation_rate <= 1):
            raise DomainError("GA rates must lie in [0, 1]")
        if self.population < 2 or self.population % 2:
            raise DomainError("GA population must be even and >= 2")
        if self.generations < 0 or self.tournament < 1 or not 0 <= self.elitism <= self.population:
            raise DomainError("invalid GA generations / tournament / elitism")


def majority_rate(y) -> float:
    y = np.asarray(y)
    if len(y) == 0:
        return 0.0
    return float(np.bincount(y).max() / len(y))


class _Scorer:
    """Memoises evaluator calls by column set; evaluators are deterministic."""

    def __init__(self, X, y, evaluator: Evaluator):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y)
        self.evaluator = evaluator
        self.cache: dict[tuple[int, ...], float] = {}
        self.calls = 0

    def __call__(self, cols) -> float:
        key = tuple(sorted(int(c) for c in cols))
        if key not in self.cache:
            if not key:
                self.cache[key] = majority_rate(self.y)
            else:
                self.calls += 1
                self.cache[key] = float(self.evaluator(self.X[:, list(key)], self.y))
        return self.cache[key]


def _names(feature_ids, cols):
    return tuple(feature_ids[c] for c in cols) if feature_ids is not None else ()


def sffs(X, y, evaluator: Evaluator, max_features: Optional[int] = None, patience: int = 2,
         feature_ids: Optional[Sequence[str]] = None) -> FeatureSubset:
    """Sequential forward floating search.

    Each round adds the feature that scores best, then removes features
    while doing so beats the best subset previously seen at the smaller
    size. The search ends at ``max_features`` or after ``patience``
    consecutive additions that fail to raise the overall best. Ties go to
    the lower feature index. The best subset seen is returned.
    """
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    if d < 1:
        raise DomainError("sffs needs at least one column")
    if max_features is None:
        max_features = d
    if max_features > d:
        log.warning("max_features %d exceeds %d columns; clamped", max_features, d)
        max_features = d
    if max_features < 0:
        raise DomainError("max_features must be >= 0")
    score = _Scorer(X, y, evaluator)
    current: tuple[int, ...] = ()
    best_at: dict[int, tuple[float, tuple[int, ...]]] = {0: (score(()), ())}
    best = best_at[0]
    history = [best[0]]
    stale = 0

    def better(a, b):
        # higher fitness, then smaller size, then lexicographically lower columns
        return (a[0], -len(a[1]), tuple(-c for c in a[1])) > (b[0], -len(b[1]), tuple(-c for c in b[1]))

    while len(current) < max_features and stale < patience:
        cand = [(score(current + (f,)), f) for f in range(d) if f not in current]
        j, f = max(cand, key=lambda t: (t[0], -t[1]))
        current = tuple(sorted(current + (f,)))
        k = len(current)
        if k not in best_at or j > best_at[k][0]:
            best_at[k] = (j, current)
        # conditional exclusion
        while len(current) > 2:
            rem = [(score(tuple(c for c in current if c != f)), f) for f in current]
            jr, fr = max(rem, key=lambda t: (t[0], -t[1]))
            k = len(current) - 1
            if k in best_at and jr <= best_at[k][0]:
                break
            current = tuple(c for c in current if c != fr)
            best_at[k] = (jr, current)
        improved = False
        for k in sorted(best_at):
            if better(best_at[k], best):
                best = best_at[k]
                improved = True
        stale = 0 if improved else stale + 1
        history.append(best[0])
    cols = best[1]
    return FeatureSubset(cols, best[0], tuple(history), _names(feature_ids, cols))


def _tournament(rng, fit, size):
    idx = rng.integers(0, len(fit), size)
    # first occurrence of the maximum keeps the pick deterministic
    return int(idx[np.argmax(fit[idx])])


def ga_select(X, y, evaluator: Evaluator, params: GaParams = GaParams(),
              feature_ids: Optional[Sequence[str]] = None,
              initial: Optional[np.ndarray] = None) -> FeatureSubset:
    """Bitmask GA with tournament selection, uniform crossover and elitism.

    ``initial`` optionally fixes the starting population (rows of 0/1).
    Returns the best chromosome seen in any generation.
    """
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    if d < 1:
        raise DomainError("ga_select needs at least one column")
    rng = np.random.default_rng(np.random.SeedSequence([int(params.seed), 0x6A]))
    P = params.population
    if initial is not None:
        pop = np.asarray(initial, dtype=bool).reshape(P, d).copy()
    else:
        pop = rng.random((P, d)) < 0.5
    score = _Scorer(X, y, evaluator)

    def evaluate(pop):
        return np.array([score(np.flatnonzero(ch)) for ch in pop])

    fit = evaluate(pop)
    b = int(np.argmax(fit))
    best_fit, best_ch = float(fit[b]), pop[b].copy()
    history = [best_fit]
    for _ in range(params.generations):
        order = np.argsort(-fit, kind="stable")
        nxt = [pop[i].copy() for i in order[:params.elitism]]
        while len(nxt) < P:
            a = pop[_tournament(rng, fit, params.tournament)]
            c = pop[_tournament(rng, fit, params.tournament)]
            if rng.random() < params.crossover_rate:
                swap = rng.random(d) < 0.5
                a, c = np.where(swap, c, a), np.where(swap, a, c)
            else:
                a, c = a.copy(), c.copy()
            for child in (a, c):
                flip = rng.random(d) < params.mutation_rate
                child ^= flip
                if len(nxt) < P:
                    nxt.append(child)
        pop = np.array(nxt)
        fit = evaluate(pop)
        b = int(np.argmax(fit))
        if fit[b] > best_fit:
            best_fit, best_ch = float(fit[b]), pop[b].copy()
        history.append(best_fit)
    cols = tuple(int(c) for c in np.flatnonzero(best_ch))
    return FeatureSubset(cols, best_fit, tuple(history), _names(feature_ids, cols))


@dataclass(frozen=True)
class SelectorConfig:
    method: str = "sffs"
    max_features: Optional[int] = None
    patience: int = 2
    ga: GaParams = field(default_factory=GaParams)

    def __post_init__(self):
        if self.method not in ("sffs", "ga", "none"):
            raise DomainError(f"unknown selector {self.method!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def select(X, y, evaluator: Evaluator, config: SelectorConfig, feature_ids=None, seed: int = 0) -> FeatureSubset:
    """Dispatch on ``config.method``; ``none`` keeps every column."""
    d = np.asarray(X).shape[1]
    if config.method == "none":
        cols = tuple(range(d))
        return FeatureSubset(cols, float("nan"), (), _names(feature_ids, cols))
    if config.method == "sffs":
        return sffs(X, y, evaluator, config.max_features, config.patience, feature_ids)
    return ga_select(X, y, evaluator, replace(config.ga, seed=seed), feature_ids)
