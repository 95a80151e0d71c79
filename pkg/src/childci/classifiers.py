"""Three-class probabilistic classifiers: random forest and polynomial SVM.

Both standardise their inputs with training-set statistics stored on the
model, always report probabilities in class order (G1, G2, G3), and are
bit-reproducible for a given seed.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Optional, Sequence

import numpy as np

from . import kernels
from .model import AgeGroup, ChildCIError, DomainError

log = logging.getLogger(__name__)

N_CLASSES = 3
STD_FLOOR = 1e-12
MODEL_FORMAT = "childci-model/1"


@dataclass(frozen=True)
class ClassifierConfig:
    variant: str = "svm_poly"
    n_estimators: int = 10
    split_criterion: str = "gini"
    max_depth: int = 75
    c: float = 0.1
    degree: int = 3
    gamma_mode: str = "scaled"
    tol: float = 1e-3
    max_iter: int = 200_000
    seed: int = 0

    def __post_init__(self):
        aliases = {"rf": "random_forest", "svm": "svm_poly"}
        object.__setattr__(self, "variant", aliases.get(self.variant, self.variant))
        if self.variant not in ("random_forest", "svm_poly"):
            raise DomainError(f"unknown classifier variant {self.variant!r}")
        if self.n_estimators < 1 or self.max_depth < 1:
            raise DomainError("n_estimators and max_depth must be >= 1")
        if not self.c > 0 or self.degree < 1:
            raise DomainError("c must be > 0 and degree >= 1")
        if self.split_criterion != "gini":
            raise DomainError("only the gini criterion is supported")
        if self.gamma_mode != "scaled" and not isinstance(self.gamma_mode, (int, float)):
            raise DomainError("gamma_mode must be 'scaled' or a positive number")

    def with_seed(self, seed: int) -> "ClassifierConfig":
        return replace(self, seed=int(seed))


# -- trees -----------------------------------------------------------------

@dataclass(frozen=True)
class Tree:
    feature: np.ndarray    # -1 for leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray     # (n_nodes, N_CLASSES) training counts per node

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.counts[self.apply(X)], axis=1)

    def to_dict(self, node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"leaf": [int(c) for c in self.counts[node]]}
        return {"feature": int(self.feature[node]), "threshold": float(self.threshold[node]),
                "left": self.to_dict(int(self.left[node])), "right": self.to_dict(int(self.right[node]))}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        feat, thr, left, right, counts = [], [], [], [], []

        def add(nd):
            i = len(feat)
            feat.append(-1); thr.append(0.0); left.append(-1); right.append(-1)
            if "leaf" in nd:
                counts.append(nd["leaf"])
                return i
            counts.append([0] * N_CLASSES)
            feat[i], thr[i] = int(nd["feature"]), float(nd["threshold"])
            left[i] = add(nd["left"])
            right[i] = add(nd["right"])
            counts[i] = list(np.add(counts[left[i]], counts[right[i]]))
            return i

        add(d)
        return cls(np.array(feat, dtype=np.int64), np.array(thr), np.array(left, dtype=np.int64),
                   np.array(right, dtype=np.int64), np.array(counts, dtype=np.int64).reshape(-1, N_CLASSES))


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    """Counter-based stream for one tree, independent of training order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(tree_index)])))


def build_tree(X: np.ndarray, y: np.ndarray, rng: np.random.Generator, max_depth: int,
               max_features: int) -> Tree:
    feat, thr, left, right, counts = [], [], [], [], []
    d = X.shape[1]

    def new_node(idx):
        feat.append(-1); thr.append(0.0); left.append(-1); right.append(-1)
        counts.append(np.bincount(y[idx], minlength=N_CLASSES))
        return len(feat) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        c = counts[node]
        if depth >= max_depth or len(idx) < 2 or np.count_nonzero(c) <= 1:
            continue
        Xn = X[idx]
        varying = np.ptp(Xn, axis=0) > 0
        perm = rng.permutation(d)
        cand = np.sort(perm[varying[perm]][:max_features])
        if len(cand) == 0:
            continue
        col, t, _ = kernels.best_split(np.ascontiguousarray(Xn[:, cand]), y[idx], N_CLASSES)
        if col < 0:
            continue
        f = int(cand[col])
        go_left = Xn[:, f] <= t
        li, ri = idx[go_left], idx[~go_left]
        feat[node], thr[node] = f, float(t)
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree gets the lower node ids
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(np.array(feat, dtype=np.int64), np.array(thr), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(counts, dtype=np.int64))


# -- svm -------------------------------------------------------------------

@dataclass(frozen=True)
class BinaryMachine:
    present: bool
    support_vectors: np.ndarray
    dual_coef: np.ndarray      # alpha_i * y_i
    bias: float
    iterations: int = 0

    def decision(self, K: np.ndarray) -> np.ndarray:
        if not self.present:
            return np.full(K.shape[0], -np.inf)
        return K @ self.dual_coef + self.bias


def poly_kernel(A: np.ndarray, B: np.ndarray, gamma: float, degree: int, coef0: float = 1.0) -> np.ndarray:
    return (gamma * (A @ B.T) + coef0) ** degree


def scaled_gamma(Xs: np.ndarray) -> float:
    v = float(Xs.var())
    return 1.0 / (Xs.shape[1] * v) if v > 0 else 1.0 / Xs.shape[1]


# -- model -----------------------------------------------------------------

@dataclass(frozen=True)
class Model:
    config: ClassifierConfig
    mean: np.ndarray
    scale: np.ndarray
    trees: tuple[Tree, ...] = ()
    machines: tuple[BinaryMachine, ...] = ()
    gamma: float = 0.0
    constant_class: Optional[int] = None
    classes: tuple[str, ...] = field(default=tuple(g.value for g in AgeGroup))

    @property
    def n_features(self) -> int:
        return len(self.mean)

    def standardize(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise DomainError(f"expected {self.n_features} features, got {X.shape[1]}")
        return (X - self.mean) / self.scale

    def decision_function(self, X) -> np.ndarray:
        Xs = self.standardize(X)
        if self.config.variant != "svm_poly" or self.constant_class is not None:
            raise ChildCIError("decision_function is only defined for fitted SVM models")
        cols = []
        for m in self.machines:
            K = poly_kernel(Xs, m.support_vectors, self.gamma, self.config.degree) if m.present and len(m.support_vectors) else np.zeros((len(Xs), 0))
            cols.append(m.decision(K) if m.present else np.full(len(Xs), -np.inf))
        return np.column_stack(cols)

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        Xs = self.standardize(X)
        n = len(Xs)
        if self.constant_class is not None:
            P = np.zeros((n, N_CLASSES))
            P[:, self.constant_class] = 1.0
        elif self.config.variant == "random_forest":
            P = np.zeros((n, N_CLASSES))
            for tree in self.trees:
                P[np.arange(n), tree.predict(Xs)] += 1.0
            P /= len(self.trees)
        else:
            D = self.decision_function(X)
            D = D - np.max(D, axis=1, keepdims=True)
            E = np.exp(D)
            P = E / E.sum(axis=1, keepdims=True)
        return P[0] if single else P

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=-1)

    # serialisation
    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "format": MODEL_FORMAT,
            "config": asdict(self.config),
            "classes": list(self.classes),
            "mean": [float(v) for v in self.mean],
            "scale": [float(v) for v in self.scale],
            "constant_class": self.constant_class,
        }
        if self.config.variant == "random_forest":
            d["trees"] = [t.to_dict() for t in self.trees]
        else:
            d["kernel"] = {"type": "polynomial", "gamma": self.gamma, "degree": self.config.degree, "coef0": 1.0}
            d["machines"] = [{
                "class": self.classes[i], "present": m.present,
                "support_vectors": [[float(v) for v in row] for row in m.support_vectors],
                "dual_coef": [float(v) for v in m.dual_coef], "bias": float(m.bias),
            } for i, m in enumerate(self.machines)]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Model":
        if d.get("format") != MODEL_FORMAT:
            raise ChildCIError(f"unsupported model format {d.get('format')!r}")
        config = ClassifierConfig(**d["config"])
        kw = dict(config=config, mean=np.array(d["mean"]), scale=np.array(d["scale"]),
                  constant_class=d.get("constant_class"), classes=tuple(d["classes"]))
        if "trees" in d:
            kw["trees"] = tuple(Tree.from_dict(t) for t in d["trees"])
        if "machines" in d:
            kw["gamma"] = float(d["kernel"]["gamma"])
            kw["machines"] = tuple(BinaryMachine(
                m["present"], np.array(m["support_vectors"], dtype=float).reshape(-1, len(d["mean"])),
                np.array(m["dual_coef"], dtype=float), float(m["bias"])) for m in d["machines"])
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "Model":
        return cls.from_dict(json.loads(text))


def _labels(y) -> np.ndarray:
    out = []
    for v in y:
        if isinstance(v, AgeGroup):
            out.append(v.index)
        elif isinstance(v, str):
            out.append(AgeGroup(v).index)
        else:
            out.append(int(v))
    arr = np.array(out, dtype=np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= N_CLASSES):
        raise DomainError("labels must be age groups 0..2")
    return arr


def fit(X, y, config: Optional[ClassifierConfig] = None) -> Model:
    """Fit a classifier; ``y`` holds AgeGroup values or their indices 0..2."""
    config = config or ClassifierConfig()
    # row-major copy so column reductions do not depend on the caller's layout
    X = np.ascontiguousarray(X, dtype=float)
    y = _labels(y)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise DomainError("X must be (n, d) with one label per row")
    if not np.isfinite(X).all():
        raise DomainError("X contains non-finite values")
    mean = X.mean(axis=0)
    scale = np.maximum(X.std(axis=0), STD_FLOOR)
    Xs = (X - mean) / scale
    present = np.unique(y)
    if len(present) == 1:
        log.warning("single-class training set; model always predicts %s", AgeGroup.from_index(present[0]).value)
        return Model(config, mean, scale, constant_class=int(present[0]))
    if config.variant == "random_forest":
        d = X.shape[1]
        mtry = max(1, int(math.sqrt(d)))
        trees = []
        for i in range(config.n_estimators):
            rng = tree_rng(config.seed, i)
            boot = rng.integers(0, len(y), len(y))
            trees.append(build_tree(Xs[boot], y[boot], rng, config.max_depth, mtry))
        return Model(config, mean, scale, trees=tuple(trees))
    gamma = scaled_gamma(Xs) if config.gamma_mode == "scaled" else float(config.gamma_mode)
    K = np.ascontiguousarray(poly_kernel(Xs, Xs, gamma, config.degree))
    machines = []
    for c in range(N_CLASSES):
        if c not in present:
            machines.append(BinaryMachine(False, np.zeros((0, X.shape[1])), np.zeros(0), 0.0))
            continue
        yc = np.where(y == c, 1.0, -1.0)
        alpha, b, it = kernels.smo_solve(K, yc, float(config.c), float(config.tol), int(config.max_iter))
        sv = alpha > 0
        machines.append(BinaryMachine(True, Xs[sv].copy(), (alpha * yc)[sv], float(b), int(it)))
    return Model(config, mean, scale, machines=tuple(machines), gamma=gamma)


def predict_proba(model: Model, x) -> np.ndarray:
    return model.predict_proba(x)
