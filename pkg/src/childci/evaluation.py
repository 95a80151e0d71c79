"""Experimental protocol: child-level splits, SMOTE, CV, single and multi-test runs."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import classifiers as clf
from . import features
from .model import ALL_TESTS, AgeGroup, DomainError, TestId
from .selection import FeatureSubset, GaParams, SelectorConfig, majority_rate, select
from .stats import StatTable, bonferroni_pairwise

log = logging.getLogger(__name__)

N_CLASSES = 3


def derive_seed(*keys: int) -> int:
    """Independent 32-bit seed for a task identified by integer keys."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


# -- configuration ---------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    test_ids: tuple[TestId, ...] = ALL_TESTS
    selector: SelectorConfig = field(default_factory=SelectorConfig)
    classifier: clf.ClassifierConfig = field(default_factory=clf.ClassifierConfig)
    k: int = 5
    dev_fraction: float = 0.8
    repetitions: int = 1
    seed: int = 0
    use_smote: bool = True
    with_global: bool = True

    def __post_init__(self):
        object.__setattr__(self, "test_ids", tuple(TestId(t) for t in self.test_ids))
        if not 0 < self.dev_fraction < 1:
            raise DomainError("dev_fraction must lie in (0, 1)")
        if self.k < 2:
            raise DomainError("k must be >= 2")
        if self.repetitions < 1:
            raise DomainError("repetitions must be >= 1")
        if not self.test_ids:
            raise DomainError("at least one test is required")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["test_ids"] = [t.value for t in self.test_ids]
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        if "selector" in d and isinstance(d["selector"], Mapping):
            s = dict(d["selector"])
            if isinstance(s.get("ga"), Mapping):
                s["ga"] = GaParams(**s["ga"])
            d["selector"] = SelectorConfig(**s)
        if "classifier" in d and isinstance(d["classifier"], Mapping):
            d["classifier"] = clf.ClassifierConfig(**d["classifier"])
        if "test_ids" in d:
            d["test_ids"] = tuple(d["test_ids"])
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


class Audit:
    """Records which children reached each training stage (leakage checks)."""

    def __init__(self):
        self.stages: dict[str, set[str]] = {}

    def record(self, stage: str, child_ids: Iterable[str]):
        self.stages.setdefault(stage, set()).update(child_ids)

    def touched(self) -> set[str]:
        return set().union(*self.stages.values()) if self.stages else set()


class _NullAudit(Audit):
    def record(self, stage, child_ids):
        pass


# -- splits ----------------------------------------------------------------

def _group_members(labels: np.ndarray) -> list[np.ndarray]:
    return [np.flatnonzero(labels == g) for g in range(N_CLASSES)]


def split_indices(labels, dev_fraction: float, seed: int, min_per_group: int = 5):
    labels = np.asarray(labels)
    rng = np.random.default_rng(derive_seed(seed, 0x5111))
    dev, ev = [], []
    for g, idx in enumerate(_group_members(labels)):
        if 0 < len(idx) < min_per_group:
            raise DomainError(f"group {AgeGroup.from_index(g).value} has {len(idx)} children; need >= {min_per_group}")
        if len(idx) == 0:
            continue
        perm = rng.permutation(idx)
        nd = int(round(dev_fraction * len(perm)))
        nd = min(max(nd, 1), len(perm) - 1)
        dev.extend(perm[:nd])
        ev.extend(perm[nd:])
    return np.sort(np.array(dev, dtype=np.int64)), np.sort(np.array(ev, dtype=np.int64))


def split_dev_eval(dataset, dev_fraction: float = 0.8, seed: int = 0):
    """Stratified child-level split into (dev, eval) datasets."""
    ids = [s.child_id for s in dataset.subjects]
    labels = np.array([s.group.index for s in dataset.subjects])
    d, e = split_indices(labels, dev_fraction, seed)
    return dataset.subset(ids[i] for i in d), dataset.subset(ids[i] for i in e)


def fold_indices(labels, k: int, seed: int) -> list[np.ndarray]:
    """Stratified partition of row indices into ``k`` folds.

    Each group is shuffled and dealt round-robin, continuing where the
    previous group stopped so overall fold sizes stay balanced too.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(derive_seed(seed, 0xF01D))
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for g, idx in enumerate(_group_members(labels)):
        if len(idx) == 0:
            continue
        if len(idx) < k:
            raise DomainError(f"group {AgeGroup.from_index(g).value} has {len(idx)} children; need >= k={k}")
        for j, i in enumerate(rng.permutation(idx)):
            folds[(offset + j) % k].append(int(i))
        offset += len(idx)
    return [np.sort(np.array(f, dtype=np.int64)) for f in folds]


def stratified_kfold(dev, k: int = 5, seed: int = 0) -> list[list[str]]:
    ids = [s.child_id for s in dev.subjects]
    labels = np.array([s.group.index for s in dev.subjects])
    return [[ids[i] for i in f] for f in fold_indices(labels, k, seed)]


# -- oversampling ----------------------------------------------------------

def smote(X, y, k_neighbors: int = 5, seed: int = 0):
    """Oversample every class to the majority count.

    Synthetic rows sit on the segment between a random original and one of
    its ``k_neighbors`` nearest same-class originals. Originals come first
    in the output. A class with one sample is padded with jittered copies.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise DomainError("smote needs X (n, d) and y (n,)")
    counts = np.bincount(y, minlength=N_CLASSES)
    target = counts.max()
    rng = np.random.default_rng(derive_seed(seed, 0x5307E))
    new_X, new_y = [X], [y]
    for c in range(len(counts)):
        need = target - counts[c]
        if counts[c] == 0 or need == 0:
            continue
        Xc = X[y == c]
        if len(Xc) == 1:
            log.warning("class %d has one sample; SMOTE falls back to jittered copies", c)
            spread = X.std(axis=0) if len(X) > 1 else np.ones(X.shape[1])
            syn = Xc + rng.normal(0.0, 1.0, (need, X.shape[1])) * 0.01 * spread
        else:
            kk = min(k_neighbors, len(Xc) - 1)
            _, nn = cKDTree(Xc).query(Xc, k=kk + 1)
            nn = np.asarray(nn).reshape(len(Xc), -1)
            base = rng.integers(0, len(Xc), need)
            pick = nn[base, 1 + rng.integers(0, kk, need)]
            u = rng.random(need)[:, None]
            syn = Xc[base] + u * (Xc[pick] - Xc[base])
        new_X.append(syn)
        new_y.append(np.full(need, c, dtype=np.int64))
    return np.vstack(new_X), np.concatenate(new_y)


def accuracy(predictions, labels) -> float:
    p = np.asarray(predictions)
    t = np.asarray(labels)
    if p.shape != t.shape or p.size == 0:
        raise DomainError("accuracy needs equal-length non-empty inputs")
    return float(np.mean(p == t))


# -- training helpers ------------------------------------------------------

class CVEvaluator:
    """Mean k-fold accuracy of a classifier on (X, y); used by the selectors."""

    def __init__(self, config: clf.ClassifierConfig, k: int = 5, seed: int = 0, use_smote: bool = True):
        self.config, self.k, self.seed, self.use_smote = config, k, seed, use_smote

    def __call__(self, X, y) -> float:
        y = np.asarray(y)
        present = np.bincount(y, minlength=N_CLASSES)
        k = int(min(self.k, present[present > 0].min()))
        if k < 2:
            return majority_rate(y)
        accs = []
        for f, test in enumerate(fold_indices(y, k, self.seed)):
            train = np.setdiff1d(np.arange(len(y)), test)
            P = fit_predict(X[train], y[train], X[test], self.config.with_seed(derive_seed(self.seed, f)),
                            self.use_smote, derive_seed(self.seed, f, 1))
            accs.append(accuracy(P.argmax(axis=1), y[test]))
        return float(np.mean(accs))


def fit_predict(Xtr, ytr, Xte, config: clf.ClassifierConfig, use_smote: bool, smote_seed: int) -> np.ndarray:
    if Xtr.shape[1] == 0:
        P = np.zeros((len(Xte), N_CLASSES))
        P[:, int(np.argmax(np.bincount(ytr, minlength=N_CLASSES)))] = 1.0
        return P
    if use_smote:
        Xtr, ytr = smote(Xtr, ytr, seed=smote_seed)
    return clf.fit(Xtr, ytr, config).predict_proba(Xte)


@dataclass(frozen=True)
class TrainedTest:
    subset: FeatureSubset
    model: Optional[clf.Model]
    probabilities: np.ndarray


def train_and_score(Xtr, ytr, ids_tr, Xte, config: ExperimentConfig, seed: int, audit: Audit,
                    feature_ids=None) -> TrainedTest:
    """Select on the training rows, oversample, fit, then score ``Xte``."""
    evaluator = CVEvaluator(config.classifier.with_seed(seed), config.k, derive_seed(seed, 2), config.use_smote)
    subset = select(Xtr, ytr, evaluator, config.selector, feature_ids, seed)
    if config.selector.method != "none":
        audit.record("selection", ids_tr)
    cols = list(subset.columns)
    audit.record("smote" if config.use_smote else "fit", ids_tr)
    audit.record("standardize", ids_tr)
    audit.record("fit", ids_tr)
    Xa, ya = Xtr[:, cols], ytr
    if config.use_smote and cols:
        Xa, ya = smote(Xa, ya, seed=derive_seed(seed, 3))
    if cols:
        model = clf.fit(Xa, ya, config.classifier.with_seed(seed))
        P = model.predict_proba(Xte[:, cols])
    else:
        model = None
        P = fit_predict(Xa, ya, Xte[:, cols], config.classifier, False, 0)
    return TrainedTest(subset, model, P)


# -- single-test -----------------------------------------------------------

@dataclass(frozen=True)
class AccuracyReport:
    test_id: TestId
    fold_accuracies: tuple[float, ...]
    eval_accuracy: float
    subset: FeatureSubset
    n_dev: int
    n_eval: int
    classifier: str
    selector: str

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_accuracies))

    @property
    def std(self) -> float:
        a = np.asarray(self.fold_accuracies)
        return float(a.std(ddof=1)) if len(a) > 1 else 0.0

    def to_dict(self) -> dict:
        return {
            "test_id": self.test_id.value, "classifier": self.classifier, "selector": self.selector,
            "fold_accuracies": list(self.fold_accuracies), "mean": self.mean, "std": self.std,
            "eval_accuracy": self.eval_accuracy, "n_dev": self.n_dev, "n_eval": self.n_eval,
            "selected_features": list(self.subset.feature_ids), "selection_fitness": self.subset.fitness,
        }


@dataclass
class _Matrix:
    ids: list
    X: np.ndarray
    y: np.ndarray
    feature_ids: list


def _matrix(dataset, test_id, with_global) -> _Matrix:
    ids, X, _, y = features.feature_matrix(dataset, test_id, with_global)
    return _Matrix(ids, X, y, features.feature_ids(test_id, with_global))


def run_single_test(dataset, config: ExperimentConfig, audit: Optional[Audit] = None,
                    test_id: Optional[TestId] = None) -> AccuracyReport:
    """k-fold CV on the dev split, then a final dev-trained model scored on eval."""
    audit = audit or _NullAudit()
    if test_id is None:
        if len(config.test_ids) != 1:
            raise DomainError("run_single_test needs exactly one test id")
        test_id = config.test_ids[0]
    test_id = TestId(test_id)
    dev, ev = split_dev_eval(dataset, config.dev_fraction, config.seed)
    dm = _matrix(dev, test_id, config.with_global)
    em = _matrix(ev, test_id, config.with_global)
    if len(dm.ids) == 0 or len(em.ids) == 0:
        raise DomainError(f"no sessions for {test_id.value} on one side of the split")
    ids = np.array(dm.ids)
    accs = []
    for f, test in enumerate(fold_indices(dm.y, config.k, derive_seed(config.seed, test_id.index))):
        train = np.setdiff1d(np.arange(len(dm.y)), test)
        tt = train_and_score(dm.X[train], dm.y[train], ids[train], dm.X[test], config,
                             derive_seed(config.seed, test_id.index, f), audit, dm.feature_ids)
        accs.append(accuracy(tt.probabilities.argmax(axis=1), dm.y[test]))
    final = train_and_score(dm.X, dm.y, ids, em.X, config, derive_seed(config.seed, test_id.index, 99),
                            audit, dm.feature_ids)
    return AccuracyReport(test_id, tuple(accs), accuracy(final.probabilities.argmax(axis=1), em.y),
                          final.subset, len(dm.ids), len(em.ids), config.classifier.variant,
                          config.selector.method)


# -- multi-test ------------------------------------------------------------

def enumerate_combinations(n: int, x: int) -> list[tuple[int, ...]]:
    if not 0 <= x <= n:
        raise DomainError(f"combination size {x} outside 0..{n}")
    return list(itertools.combinations(range(n), x))


def ensemble_predict(per_test_probs: Mapping[Any, Sequence[float]]) -> AgeGroup:
    """Majority vote of per-test argmaxes, ties by mean probability, then lowest group."""
    if not per_test_probs:
        raise DomainError("ensemble needs at least one test")
    P = np.array([np.asarray(p, dtype=float) for p in per_test_probs.values()])
    return AgeGroup.from_index(int(_ensemble_rows(P[:, None, :])[0]))


def _ensemble_rows(P: np.ndarray) -> np.ndarray:
    """Vectorised ensemble over samples; ``P`` is (tests, samples, classes)."""
    votes = np.zeros(P.shape[1:], dtype=np.int64)
    arg = P.argmax(axis=2)
    for t in range(P.shape[0]):
        votes[np.arange(P.shape[1]), arg[t]] += 1
    top = votes == votes.max(axis=1, keepdims=True)
    mean = np.where(top, P.mean(axis=0), -np.inf)
    return mean.argmax(axis=1)


def _combo_name(tests: Sequence[TestId]) -> str:
    return "+".join(t.value for t in tests)


@dataclass(frozen=True)
class CombinationRow:
    tests: tuple[TestId, ...]
    samples: tuple[float, ...]

    @property
    def name(self) -> str:
        return _combo_name(self.tests)

    @property
    def mean(self) -> float:
        return float(np.mean(self.samples))

    @property
    def std(self) -> float:
        return float(np.std(self.samples, ddof=1)) if len(self.samples) > 1 else 0.0


@dataclass(frozen=True)
class CombinationReport:
    singles: tuple[CombinationRow, ...]
    combinations: tuple[CombinationRow, ...]
    n_children: int
    repetitions: int

    def best_per_size(self) -> dict[int, CombinationRow]:
        out = {}
        for r in self.combinations:
            cur = out.get(len(r.tests))
            if cur is None or r.mean > cur.mean:
                out[len(r.tests)] = r
        return dict(sorted(out.items()))

    def full(self) -> Optional[CombinationRow]:
        n = max((len(r.tests) for r in self.combinations), default=0)
        rows = [r for r in self.combinations if len(r.tests) == n]
        return rows[0] if len(rows) == 1 else None

    def full_beats_single_fraction(self) -> float:
        """Share of repetitions where the all-test ensemble matches or beats every single test."""
        full = self.full()
        if full is None or not self.singles:
            return float("nan")
        S = np.array([r.samples for r in self.singles])
        return float(np.mean(np.array(full.samples) >= S.max(axis=0)))

    def stat_table(self, alpha: float = 0.05) -> StatTable:
        best = self.best_per_size()
        return bonferroni_pairwise({r.name: r.samples for r in best.values()}, alpha)

    def to_dict(self) -> dict:
        row = lambda r: {"tests": r.name, "size": len(r.tests), "mean": r.mean, "std": r.std,
                         "samples": list(r.samples)}
        return {
            "n_children": self.n_children, "repetitions": self.repetitions,
            "singles": [row(r) for r in self.singles],
            "combinations": [row(r) for r in self.combinations],
            "best_per_size": {str(k): v.name for k, v in self.best_per_size().items()},
            "full_beats_single_fraction": self.full_beats_single_fraction(),
        }


def select_subsets(dataset, config: ExperimentConfig, audit: Optional[Audit] = None) -> dict[TestId, FeatureSubset]:
    """One feature subset per test, chosen by CV on the dev split only."""
    audit = audit or _NullAudit()
    dev, _ = split_dev_eval(dataset.with_tests(config.test_ids), config.dev_fraction, config.seed)
    out = {}
    for t in config.test_ids:
        m = _matrix(dev, t, config.with_global)
        seed = derive_seed(config.seed, t.index, 0x5E1)
        evaluator = CVEvaluator(config.classifier.with_seed(seed), config.k, derive_seed(seed, 2), config.use_smote)
        out[t] = select(m.X, m.y, evaluator, config.selector, m.feature_ids, seed)
        if config.selector.method != "none":
            audit.record("selection", m.ids)
    return out


def run_multi_test(dataset, config: ExperimentConfig, audit: Optional[Audit] = None,
                   subsets: Optional[Mapping[TestId, FeatureSubset]] = None) -> CombinationReport:
    """Repeated k-fold over dev children holding every configured test.

    Each test's feature subset is fixed up front (selected once on the dev
    split unless ``subsets`` is given) and reused by every repetition.
    Every repetition reshuffles the folds; per fold each test is trained
    independently and all combinations of size >= 2 vote on the held-out
    children. A repetition's sample is the mean fold accuracy.
    """
    audit = audit or _NullAudit()
    if subsets is None:
        subsets = select_subsets(dataset, config, audit)
    fixed = replace(config, selector=SelectorConfig("none"))
    tests = config.test_ids
    restricted = dataset.with_tests(tests)
    dev, _ = split_dev_eval(restricted, config.dev_fraction, config.seed)
    mats = [_matrix(dev, t, config.with_global) for t in tests]
    y = mats[0].y
    ids = np.array(mats[0].ids)
    for m in mats[1:]:
        if m.ids != mats[0].ids:
            raise DomainError("feature matrices are not aligned by child")
    cols = {t: list(subsets[t].columns) for t in tests}
    combos = [c for x in range(2, len(tests) + 1) for c in enumerate_combinations(len(tests), x)]
    single_acc = np.zeros((len(tests), config.repetitions))
    combo_acc = np.zeros((len(combos), config.repetitions))
    for r in range(config.repetitions):
        folds = fold_indices(y, config.k, derive_seed(config.seed, r, 0xAB))
        fs = np.zeros((len(tests), len(folds)))
        fc = np.zeros((len(combos), len(folds)))
        for f, test in enumerate(folds):
            train = np.setdiff1d(np.arange(len(y)), test)
            P = np.array([train_and_score(m.X[train][:, cols[t]], y[train], ids[train], m.X[test][:, cols[t]],
                                          fixed, derive_seed(config.seed, r, f, t.index), audit).probabilities
                          for m, t in zip(mats, tests)])
            for i in range(len(tests)):
                fs[i, f] = accuracy(P[i].argmax(axis=1), y[test])
            for ci, c in enumerate(combos):
                fc[ci, f] = accuracy(_ensemble_rows(P[list(c)]), y[test])
        single_acc[:, r] = fs.mean(axis=1)
        combo_acc[:, r] = fc.mean(axis=1)
    singles = tuple(CombinationRow((t,), tuple(single_acc[i])) for i, t in enumerate(tests))
    rows = tuple(CombinationRow(tuple(tests[i] for i in c), tuple(combo_acc[ci])) for ci, c in enumerate(combos))
    return CombinationReport(singles, rows, len(y), config.repetitions)


# -- report writers --------------------------------------------------------

def _csv_text(header_lines: Sequence[str], columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    for h in header_lines:
        buf.write(f"# {h}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def single_report_csv(reports: Sequence[AccuracyReport], header_lines: Sequence[str] = ()) -> str:
    rows = []
    for rep in reports:
        for i, a in enumerate(rep.fold_accuracies):
            rows.append([rep.test_id.value, rep.classifier, rep.selector, f"fold{i + 1}", a])
        rows.append([rep.test_id.value, rep.classifier, rep.selector, "mean", rep.mean])
        rows.append([rep.test_id.value, rep.classifier, rep.selector, "std", rep.std])
        rows.append([rep.test_id.value, rep.classifier, rep.selector, "eval", rep.eval_accuracy])
    return _csv_text(header_lines, ["test", "classifier", "selector", "row", "accuracy"], rows)


def combinations_csv(report: CombinationReport, header_lines: Sequence[str] = ()) -> str:
    rows = [[r.name, len(r.tests), r.mean, r.std] for r in report.combinations]
    return _csv_text(header_lines, ["tests", "size", "mean", "std"], rows)


def best_per_size_csv(report: CombinationReport, header_lines: Sequence[str] = ()) -> str:
    rows = [[r.name, 1, r.mean, r.std] for r in report.singles]
    rows += [[r.name, k, r.mean, r.std] for k, r in report.best_per_size().items()]
    return _csv_text(header_lines, ["tests", "size", "mean", "std"], rows)


def stat_table_csv(table: StatTable, header_lines: Sequence[str] = ()) -> str:
    lines = list(header_lines) + [f"kruskal_H={table.kruskal_h:.6f} kruskal_p={table.kruskal_p:.6g} "
                                  f"alpha_cor={table.alpha_corrected:.6g}"]
    rows = [[r.first, r.second, r.u, f"{r.p:.6g}", str(r.rejected).lower()] for r in table.rows]
    return _csv_text(lines, ["first", "second", "U", "p", "rejected"], rows)
