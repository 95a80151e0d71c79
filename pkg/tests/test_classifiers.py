import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from childci import classifiers as clf
from childci.model import AgeGroup, ChildCIError, DomainError

VARIANTS = ("random_forest", "svm_poly")


def _blobs(n_per=20, d=4, sep=10.0, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(size=(n_per, d)) + sep * c for c in range(3)])
    y = np.repeat(np.arange(3), n_per)
    return X, y


def _noisy(n=60, d=5, seed=1):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, d)), rng.integers(0, 3, n)


@pytest.mark.parametrize("variant", VARIANTS)
def test_separable_blobs_fit_perfectly(variant):
    X, y = _blobs()
    m = clf.fit(X, y, clf.ClassifierConfig(variant=variant, seed=2))
    assert (m.predict(X) == y).all()


@pytest.mark.parametrize("variant", VARIANTS)
def test_single_class_training_is_constant(variant, caplog):
    X, _ = _noisy(10)
    m = clf.fit(X, [AgeGroup.G2] * 10, clf.ClassifierConfig(variant=variant))
    assert m.predict_proba(np.zeros(5)).tolist() == [0.0, 1.0, 0.0]
    assert "single-class" in caplog.text


@pytest.mark.parametrize("variant", VARIANTS)
def test_deterministic_and_json_roundtrip(variant):
    X, y = _noisy()
    cfg = clf.ClassifierConfig(variant=variant, seed=7)
    a, b = clf.fit(X, y, cfg), clf.fit(X, y, cfg)
    assert a.to_json() == b.to_json()
    back = clf.Model.from_json(a.to_json())
    assert np.array_equal(back.predict_proba(X), a.predict_proba(X))
    assert back.to_json() == a.to_json()


@pytest.mark.parametrize("variant", VARIANTS)
def test_probabilities_sum_to_one(variant):
    X, y = _noisy()
    m = clf.fit(X, y, clf.ClassifierConfig(variant=variant, seed=3))
    Q = np.random.default_rng(9).normal(scale=3.0, size=(1000, 5))
    P = m.predict_proba(Q)
    assert P.shape == (1000, 3)
    assert (P >= 0).all() and (P <= 1).all()
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-9)


def test_forest_seed_changes_model():
    X, y = _noisy()
    a = clf.fit(X, y, clf.ClassifierConfig(variant="rf", seed=1))
    b = clf.fit(X, y, clf.ClassifierConfig(variant="rf", seed=2))
    assert a.to_json() != b.to_json()


def test_forest_invariant_to_monotone_transform():
    X, y = _noisy(seed=4)
    cfg = clf.ClassifierConfig(variant="random_forest", seed=5)
    # per-column increasing affine maps keep every split ordering
    A = np.array([2.0, 0.5, 10.0, 1.0, 3.0])
    B = np.array([1.0, -4.0, 0.0, 100.0, 7.0])
    a = clf.fit(X, y, cfg).predict_proba(X)
    b = clf.fit(X * A + B, y, cfg).predict_proba(X * A + B)
    assert np.array_equal(a, b)


def test_svm_invariant_to_affine_rescaling():
    X, y = _noisy(seed=6)
    cfg = clf.ClassifierConfig(variant="svm_poly", tol=1e-6)
    A, B = np.array([3.0, 0.2, 7.0, 1.5, 0.9]), np.array([5.0, -1.0, 2.0, 0.0, 40.0])
    a = clf.fit(X, y, cfg).predict_proba(X)
    b = clf.fit(X * A + B, y, cfg).predict_proba(X * A + B)
    assert np.allclose(a, b, atol=1e-6)


@pytest.mark.parametrize("variant", VARIANTS)
def test_dimension_mismatch(variant):
    X, y = _noisy()
    m = clf.fit(X, y, clf.ClassifierConfig(variant=variant))
    with pytest.raises(DomainError, match="expected 5 features"):
        m.predict_proba(np.zeros((2, 4)))


def test_invalid_inputs():
    with pytest.raises(DomainError):
        clf.ClassifierConfig(variant="knn")
    with pytest.raises(DomainError):
        clf.ClassifierConfig(c=0.0)
    with pytest.raises(DomainError):
        clf.fit(np.array([[np.nan]]), [0])
    with pytest.raises(DomainError):
        clf.fit(np.zeros((2, 1)), [0, 3])
    m = clf.fit(*_noisy(), clf.ClassifierConfig(variant="rf"))
    with pytest.raises(ChildCIError):
        m.decision_function(np.zeros(5))


def test_missing_class_never_predicted():
    X, y = _noisy()
    keep = y != 1
    m = clf.fit(X[keep], y[keep], clf.ClassifierConfig(variant="svm_poly"))
    P = m.predict_proba(np.random.default_rng(0).normal(size=(200, 5)))
    assert (P[:, 1] == 0).all()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.1, 1.0]))
def test_svm_matches_libsvm_decisions(seed, C):
    sklearn_svm = pytest.importorskip("sklearn.svm")
    X, y = _noisy(40, 4, seed)
    if len(np.unique(y)) < 3:
        return
    m = clf.fit(X, y, clf.ClassifierConfig(variant="svm_poly", c=C, tol=1e-7, max_iter=10**6))
    Xs = m.standardize(X)
    D = m.decision_function(X)
    for c in range(3):
        ref = sklearn_svm.SVC(C=C, kernel="poly", degree=3, gamma=m.gamma, coef0=1.0, tol=1e-9)
        ref.fit(Xs, np.where(y == c, 1, -1))
        assert np.allclose(D[:, c], ref.decision_function(Xs), atol=1e-3)
