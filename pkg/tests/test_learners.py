import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from btprint.errors import DegenerateDataset, DimensionMismatch, FilterMismatch
from btprint.features import N_BINS, FilterSpec, Signature
from btprint.learners import (ALL_ALGORITHMS, AlgorithmId, Dataset, class_scores, dumps_model, fit,
                              load_model, predict, predict_many,
                              save_model)
from btprint.learners.trees import grow_tree

from conftest import point_mass_signature


@pytest.fixture(scope="module")
def point_mass_ds():
    sigs = [point_mass_signature(0, "A", sid=f"a{i}") for i in range(6)]
    sigs += [point_mass_signature(N_BINS - 1, "B", sid=f"b{i}") for i in range(6)]
    return Dataset.from_signatures(sigs)


def test_ten_algorithms_four_families():
    assert len(ALL_ALGORITHMS) == 10
    assert {a.family for a in ALL_ALGORITHMS} == {"Bayes", "Functions", "Rules", "Trees"}
    assert list(ALL_ALGORITHMS) == sorted(ALL_ALGORITHMS, key=lambda a: a.value)


@pytest.mark.parametrize("alg", ALL_ALGORITHMS)
def test_point_mass_memorised(alg, point_mass_ds):
    m = fit(alg, point_mass_ds, 0)
    for s in point_mass_ds.signatures:
        label, conf = predict(m, s)
        assert label == s.label
        assert conf >= 0.9


@pytest.mark.parametrize("alg", ALL_ALGORITHMS)
def test_scores_are_distributions(alg):
    rng = np.random.default_rng(5)
    X = rng.dirichlet(np.ones(N_BINS) * 0.3, size=30)
    sigs = [Signature(x, "ABC"[i % 3], FilterSpec("all", 0), str(i), 1.0) for i, x in enumerate(X)]
    ds = Dataset.from_signatures(sigs)
    m = fit(alg, ds, 11)
    S = class_scores(m, sigs)
    assert S.shape == (30, 3)
    np.testing.assert_allclose(S.sum(axis=1), 1.0, atol=1e-9)
    assert (S >= -1e-12).all()
    assert {label for label, _ in predict_many(m, sigs)} <= set(ds.class_names)


@pytest.mark.parametrize("alg", ALL_ALGORITHMS)
def test_same_seed_identical_parameters(alg, point_mass_ds):
    assert dumps_model(fit(alg, point_mass_ds, 7)) == dumps_model(fit(alg, point_mass_ds, 7))


@pytest.mark.parametrize("alg", ALL_ALGORITHMS)
def test_serialisation_round_trip(alg, point_mass_ds, tmp_path):
    m = fit(alg, point_mass_ds, 3)
    save_model(tmp_path / "m.json", m)
    back = load_model(tmp_path / "m.json")
    assert dumps_model(back) == dumps_model(m)
    sigs = list(point_mass_ds.signatures)
    np.testing.assert_array_equal(class_scores(back, sigs), class_scores(m, sigs))


def test_one_class_is_degenerate():
    ds = Dataset.from_signatures([point_mass_signature(0, "A"), point_mass_signature(3, "A")])
    with pytest.raises(DegenerateDataset):
        fit(AlgorithmId.CartTree, ds, 0)
    empty = Dataset.from_signatures([point_mass_signature(0, "A")], ["A", "B"])
    with pytest.raises(DegenerateDataset):
        fit(AlgorithmId.OneR, empty, 0)


def test_dimension_and_filter_mismatch(point_mass_ds):
    m = fit(AlgorithmId.CartTree, point_mass_ds, 0)
    short = Signature(np.ones(N_BINS - 1) / (N_BINS - 1), None, FilterSpec("all", 0), "", 1.0)
    with pytest.raises(DimensionMismatch):
        predict(m, short)
    with pytest.raises(FilterMismatch):
        predict(m, point_mass_signature(0, None, f=FilterSpec("RFCOMM", 10)))
    with pytest.raises(FilterMismatch):
        predict(m, point_mass_signature(0, None, t_max=2.0))


def test_gaussian_nb_hand_posterior():
    rng = np.random.default_rng(0)
    a = rng.normal(0.8, 0.01, 20)
    b = rng.normal(0.2, 0.01, 20)

    def sig(v, label):
        x = np.zeros(N_BINS)
        x[0] = v
        return Signature(x, label, FilterSpec("all", 0), "", 1.0)

    ds = Dataset.from_signatures([sig(v, "A") for v in a] + [sig(v, "B") for v in b])
    m = fit(AlgorithmId.GaussianNaiveBayes, ds, 0)
    q = 0.75
    # closed form with the learner's own variance smoothing
    eps = 1e-9 * np.concatenate([a, b]).var()
    log_like = [-0.5 * math.log(2 * math.pi * (c.var() + eps)) - (q - c.mean()) ** 2 / (2 * (c.var() + eps))
                for c in (a, b)]
    p_a = 1.0 / (1.0 + math.exp(log_like[1] - log_like[0]))
    label, conf = predict(m, sig(q, None))
    assert label == "A"
    assert conf == pytest.approx(p_a, abs=1e-12)


# brute-force oracle: exact Gini over every candidate split, in rationals

def _gini(labels):
    n = len(labels)
    if n == 0:
        return Fraction(0)
    return 1 - sum(Fraction(labels.count(k), n) ** 2 for k in set(labels))


def _oracle_split(X, y, min_leaf):
    n, d = len(X), len(X[0])
    parent = _gini(y)
    best = None
    for j in range(d):
        vals = sorted({Fraction(row[j]) for row in X})
        for lo, hi in zip(vals, vals[1:]):
            thr = (lo + hi) / 2
            left = [y[i] for i in range(n) if Fraction(X[i][j]) <= thr]
            right = [y[i] for i in range(n) if Fraction(X[i][j]) > thr]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            imp = (len(left) * _gini(left) + len(right) * _gini(right)) / n
            if imp < parent and (best is None or (imp, -(hi - lo)) < (best[0], -best[3])):
                best = (imp, j, thr, hi - lo)
    return best


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 4).flatmap(lambda n: st.tuples(
    st.lists(st.lists(st.sampled_from([0.0, 0.125, 0.25, 0.5, 0.75, 1.0]), min_size=3, max_size=3),
             min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n))))
def test_root_split_matches_exact_oracle(data):
    X, y = data
    Xa, ya = np.array(X), np.array(y)
    for min_leaf in (1, 2):
        tree = grow_tree(Xa, ya, 2, min_leaf=min_leaf, max_depth=1)
        expect = _oracle_split(X, y, min_leaf)
        if len(set(y)) < 2 or expect is None:
            assert tree["feature"][0] == -1
        else:
            assert tree["feature"][0] == expect[1]
            assert tree["threshold"][0] == float(expect[2])


def test_cart_fits_separable_small_set_exactly():
    X = np.array([[0.0, 1.0], [0.1, 0.9], [0.9, 0.1], [1.0, 0.0]])
    tree = grow_tree(X, np.array([0, 0, 1, 1]), 2, min_leaf=2)
    assert tree["feature"][0] == 0 and tree["threshold"][0] == 0.5
