import numpy as np
import pytest
from hypothesis import given, strategies as st

from btprint.errors import NoValidCells, TooFewSessions
from btprint.features import DEFAULT_FILTERS, FilterSpec
from btprint.learners import ALL_ALGORITHMS, AlgorithmId
from btprint.selection import (GridCell, Identified, Unidentified, best_filter, classify_unknown,
                               elect, fit_elected, run_grid, stratified_split, top_filters)

from conftest import packets

A = AlgorithmId


def test_split_66_34():
    labels = ["a"] * 100 + ["b"] * 100
    tr, va = stratified_split(labels, ["a", "b"], 0.66, 0)
    for c in "ab":
        assert sum(labels[i] == c for i in tr) == 66
        assert sum(labels[i] == c for i in va) == 34


def test_split_one_one_and_too_few():
    tr, va = stratified_split(["a", "a", "b", "b"], ["a", "b"], 0.5, 0)
    assert len(tr) == 2 and len(va) == 2
    with pytest.raises(TooFewSessions):
        stratified_split(["a", "b", "b"], ["a", "b"], 0.5, 0)


@given(st.integers(2, 30), st.integers(2, 30), st.floats(0.05, 0.95), st.integers(0, 2**32))
def test_split_is_a_deterministic_partition(na, nb, frac, seed):
    labels = ["a"] * na + ["b"] * nb
    tr, va = stratified_split(labels, ["a", "b"], frac, seed)
    tr2, va2 = stratified_split(labels, ["a", "b"], frac, seed)
    assert np.array_equal(tr, tr2) and np.array_equal(va, va2)
    assert sorted(np.concatenate([tr, va]).tolist()) == list(range(na + nb))


def _grid(accs):
    algs = ALL_ALGORITHMS
    return [GridCell(algs[i % len(algs)], DEFAULT_FILTERS[i], acc) for i, acc in enumerate(accs)]


def test_election_planted_random_forest():
    cells = [GridCell(A.RandomForest, DEFAULT_FILTERS[i], 0.99 - 0.001 * i) for i in range(3)]
    others = [a for a in ALL_ALGORITHMS if a is not A.RandomForest]
    cells += [GridCell(others[i % len(others)], DEFAULT_FILTERS[10 + i], 0.9 - 0.01 * i)
              for i in range(17)]
    assert elect(cells) is A.RandomForest
    assert best_filter(A.RandomForest, cells) == DEFAULT_FILTERS[0]


def test_election_all_tied_is_deterministic():
    cells = _grid([0.8] * 20)
    winners = {elect(cells) for _ in range(10)}
    # every cell kept; algorithms 0 and 1 appear 3 times, the rest twice
    assert winners == {ALL_ALGORITHMS[0]}
    assert elect(list(reversed(cells))) is ALL_ALGORITHMS[0]


def test_election_frequency_beats_single_best():
    cells = [GridCell(A.OneR, DEFAULT_FILTERS[0], 1.0)]
    cells += [GridCell(A.CartTree, DEFAULT_FILTERS[i], 0.95) for i in range(1, 4)]
    cells += [GridCell(A.LogisticRegression, DEFAULT_FILTERS[i], 0.5) for i in range(4, 20)]
    # ceil(0.15 * 20) = 3 kept, widened to the three tied 0.95 cells
    assert elect(cells) is A.CartTree


def test_election_skips_invalid_and_raises_when_none():
    cells = [GridCell(A.OneR, DEFAULT_FILTERS[0], None), GridCell(A.CartTree, DEFAULT_FILTERS[1], 0.2)]
    assert elect(cells) is A.CartTree
    with pytest.raises(NoValidCells):
        elect([GridCell(A.OneR, DEFAULT_FILTERS[0], None)])


def test_top_filters_order():
    cells = [GridCell(A.OneR, DEFAULT_FILTERS[i], acc) for i, acc in enumerate([0.5, 0.9, 0.7])]
    assert [r["filter"] for r in top_filters(A.OneR, cells)] == [DEFAULT_FILTERS[i].name for i in (1, 2, 0)]


@pytest.fixture(scope="module")
def small_run(request):
    from conftest import sessions_from_profiles, simple_profile
    profiles = [simple_profile("fast", np.log(0.002), 0.1), simple_profile("slow", np.log(0.05), 0.1)]
    sessions = sessions_from_profiles(profiles, 6, 60)
    filters = [FilterSpec("all", 0), FilterSpec("RFCOMM", 10), FilterSpec("SDP", 0)]
    run = run_grid(sessions, [A.CartTree, A.GaussianNaiveBayes], filters, seed=1)
    return sessions, run


def test_run_grid_cells_and_invalid_filter(small_run):
    _, run = small_run
    assert len(run.cells) == 6
    sdp = [c for c in run.cells if c.filter.protocol == "SDP"]
    assert all(c.accuracy is None and c.reason for c in sdp)
    valid = [c for c in run.cells if c.accuracy is not None]
    assert all(c.accuracy == 1.0 for c in valid)


def test_resubstitution_bound(small_run):
    sessions, run = small_run
    resub = run_grid(sessions, [A.CartTree], [FilterSpec("all", 0)], seed=1, resubstitution=True)
    val = [c for c in run.cells if c.algorithm is A.CartTree and c.filter == FilterSpec("all", 0)]
    assert resub.cells[0].accuracy >= val[0].accuracy


def test_classify_unknown_cases(small_run):
    sessions, run = small_run
    m = fit_elected(run, A.CartTree, FilterSpec("all", 0), 1)
    s = sessions[run.train_idx[0]]
    verdict = classify_unknown(m, s.records, 0.5)
    assert isinstance(verdict, Identified) and verdict.label == s.label
    high = classify_unknown(m, s.records, 1.01)
    assert isinstance(high, Unidentified) and high.reason == "low_confidence"
    assert classify_unknown(m, packets([0]), 0.5) == Unidentified("insufficient_data")
    # under the all-all filter only a single packet survives
    assert classify_unknown(m, s.records[:1]).reason == "insufficient_data"
