"""Tests for the three stacked dynamic programs and the result caches."""

import numpy as np
import pytest
from hypothesis import given, settings

import oracles
from conftest import random_dataset
from exactbn.dataset import Dataset
from exactbn.errors import CacheFormatError
from exactbn.local_scores import (
    LocalScoreStore,
    collapse,
    compute_all,
    expand,
    load_store,
    save_store,
)
from exactbn.optimizer import (
    BestParentStore,
    Network,
    SinkTables,
    all_best_parents,
    best_parents,
    best_sinks,
    learn,
    learn_from_store,
    load_best_parents,
    load_sinks,
    network_score,
    ord_to_net,
    save_best_parents,
    save_sinks,
    score_for_ordering,
    sinks_to_ord,
)
from exactbn.scoring import AIC, BDE, BIC, ScoreSpec
from strategies import datasets, specs

ALL_SPECS = [ScoreSpec(BDE, 0.1), ScoreSpec(BDE, 1.0), ScoreSpec(BDE, 10.0),
             ScoreSpec(BIC), ScoreSpec(AIC)]


def rel_close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


# -------------------------------------------------------------- end to end


@settings(max_examples=30, deadline=None)
@given(datasets(max_vars=5), specs())
def test_learn_matches_exhaustive_search(data, spec):
    result = learn(data, spec)
    best, _ = oracles.exhaustive_best(result.store.scores)
    assert rel_close(result.score, best)
    assert result.network.is_acyclic()
    assert result.network.consistent_with(result.ordering)
    assert result.score == network_score(result.network, result.store)


def test_learn_result_unpacks(rng):
    data = random_dataset(rng, 3, 25)
    net, ordering, score = learn(data, ScoreSpec(BDE, 1.0))
    assert isinstance(net, Network)
    assert sorted(ordering) == [0, 1, 2]
    assert isinstance(score, float)


def test_single_variable_network(rng):
    data = random_dataset(rng, 1, 10)
    result = learn(data, ScoreSpec(BIC))
    assert result.network.parents == (0,)
    assert result.ordering == (0,)
    assert result.score == result.store.score_of(0, 0)


def test_independent_uniform_data_yields_empty_network(rng):
    cells = rng.integers(0, 2, size=(5000, 4))
    data = Dataset.from_array(cells)
    result = learn(data, ScoreSpec(BIC))
    assert result.network.arc_count == 0
    best, _ = oracles.exhaustive_best(result.store.scores)
    assert rel_close(result.score, best)


def test_column_permutation_changes_nothing(rng):
    data = random_dataset(rng, 5, 120)
    perm = rng.permutation(5)
    permuted = Dataset.from_array(data.cells[:, perm],
                                  arities=data.arities[perm])
    for spec in (ScoreSpec(BDE, 1.0), ScoreSpec(BIC)):
        a = learn(data, spec)
        b = learn(permuted, spec)
        assert rel_close(a.score, b.score)
        # relabeling the permuted network back must score optimally on the
        # original store (tie freedom allows a different DAG, not a worse one)
        relabeled = [0] * 5
        for child in range(5):
            for parent in range(5):
                if (b.network.parents[child] >> parent) & 1:
                    relabeled[perm[child]] |= 1 << perm[parent]
        back = Network(parents=tuple(relabeled))
        assert rel_close(network_score(back, a.store), a.score)


# -------------------------------------------------------------- best parents


@pytest.mark.parametrize("spec", ALL_SPECS, ids=str)
def test_best_parents_maximize_over_subsets(rng, spec):
    data = random_dataset(rng, 4, 35)
    store = compute_all(data, spec)
    bp = all_best_parents(store)
    n = data.n
    for v in range(n):
        for idx in range(1 << (n - 1)):
            cand = expand(v, idx)
            subs = oracles.submasks(cand)
            expected = max(store.score_of(v, s) for s in subs)
            chosen, got = bp.best_for(v, cand)
            assert got == expected
            assert chosen & ~cand == 0
            assert store.score_of(v, chosen) == got


def test_best_parents_monotone_in_candidates(rng):
    data = random_dataset(rng, 4, 30)
    store = compute_all(data, ScoreSpec(BDE, 1.0))
    bp = all_best_parents(store)
    for v in range(4):
        for idx in range(8):
            cand = expand(v, idx)
            for sub in oracles.submasks(cand):
                assert bp.best_for(v, sub)[1] <= bp.best_for(v, cand)[1]


def synthetic_store(scores, kind=BIC):
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    return LocalScoreStore(spec=ScoreSpec(kind),
                           arities=np.full(n, 2, dtype=np.int64),
                           scores=scores)


def test_best_parents_tie_keeps_candidate_set():
    # all-equal scores: every candidate set should be chosen as-is
    store = synthetic_store(np.zeros((3, 4)))
    psets, scores = best_parents(1, store)
    assert list(psets) == [0, 1, 2, 3]
    assert list(scores) == [0.0, 0.0, 0.0, 0.0]
    # strictly better empty set: everything collapses to it
    table = np.zeros((3, 4))
    table[1] = [0.0, -1.0, -1.0, -1.0]
    psets, scores = best_parents(1, synthetic_store(table))
    assert list(psets) == [0, 0, 0, 0]
    assert list(scores) == [0.0, 0.0, 0.0, 0.0]


@pytest.mark.parametrize("n", [4, 8, 12])
def test_best_parents_comparison_count(rng, n):
    scores = rng.normal(size=(n, 1 << (n - 1)))
    store = synthetic_store(scores)
    stats = {}
    best_parents(0, store, stats=stats)
    assert stats["comparisons"] == (n - 1) * (1 << (n - 2))
    stats = {}
    all_best_parents(store, stats=stats)
    assert stats["comparisons"] == n * (n - 1) * (1 << (n - 2))


# -------------------------------------------------------------- best sinks


@pytest.mark.parametrize("spec", ALL_SPECS, ids=str)
def test_best_sinks_against_recursive_definition(rng, spec):
    data = random_dataset(rng, 4, 40)
    store = compute_all(data, spec)
    bp = all_best_parents(store)
    stats = {}
    tables = best_sinks(store, bp, stats=stats)
    assert stats["subsets"] == 16
    assert tables.scores[0] == 0.0
    assert tables.sinks[0] == -1

    memo = {0: 0.0}

    def brute(W):
        if W not in memo:
            memo[W] = max(brute(W ^ (1 << s))
                          + float(bp.scores[s, collapse(s, W ^ (1 << s))])
                          for s in range(4) if (W >> s) & 1)
        return memo[W]

    for W in range(1, 16):
        assert float(tables.scores[W]) == brute(W)
        options = [(s, brute(W ^ (1 << s))
                    + float(bp.scores[s, collapse(s, W ^ (1 << s))]))
                   for s in range(4) if (W >> s) & 1]
        lowest_argmax = min(s for s, x in options if x == brute(W))
        assert tables.sinks[W] == lowest_argmax


def test_singleton_subsets(rng):
    data = random_dataset(rng, 3, 20)
    store = compute_all(data, ScoreSpec(BDE, 1.0))
    tables = best_sinks(store, all_best_parents(store))
    for v in range(3):
        assert tables.sinks[1 << v] == v
        assert float(tables.scores[1 << v]) == store.score_of(v, 0)


def test_sink_ties_pick_lowest_variable():
    # two identical columns: both choices of sink give the same total
    data = Dataset.from_array(np.array([[0, 0], [1, 1], [0, 0], [1, 1]]))
    store = compute_all(data, ScoreSpec(BDE, 1.0))
    bp = all_best_parents(store)
    tables = best_sinks(store, bp)
    by_sink_0 = float(tables.scores[0b10]) + float(bp.scores[0, 1])
    by_sink_1 = float(tables.scores[0b01]) + float(bp.scores[1, 1])
    assert by_sink_0 == by_sink_1  # the tie is real
    assert tables.sinks[0b11] == 0


def test_full_set_beats_empty_network(rng):
    for spec in ALL_SPECS:
        data = random_dataset(rng, 5, 60)
        store = compute_all(data, spec)
        tables = best_sinks(store, all_best_parents(store))
        empty = sum(store.score_of(v, 0) for v in range(5))
        assert float(tables.scores[31]) >= empty - 1e-9


def test_mismatched_tables_rejected(rng):
    small = compute_all(random_dataset(rng, 3, 10), ScoreSpec(BIC))
    big = compute_all(random_dataset(rng, 4, 10), ScoreSpec(BIC))
    with pytest.raises(ValueError):
        best_sinks(big, all_best_parents(small))


# -------------------------------------------------------------- orderings


def test_ordering_round_trip_reaches_table_score(rng):
    for spec in ALL_SPECS:
        data = random_dataset(rng, 5, 45)
        store = compute_all(data, spec)
        bp = all_best_parents(store)
        tables = best_sinks(store, bp)
        ordering = sinks_to_ord(tables)
        net = ord_to_net(ordering, bp)
        total = network_score(net, store)
        assert total == pytest.approx(float(tables.scores[31]), rel=1e-12)
        assert score_for_ordering(ordering, bp) == pytest.approx(total,
                                                                 rel=1e-12)
        assert net.consistent_with(ordering)


def test_hand_built_sink_tables_peel_in_order():
    tables = SinkTables(sinks=np.array([-1, 0, 1, 1], dtype=np.int8),
                        scores=None)
    assert tables.n == 2
    assert sinks_to_ord(tables) == (0, 1)


def test_inconsistent_sink_tables_rejected():
    tables = SinkTables(sinks=np.array([-1, 0, 1, -1], dtype=np.int8),
                        scores=None)
    with pytest.raises(ValueError):
        sinks_to_ord(tables)
    # sink not a member of its subset
    tables = SinkTables(sinks=np.array([-1, 1, 1, 1], dtype=np.int8),
                        scores=None)
    with pytest.raises(ValueError):
        sinks_to_ord(tables)


def test_ord_to_net_validates_permutation(rng):
    data = random_dataset(rng, 3, 15)
    store = compute_all(data, ScoreSpec(BIC))
    bp = all_best_parents(store)
    with pytest.raises(ValueError):
        ord_to_net((0, 0, 1), bp)
    with pytest.raises(ValueError):
        ord_to_net((0, 1), bp)


# -------------------------------------------------------------- networks


def test_network_bookkeeping():
    net = Network(parents=(0b1000, 0b0101, 0b0001, 0b0000))
    assert net.n == 4
    assert net.arc_count == 4
    assert net.max_in_degree == 2
    assert net.parent_lists() == [[3], [0, 2], [0], []]
    assert set(net.edges()) == {(3, 0), (0, 1), (2, 1), (0, 2)}
    assert net.consistent_with((3, 0, 2, 1))
    assert not net.consistent_with((0, 1, 2, 3))
    order = net.topological_order()
    assert net.consistent_with(order)


def test_cycle_detection():
    loop = Network(parents=(0b10, 0b01))
    assert not loop.is_acyclic()
    with pytest.raises(ValueError):
        loop.topological_order()
    assert Network(parents=(0, 0b1)).is_acyclic()


# -------------------------------------------------------------- precision


def test_single_precision_storage_stays_near_optimal(rng, tmp_path):
    data = random_dataset(rng, 5, 80)
    exact = learn(data, ScoreSpec(BDE, 1.0))
    path = tmp_path / "scores.bnls"
    save_store(exact.store, path, precision=4)
    rounded = learn_from_store(load_store(path))
    assert rounded.store.scores.dtype == np.float32
    assert rounded.best_parents.scores.dtype == np.float32
    assert rel_close(rounded.score, exact.score, tol=1e-6)


# -------------------------------------------------------------- caches


def test_sink_cache_round_trip(rng, tmp_path):
    data = random_dataset(rng, 4, 30)
    spec = ScoreSpec(BDE, 2.0)
    result = learn(data, spec)
    path = tmp_path / "t.bnsk"
    save_sinks(result.sink_tables, spec, data.arities, path)
    back_spec, back_arities, tables = load_sinks(path)
    assert back_spec == spec
    assert np.array_equal(back_arities, data.arities)
    assert np.array_equal(tables.sinks, result.sink_tables.sinks)
    assert tables.scores is None
    assert sinks_to_ord(tables) == result.ordering


def test_sink_cache_validation(rng, tmp_path):
    data = random_dataset(rng, 3, 20)
    result = learn(data, ScoreSpec(BIC))
    path = tmp_path / "t.bnsk"
    save_sinks(result.sink_tables, ScoreSpec(BIC), data.arities, path)
    raw = bytearray(path.read_bytes())
    bad = tmp_path / "bad.bnsk"
    bad.write_bytes(bytes(raw[:-1]))
    with pytest.raises(CacheFormatError, match="payload"):
        load_sinks(bad)
    mutated = raw.copy()
    mutated[-1] = 7  # sink index out of range for n = 3
    bad.write_bytes(bytes(mutated))
    with pytest.raises(CacheFormatError, match="range"):
        load_sinks(bad)


def test_best_parent_cache_round_trip(rng, tmp_path):
    data = random_dataset(rng, 4, 30)
    spec = ScoreSpec(BDE, 1.0)
    store = compute_all(data, spec)
    bp = all_best_parents(store)
    path = tmp_path / "t.bnbp"
    save_best_parents(bp, spec, data.arities, path)
    back = load_best_parents(path, store)
    assert np.array_equal(back.parent_sets, bp.parent_sets)
    assert np.array_equal(back.scores, bp.scores)


def test_best_parent_cache_must_match_store(rng, tmp_path):
    data = random_dataset(rng, 4, 30)
    store = compute_all(data, ScoreSpec(BDE, 1.0))
    other = compute_all(data, ScoreSpec(BDE, 2.0))
    bp = all_best_parents(store)
    path = tmp_path / "t.bnbp"
    save_best_parents(bp, ScoreSpec(BDE, 1.0), data.arities, path)
    with pytest.raises(CacheFormatError, match="match"):
        load_best_parents(path, other)


def test_best_parent_cache_rejects_non_subset_choice(rng, tmp_path):
    data = random_dataset(rng, 4, 30)
    spec = ScoreSpec(BDE, 1.0)
    store = compute_all(data, spec)
    bp = all_best_parents(store)
    path = tmp_path / "t.bnbp"
    save_best_parents(bp, spec, data.arities, path)
    raw = bytearray(path.read_bytes())
    raw[-4:] = (0xFF, 0, 0, 0)  # last choice mask: far outside its candidates
    path.write_bytes(bytes(raw))
    with pytest.raises(CacheFormatError, match="subset"):
        load_best_parents(path, store)
