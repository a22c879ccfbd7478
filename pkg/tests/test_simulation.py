import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stratising.model import (
    IsingParameters,
    StratifiedGraphEstimate,
    StratifiedIsingParameters,
    n_pairs,
    pair_index,
)
from stratising.selection import GridSpec
from stratising.simulation import (
    BenchmarkRecord,
    SimulationDesign,
    acc_h,
    acc_s,
    build_stratified_parameters,
    generate_common_structure,
    n_specific,
    run_benchmark,
    simulate,
    summarize,
)


def degrees(edges, p):
    d = np.zeros(p, int)
    for j, l in edges:
        d[j] += 1
        d[l] += 1
    return d


def is_connected(edges, p):
    adj = {j: set() for j in range(p)}
    for j, l in edges:
        adj[j].add(l)
        adj[l].add(j)
    seen, stack = {0}, [0]
    while stack:
        for nb in adj[stack.pop()] - seen:
            seen.add(nb)
            stack.append(nb)
    return len(seen) == p


def test_chain_structure():
    edges = generate_common_structure("chain", 10)
    assert edges == [(j, j + 1) for j in range(9)]
    assert degrees(edges, 10).max() <= 2


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_scale_free_is_spanning_tree(seed):
    edges = generate_common_structure("scale_free", 50, seed)
    assert len(edges) == 49 and len(set(edges)) == 49
    assert is_connected(edges, 50)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_three_nearest_neighbor_degrees(seed):
    edges = generate_common_structure("three_nearest_neighbor", 50, seed)
    assert degrees(edges, 50).min() >= 3
    assert all(j < l for j, l in edges) and edges == sorted(set(edges))


def test_structure_errors():
    with pytest.raises(ValueError):
        generate_common_structure("chain", 1)
    with pytest.raises(ValueError):
        generate_common_structure("ring", 5)


def test_structure_reproducible():
    a = generate_common_structure("three_nearest_neighbor", 20, 3)
    assert a == generate_common_structure("three_nearest_neighbor", 20, 3)


def test_rho_zero_gives_identical_strata():
    common = generate_common_structure("chain", 10)
    truth, z = build_stratified_parameters(common, 10, 0.0, 3, seed=1)
    tables = truth.interaction_table()
    for k in range(1, 3):
        assert np.array_equal(tables[:, 0], tables[:, k])
    assert not z.any()


def test_rho_one_chain_specific_edges():
    common = generate_common_structure("chain", 10)
    truth, z = build_stratified_parameters(common, 10, 1.0, 3, seed=2)
    common_idx = [pair_index(j, l, 10) for j, l in common]
    tables = truth.interaction_table()
    for k in range(3):
        nz = np.flatnonzero(tables[:, k])
        assert set(common_idx) <= set(nz)
        assert len(nz) == 9 + 9
    # common weights are shared
    assert np.all(tables[common_idx] == tables[common_idx, :1])
    assert z.sum() > 0


@given(
    rho=st.sampled_from([0.0, 0.25, 0.5, 1.0]),
    K=st.integers(1, 4),
    seed=st.integers(0, 10_000),
    kind=st.sampled_from(["chain", "three_nearest_neighbor", "scale_free"]),
)
@settings(max_examples=30, deadline=None)
def test_truth_invariants(rho, K, seed, kind):
    p = 12
    common = generate_common_structure(kind, p, seed)
    truth, z = build_stratified_parameters(common, p, rho, K, seed)
    table = truth.interaction_table()
    mags = np.abs(table[table != 0])
    assert np.all((mags >= 0.5) & (mags <= 1.0))
    m = n_specific(rho, len(common))
    assert np.all(np.count_nonzero(table, axis=0) == len(common) + m)
    for theta in truth.per_stratum:
        M = theta.matrix()
        assert np.array_equal(M, M.T)
        assert not theta.main_effects.any()
    expected_z = np.array([not np.all(row == row[0]) for row in table])
    assert np.array_equal(z, expected_z)


def test_round_half_away_from_zero():
    assert n_specific(0.25, 9) == 2
    assert n_specific(0.5, 9) == 5
    assert n_specific(0.5, 3) == 2
    assert n_specific(0.0, 9) == 0


def test_insufficient_free_pairs_rejected():
    common = generate_common_structure("chain", 3)  # 2 common, 1 free pair
    with pytest.raises(ValueError, match="non-common"):
        build_stratified_parameters(common, 3, 1.0, 2, seed=0)
    with pytest.raises(ValueError):
        build_stratified_parameters(common, 3, 1.5, 2, seed=0)


def one_edge_truth(p=4, K=1):
    theta = np.zeros(n_pairs(p))
    theta[0] = 0.7
    return StratifiedIsingParameters(tuple(IsingParameters(p, np.zeros(p), theta) for _ in range(K)))


def test_acc_s_examples():
    truth = one_edge_truth()
    empty = StratifiedGraphEstimate(4, np.zeros((6, 1)))
    assert acc_s(truth, empty) == pytest.approx(5 / 6)
    exact = StratifiedGraphEstimate(4, truth.interaction_table())
    assert acc_s(truth, exact) == 1.0
    complement = StratifiedGraphEstimate(4, (truth.interaction_table() == 0).astype(float))
    assert acc_s(truth, complement) == 0.0


def test_acc_s_dimension_mismatch():
    with pytest.raises(ValueError):
        acc_s(one_edge_truth(K=2), StratifiedGraphEstimate(4, np.zeros((6, 1))))
    with pytest.raises(ValueError):
        acc_s(one_edge_truth(p=4), StratifiedGraphEstimate(5, np.zeros((10, 1))))


def test_acc_h_examples():
    z = np.array([1, 1, 0, 0, 0, 0], bool)
    assert acc_h(z, np.zeros(6, bool)) == pytest.approx(4 / 6)
    assert acc_h(z, z) == 1.0
    assert acc_h(np.zeros(6, bool), np.zeros(6, bool)) == 1.0
    with pytest.raises(ValueError):
        acc_h(z, np.zeros(10, bool))


@given(seed=st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_acc_s_relabeling_invariance(seed):
    rng = np.random.default_rng(seed)
    p, K = 5, 3
    common = generate_common_structure("chain", p)
    truth, _ = build_stratified_parameters(common, p, 0.5, K, rng)
    W = rng.normal(size=(n_pairs(p), K)) * (rng.random((n_pairs(p), K)) < 0.4)
    order = rng.permutation(K)
    est = StratifiedGraphEstimate(p, W)
    a = acc_s(truth, est)
    b = acc_s(StratifiedIsingParameters(tuple(truth.per_stratum[k] for k in order)), StratifiedGraphEstimate(p, W[:, order]))
    assert a == pytest.approx(b, abs=1e-15)
    assert 0.0 <= a <= 1.0


def test_simulate_shapes_and_determinism():
    design = SimulationDesign("chain", 6, 2, 50, 0.5, 1, seed=4)
    truth, z, data = simulate(design)
    assert data.K == 2 and data.p == 6 and data.n_k == (50, 50)
    assert data.stratum_names == ("s1", "s2")
    _, _, again = simulate(design)
    for k in range(2):
        assert np.array_equal(data.stratum(k), again.stratum(k))
    assert design.design_id == "chain-p6-K2-n50-rho0.5"


def test_design_validation():
    with pytest.raises(ValueError):
        SimulationDesign(rho=1.2)
    with pytest.raises(ValueError):
        SimulationDesign(replicates=0)
    with pytest.raises(ValueError):
        SimulationDesign(structure="grid")


@pytest.fixture(scope="module")
def small_records():
    design = SimulationDesign("chain", 5, 2, 150, 0.0, 3, seed=9)
    return run_benchmark(design, ["indep", "datashared"], grid=GridSpec(4, 3))


def test_benchmark_counts_and_ranges(small_records):
    assert len(small_records) == 6
    for est in ("indep", "datashared"):
        recs = [r for r in small_records if r.estimator == est]
        assert [r.replicate for r in recs] == [0, 1, 2]
    for r in small_records:
        assert not r.error
        assert 0.0 <= r.acc_s <= 1.0 and 0.0 <= r.acc_h <= 1.0
        assert r.df >= 0


def test_benchmark_deterministic(small_records):
    design = SimulationDesign("chain", 5, 2, 150, 0.0, 3, seed=9)
    again = run_benchmark(design, ["indep", "datashared"], grid=GridSpec(4, 3))
    strip = lambda rs: [(r.replicate, r.estimator, r.acc_s, r.acc_h, r.lambda1, r.lambda2, r.df) for r in rs]
    assert strip(again) == strip(small_records)


def test_replicate_independent_of_estimator_set(small_records):
    design = SimulationDesign("chain", 5, 2, 150, 0.0, 3, seed=9)
    alone = run_benchmark(design, ["datashared"], grid=GridSpec(4, 3))
    joint = [r for r in small_records if r.estimator == "datashared"]
    assert [r.acc_s for r in alone] == [r.acc_s for r in joint]


def test_summary_matches_hand_average(small_records):
    summary = summarize(small_records)
    for (design, est), stats in summary.items():
        recs = [r for r in small_records if r.estimator == est and r.design == design]
        assert stats["n"] == len(recs) == 3
        assert stats["acc_s"] == pytest.approx(sum(r.acc_s for r in recs) / 3, abs=1e-15)
        assert stats["acc_h"] == pytest.approx(sum(r.acc_h for r in recs) / 3, abs=1e-15)


def test_failures_are_recorded_not_raised():
    # a reference stratum outside 0..K-1 fails validation inside each fit
    design = SimulationDesign("chain", 4, 2, 60, 0.0, 2, seed=1)
    recs = run_benchmark(design, ["reflasso:5", "indep"], grid=GridSpec(2, 2))
    bad = [r for r in recs if r.estimator.startswith("reflasso")]
    assert len(bad) == 2 and all(r.error and r.df == -1 and math.isnan(r.acc_s) for r in bad)
    assert all(not r.error for r in recs if r.estimator == "indep")
    assert isinstance(recs[0], BenchmarkRecord)
