import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stratising.model import (
    FUSION_TOL,
    DataError,
    IsingParameters,
    NodewiseCoefficients,
    PenaltySpec,
    StratifiedDataset,
    StratifiedGraphEstimate,
    StratifiedIsingParameters,
    comp,
    iter_pairs,
    n_pairs,
    pair_index,
    validate_dataset,
)

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


# comp ----------------------------------------------------------------------


@pytest.mark.parametrize(
    "values, expected",
    [((0, 0, 0), 0), ((0.5, 0.5, -1), 2), ((1, 2, 3, 3), 3), ((0.0,), 0), ((1e-9, -1e-9), 0)],
)
def test_comp_examples(values, expected):
    assert comp(values) == expected


def test_comp_tolerance_chains_close_values():
    assert comp([1.0, 1.0 + 0.5 * FUSION_TOL, 1.0 + 2 * FUSION_TOL]) == 2
    assert comp([1.0, 1.0 + 0.9 * FUSION_TOL]) == 1


@given(st.lists(st.sampled_from([0.0, 0.3, -0.7, 1.2, 2.0]) | finite, min_size=1, max_size=8), st.randoms())
def test_comp_permutation_invariant_and_bounded(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    c = comp(values)
    assert c == comp(shuffled)
    assert 0 <= c <= len(values)
    assert (c == 0) == all(abs(v) <= FUSION_TOL for v in values)


# IsingParameters -------------------------------------------------------------


def test_pair_index_is_row_major_upper_triangle():
    p = 5
    assert [pair_index(j, l, p) for j, l in iter_pairs(p)] == list(range(n_pairs(p)))
    assert pair_index(3, 1, p) == pair_index(1, 3, p)
    with pytest.raises(IndexError):
        pair_index(2, 2, p)


@given(st.integers(2, 7).flatmap(lambda p: st.tuples(st.just(p), st.lists(finite, min_size=n_pairs(p), max_size=n_pairs(p)))))
def test_interaction_accessor_is_symmetric(args):
    p, vals = args
    theta = IsingParameters(p, np.zeros(p), vals)
    M = theta.matrix()
    assert np.array_equal(M, M.T)
    for j in range(p):
        for l in range(p):
            if j != l:
                assert theta.get(j, l) == theta.get(l, j) == M[j, l]


def test_ising_parameters_reject_bad_input():
    with pytest.raises(ValueError):
        IsingParameters(3, np.zeros(3), [1.0, np.inf, 0.0])
    with pytest.raises(ValueError):
        IsingParameters(3, np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError):
        StratifiedIsingParameters((IsingParameters.zeros(3), IsingParameters.zeros(4)))


def test_from_matrix_requires_symmetry():
    M = np.array([[0, 1.0], [0.5, 0]])
    with pytest.raises(ValueError):
        IsingParameters.from_matrix(M)
    t = IsingParameters.from_matrix(np.array([[0, 0.5], [0.5, 0]]))
    assert t.get(0, 1) == 0.5


# datasets --------------------------------------------------------------------


def test_validate_dataset_groups_by_first_appearance():
    rows = [["B", 1, 0], ["A", 0, 0], ["B", 1, 1], ["A", 1, 0]]
    d = validate_dataset(rows, ["stratum", "x", "y"])
    assert d.stratum_names == ("B", "A")
    assert d.K == 2 and d.n_k == (2, 2)
    assert d.stratum(0).tolist() == [[1, 0], [1, 1]]
    assert d.variable_names == ("x", "y")


def test_validate_dataset_single_stratum():
    rows = [["S", 0, 1, 0]] * 10
    d = validate_dataset(rows, ["stratum", "a", "b", "c"])
    assert d.K == 1 and d.n_k == (10,)


def test_non_binary_cell_names_line_and_column():
    rows = [["A", 0, 1], ["A", 2, 0]]
    with pytest.raises(DataError, match=r"line 3, column 'x': non-binary value"):
        validate_dataset(rows, ["stratum", "x", "y"])


@pytest.mark.parametrize(
    "rows, msg",
    [([["A", 0]], "expected 3 fields"), ([["", 0, 1]], "empty stratum label"), ([], "no rows")],
)
def test_validate_dataset_errors(rows, msg):
    with pytest.raises(DataError, match=msg):
        validate_dataset(rows, ["stratum", "x", "y"])


def test_dataset_invariants():
    with pytest.raises(DataError):
        StratifiedDataset.from_arrays([np.zeros((3, 2)), np.zeros((3, 3))])
    with pytest.raises(DataError):
        StratifiedDataset.from_arrays([np.zeros((0, 2))])
    with pytest.raises(DataError):
        StratifiedDataset.from_arrays([np.zeros((2, 2))] * 2, names=["a", "a"])
    d = StratifiedDataset.from_arrays([np.ones((2, 2)), np.zeros((3, 2))])
    assert d.n_total == 5
    r = d.reordered([1, 0])
    assert r.stratum_names == ("S2", "S1") and r.n_k == (3, 2)


def test_dataset_arrays_are_read_only():
    d = StratifiedDataset.from_arrays([np.ones((2, 2))])
    with pytest.raises(ValueError):
        d.stratum(0)[0, 0] = 0


# coefficients and estimates ------------------------------------------------------


def test_nodewise_decomposition_must_add_up():
    mu = np.array([0.1, 0.2, 0.0])
    gam = np.array([[0.0, 0.1, 0.0], [0.0, 0.0, 0.0]])
    theta = mu + gam
    c = NodewiseCoefficients(0, theta[:, 0], theta[:, 1:], shared_part=mu, deviations=gam)
    assert c.interaction(2).tolist() == [0.0, 0.0]
    assert c.interaction(1).tolist() == pytest.approx([0.3, 0.2])
    with pytest.raises(ValueError):
        NodewiseCoefficients(0, theta[:, 0], theta[:, 1:] + 1e-9, shared_part=mu, deviations=gam)


def test_column_of_skips_own_node():
    c = NodewiseCoefficients(1, np.zeros(1), np.array([[1.0, 2.0]]))
    assert c.interaction(0)[0] == 1.0 and c.interaction(2)[0] == 2.0
    with pytest.raises(IndexError):
        c.column_of(1)


@given(st.integers(1, 4).flatmap(lambda K: st.lists(st.lists(st.sampled_from([0.0, 0.5, -0.5, 1.0]), min_size=K, max_size=K), min_size=3, max_size=3)))
def test_heterogeneity_flag_iff_unequal(rows):
    W = np.array(rows)
    est = StratifiedGraphEstimate(3, W)
    for row, z in zip(W, est.heterogeneity):
        assert z == (len(set(row.tolist())) > 1)


def test_estimate_rejects_inconsistent_flags():
    W = np.array([[1.0, 1.0], [0.0, 1.0], [0.0, 0.0]])
    StratifiedGraphEstimate(3, W, [False, True, False])
    with pytest.raises(ValueError):
        StratifiedGraphEstimate(3, W, [True, True, False])


def test_penalty_spec_validation():
    assert PenaltySpec(0.1, (0.1, 0.2)).lambda2_for(2).tolist() == [0.1, 0.2]
    assert PenaltySpec(0.1, 0.3).lambda2_for(3).tolist() == [0.3] * 3
    with pytest.raises(ValueError):
        PenaltySpec(-1.0)
    with pytest.raises(ValueError):
        PenaltySpec(1.0, (0.1, np.nan))
    with pytest.raises(ValueError):
        PenaltySpec(1.0, (0.1, 0.2)).lambda2_for(3)


@settings(max_examples=30)
@given(st.lists(finite, min_size=6, max_size=6))
def test_stratum_parameters_roundtrip(vals):
    est = StratifiedGraphEstimate(4, np.array(vals)[:, None])
    assert est.stratum_parameters(0).interactions.tolist() == list(vals)
