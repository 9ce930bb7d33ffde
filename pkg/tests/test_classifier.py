import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from polaris.classifier import (
    SUBSETS,
    ClassifierConfig,
    DimRecord,
    VariableAssignment,
    VariableType,
    classify_variables,
    select_subset,
    subset_label,
    subset_types,
    summarise_assignment,
)
from polaris.errors import DomainError, EmptySubsetError, InsufficientDataError
from polaris.representation import RepresentationSet

A, P, M = VariableType.ACTIVE, VariableType.PASSIVE, VariableType.MIXED


def test_spec_examples():
    var = np.column_stack([np.ones(10), np.full(10, 0.05), np.tile([0.02, 0.98], 5)])
    assert classify_variables(var).types == [P, A, M]


def test_boundaries_are_closed():
    # a two-row column (a, b) has mean (a+b)/2 and unbiased variance (a-b)^2/2
    var = np.array([[0.9, 0.1], [0.9, 0.1]])
    assert classify_variables(var, ClassifierConfig(0.1)).types == [P, A]
    assert classify_variables(np.ones((3, 1)), ClassifierConfig(0.0)).types == [P]
    assert classify_variables(np.full((3, 1), 0.5), ClassifierConfig(0.0)).types == [M]


def test_variance_condition_alone_makes_mixed():
    # mean 1 but spread 0.5 on either side: Var = 0.25*4/3 > 0.1
    col = np.array([0.5, 1.5, 0.5, 1.5])[:, None]
    assert classify_variables(col).types == [M]


def test_config_validation():
    with pytest.raises(DomainError):
        ClassifierConfig(0.5)
    with pytest.raises(DomainError):
        ClassifierConfig(-0.01)


def test_classify_preconditions():
    with pytest.raises(DomainError):
        classify_variables([[0.0], [1.0]])
    with pytest.raises(InsufficientDataError):
        classify_variables([[1.0, 1.0]])


def test_assignment_rejects_contradictions_and_empty():
    with pytest.raises(DomainError):
        VariableAssignment(dims=(), alpha=0.1)
    with pytest.raises(DomainError):
        VariableAssignment(dims=(DimRecord(0, A, 1.0, 0.0),), alpha=0.1)
    with pytest.raises(DomainError):
        VariableAssignment(dims=(DimRecord(1, P, 1.0, 0.0),), alpha=0.1)


def _assignment(types):
    stats = {A: (0.0, 0.0), P: (1.0, 0.0), M: (0.5, 0.0)}
    return VariableAssignment(tuple(DimRecord(i, t, *stats[t]) for i, t in enumerate(types)), 0.1)


def test_summarise_examples():
    assert summarise_assignment(_assignment([A, P, M, A])) == (2, 1, 1)
    assert summarise_assignment(_assignment([P] * 6)) == (0, 6, 0)


def test_select_subset_examples(rng):
    rep = RepresentationSet.from_noise(rng.normal(size=(5, 3)), rng.uniform(0.2, 1, (5, 3)), rng.normal(size=(5, 3)))
    asg = _assignment([A, P, M])
    full = select_subset(rep, asg, {A, P, M})
    assert np.array_equal(full.sampled, rep.sampled)
    sub = select_subset(rep, asg, {A, M})
    assert np.array_equal(sub.mean, rep.mean[:, [0, 2]])
    assert np.array_equal(sub.noise, rep.noise[:, [0, 2]])
    with pytest.raises(EmptySubsetError):
        select_subset(rep, asg, set())
    with pytest.raises(DomainError):
        select_subset(rep, _assignment([A, P]), {A})


def test_subset_labels():
    assert subset_types("active+mixed") == {A, M}
    assert subset_label({M, A}) == "active+mixed"
    assert subset_label({"passive"}) == "passive"
    assert len(SUBSETS) == 7
    with pytest.raises(DomainError):
        subset_types("everything")


def test_json_round_trip_and_layout(rng):
    asg = classify_variables(rng.uniform(0.01, 1.5, size=(20, 4)))
    data = json.loads(asg.to_json())
    assert set(data) == {"alpha", "dims"}
    assert set(data["dims"][0]) == {"index", "type", "sigma_mean", "sigma_var"}
    back = VariableAssignment.from_dict(data)
    assert back == asg and back.digest() == asg.digest()


def test_index_transfer_to_mean_and_sampled(rng):
    n = 400
    var = np.column_stack([np.full(n, 1.0), np.full(n, 0.01), np.full(n, 0.99)])
    mean = np.column_stack([np.zeros(n), rng.normal(size=n) * 3, np.zeros(n)])
    rep = RepresentationSet.from_noise(mean, var, rng.normal(size=(n, 3)))
    asg = classify_variables(rep.variance)
    passive = select_subset(rep, asg, {P})
    assert passive.dims == 2
    assert np.array_equal(passive.mean, rep.mean[:, [0, 2]])
    active = select_subset(rep, asg, {A})
    assert np.array_equal(active.sampled, rep.sampled[:, [1]])


def test_deterministic(rng):
    var = rng.uniform(0.01, 1.2, size=(50, 6))
    assert classify_variables(var) == classify_variables(var.copy())


variance_matrices = hnp.arrays(
    np.float64, st.tuples(st.integers(2, 12), st.integers(1, 6)), elements=st.floats(1e-3, 1.5)
)


@given(variance_matrices, st.floats(0, 0.49), st.floats(0, 0.49))
def test_mixed_set_shrinks_as_alpha_grows(var, a1, a2):
    lo, hi = sorted((a1, a2))
    small = classify_variables(var, ClassifierConfig(lo)).types
    big = classify_variables(var, ClassifierConfig(hi)).types
    for t_small, t_big in zip(small, big):
        if t_small is not M:
            assert t_big is t_small


@given(variance_matrices)
def test_partition(var):
    asg = classify_variables(var)
    assert sum(summarise_assignment(asg)) == var.shape[1]
