import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from polaris.errors import DimensionError, DomainError, InsufficientDataError, ParseError
from polaris.representation import (
    BINARY_MAGIC,
    RepresentationKind,
    RepresentationSet,
    as_matrix,
    column_stats,
    load_matrix,
    reparameterise,
    save_matrix,
)

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
matrices = hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=6), elements=finite)


def test_reparameterise_zero_noise_is_mean(rng):
    m = rng.normal(size=(4, 3))
    v = rng.uniform(0.1, 2, size=(4, 3))
    assert np.array_equal(reparameterise(m, v, np.zeros((4, 3))), m)


def test_reparameterise_standard_passthrough(rng):
    n = rng.normal(size=(5, 2))
    assert np.array_equal(reparameterise(np.zeros((5, 2)), np.ones((5, 2)), n), n)


def test_reparameterise_worked_example():
    z = reparameterise([[1.0, 2.0]], [[4.0, 9.0]], [[1.0, -1.0]])
    assert z.tolist() == [[3.0, -1.0]]


def test_reparameterise_errors():
    with pytest.raises(DimensionError):
        reparameterise(np.zeros((2, 2)), np.ones((2, 3)), np.zeros((2, 2)))
    with pytest.raises(DomainError):
        reparameterise(np.zeros((1, 2)), [[1.0, 0.0]], np.zeros((1, 2)))


@given(
    hnp.arrays(np.float64, (3, 2), elements=st.floats(-5, 5)),
    hnp.arrays(np.float64, (3, 2), elements=st.floats(0.01, 4)),
    hnp.arrays(np.float64, (3, 2), elements=st.floats(-3, 3)),
    hnp.arrays(np.float64, (3, 2), elements=st.floats(-3, 3)),
    st.floats(-2, 2),
    st.floats(-2, 2),
)
def test_reparameterise_linear_in_noise(mu, var, e1, e2, a, b):
    lhs = reparameterise(mu, var, a * e1 + b * e2)
    zero = np.zeros_like(mu)
    rhs = a * reparameterise(zero, var, e1) + b * reparameterise(zero, var, e2) + mu
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_representation_set_checks_identity(rng):
    m = rng.normal(size=(6, 3))
    v = rng.uniform(0.1, 1, size=(6, 3))
    e = rng.normal(size=(6, 3))
    rep = RepresentationSet.from_noise(m, v, e)
    assert rep.n_examples == 6 and rep.dims == 3
    assert rep.matrix("sampled") is rep.sampled
    assert rep.matrix(RepresentationKind.VARIANCE) is rep.variance
    bad = rep.sampled.copy()
    bad[0, 0] = np.nextafter(bad[0, 0], np.inf)
    with pytest.raises(DomainError):
        RepresentationSet(m, v, bad, e)
    # without noise there is nothing to check
    RepresentationSet(m, v, bad)


def test_representation_set_shape_and_positivity(rng):
    m = rng.normal(size=(4, 2))
    with pytest.raises(DimensionError):
        RepresentationSet(m, np.ones((4, 3)), m)
    with pytest.raises(DomainError):
        RepresentationSet(m, -np.ones((4, 2)), m)


def test_representation_set_is_immutable(rng):
    rep = RepresentationSet.from_noise(rng.normal(size=(3, 2)), np.ones((3, 2)), rng.normal(size=(3, 2)))
    with pytest.raises(ValueError):
        rep.mean[0, 0] = 1.0


def test_columns_slices_all_matrices(rng):
    rep = RepresentationSet.from_noise(rng.normal(size=(5, 4)), rng.uniform(0.5, 1, (5, 4)), rng.normal(size=(5, 4)))
    sub = rep.columns([3, 1])
    for kind in ("mean", "variance", "sampled"):
        assert np.array_equal(sub.matrix(kind), rep.matrix(kind)[:, [3, 1]])
    assert np.array_equal(sub.noise, rep.noise[:, [3, 1]])


def test_as_matrix_rejects_non_finite_and_1d():
    with pytest.raises(DomainError):
        as_matrix([[np.nan]])
    with pytest.raises(DimensionError):
        as_matrix([1.0, 2.0])
    with pytest.raises(DimensionError):
        as_matrix(np.zeros((0, 3)))


@pytest.mark.parametrize(
    "column, mean, var",
    [([1, 1, 1, 1], 1.0, 0.0), ([0, 2], 1.0, 2.0), ([0, 1, 0, 1], 0.5, 1 / 3)],
)
def test_column_stats_examples(column, mean, var):
    m, v = column_stats(np.array(column, dtype=float)[:, None])
    assert m[0] == pytest.approx(mean, abs=1e-15)
    assert v[0] == pytest.approx(var, abs=1e-15)


def test_column_stats_needs_two_rows():
    with pytest.raises(InsufficientDataError):
        column_stats([[1.0, 2.0]])


def test_load_csv_example(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("a,b\n1,2\n3,4\n")
    m = load_matrix(p, "csv")
    assert m.shape == (2, 2) and m.ravel().tolist() == [1, 2, 3, 4]


def test_load_empty_file_is_parse_error(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("")
    with pytest.raises(ParseError):
        load_matrix(p)


@pytest.mark.parametrize(
    "text, row, col",
    [("a,b\n1,2\n3\n", 1, None), ("a,b\n1,x\n", 0, 1), ("a,b\n1,2\nnan,4\n", 1, 0), ("a\ninf\n", 0, 0)],
)
def test_csv_parse_errors_name_location(tmp_path, text, row, col):
    p = tmp_path / "m.csv"
    p.write_text(text)
    with pytest.raises(ParseError) as info:
        load_matrix(p)
    assert info.value.row == row
    assert info.value.col == col


def test_binary_hand_built_file(tmp_path):
    p = tmp_path / "m.bin"
    p.write_bytes(BINARY_MAGIC + struct.pack("<HII", 1, 1, 3) + struct.pack("<3d", 0.0, 0.5, 1.0))
    assert load_matrix(p).tolist() == [[0.0, 0.5, 1.0]]


def test_binary_bad_header(tmp_path):
    p = tmp_path / "m.bin"
    p.write_bytes(b"XXXX" + struct.pack("<HII", 1, 1, 1) + struct.pack("<d", 1.0))
    with pytest.raises(ParseError):
        load_matrix(p)
    p.write_bytes(BINARY_MAGIC + struct.pack("<HII", 1, 2, 2) + struct.pack("<d", 1.0))
    with pytest.raises(ParseError):
        load_matrix(p)


def test_binary_non_finite_names_cell(tmp_path):
    p = tmp_path / "m.bin"
    p.write_bytes(BINARY_MAGIC + struct.pack("<HII", 1, 2, 2) + struct.pack("<4d", 0, 1, 2, np.inf))
    with pytest.raises(ParseError) as info:
        load_matrix(p)
    assert (info.value.row, info.value.col) == (1, 1)


def test_csv_layout(tmp_path):
    p = tmp_path / "m.csv"
    save_matrix([[0.1, 2.0]], p)
    assert p.read_bytes() == b"z0,z1\n0.10000000000000001,2\n"


def test_save_to_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        save_matrix([[1.0]], tmp_path / "missing" / "m.bin")


@given(matrices)
def test_binary_round_trip_bit_exact(tmp_path_factory, m):
    p = tmp_path_factory.mktemp("rt") / "m.bin"
    save_matrix(m, p)
    back = load_matrix(p)
    assert back.tobytes() == np.ascontiguousarray(m).tobytes()


@given(matrices)
def test_csv_round_trip_exact(tmp_path_factory, m):
    p = tmp_path_factory.mktemp("rt") / "m.csv"
    save_matrix(m, p)
    assert np.array_equal(load_matrix(p), m)


def test_binary_keeps_signed_zero_and_subnormals(tmp_path):
    m = np.array([[-0.0, 5e-324, -2.2250738585072014e-308]])
    save_matrix(m, tmp_path / "m.bin")
    back = load_matrix(tmp_path / "m.bin")
    assert back.tobytes() == m.tobytes()
    assert np.signbit(back[0, 0])
