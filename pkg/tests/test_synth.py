import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adass.errors import IngestionError, ParameterError
from adass.rand_dists import RngHandle
from adass.synth import (
    DIAGONAL_PATTERN,
    SIGNED_TWO,
    UNIFORM_BAND,
    Dataset,
    choose_support,
    gen_diagonal_pattern,
    generate_truth,
    load_dataset,
    read_matrix_csv,
    sample_data,
    save_dataset,
)


def test_signed_two_entries_and_support():
    t = generate_truth(SIGNED_TWO, 1000, 30, 3, RngHandle(1).generator())
    assert t.B_star.shape == (1000, 3) and t.psi_star == 2.0
    active = t.B_star[t.support]
    assert set(np.unique(active)) <= {-2.0, 2.0}
    rest = np.delete(t.B_star, t.support, axis=0)
    assert not rest.any()
    assert t.s == 30 and np.all(np.diff(t.support) > 0)


def test_uniform_band_magnitudes():
    s = 25
    t = generate_truth(UNIFORM_BAND, 200, s, 4, RngHandle(2).generator())
    mag = np.abs(t.B_star[t.support])
    assert mag.min() >= 3 / math.sqrt(s) and mag.max() <= 4 / math.sqrt(s)
    assert t.psi_star == 1.0
    assert (t.B_star[t.support] < 0).any() and (t.B_star[t.support] > 0).any()


def test_diagonal_pattern_blocks():
    t = gen_diagonal_pattern()
    assert t.B_star.shape == (50, 5)
    for k in range(5):
        col = t.B_star[:, k]
        np.testing.assert_array_equal(np.flatnonzero(col), np.arange(5 * k, 5 * k + 5))
        assert np.all(col[col != 0] == 1.0)
    assert generate_truth(DIAGONAL_PATTERN, 0, 0, 0, None).s == 25
    with pytest.raises(ParameterError):
        gen_diagonal_pattern(p=20, r=5)


@pytest.mark.parametrize("p,s,r", [(10, 11, 1), (10, 3, 4), (10, 3, 0)])
def test_size_validation(p, s, r):
    with pytest.raises(ParameterError):
        generate_truth(SIGNED_TWO, p, s, r, np.random.default_rng(0))


def test_unknown_design():
    with pytest.raises(ParameterError):
        generate_truth("nope", 10, 3, 1, np.random.default_rng(0))


@given(p=st.integers(1, 300), data=st.data())
@settings(max_examples=100, deadline=None)
def test_support_is_distinct_sorted_subset(p, data):
    s = data.draw(st.integers(0, p))
    sup = choose_support(p, s, np.random.default_rng(data.draw(st.integers(0, 2**31))))
    assert sup.size == s and len(set(sup.tolist())) == s
    assert np.all(np.diff(sup) > 0) and (s == 0 or (sup[0] >= 0 and sup[-1] < p))


def test_support_is_uniform_over_subsets():
    g = np.random.default_rng(3)
    counts = np.zeros(6)
    m = 30_000
    for _ in range(m):
        counts[choose_support(6, 2, g)] += 1
    # every index is included with probability 2/6
    assert np.all(np.abs(counts / m - 1 / 3) < 4 * math.sqrt((1 / 3) * (2 / 3) / m))


def test_sample_data_covariance():
    t = generate_truth(SIGNED_TWO, 20, 5, 2, RngHandle(4).generator())
    ds = sample_data(t, 40_000, RngHandle(4, 1).generator())
    assert ds.Y.shape == (40_000, 20)
    emp = ds.Y.T @ ds.Y / ds.n
    sig = t.Sigma_star
    # entrywise sd of the sample second moment is sqrt((sig_ij^2 + sig_ii sig_jj) / n)
    se = np.sqrt((sig ** 2 + np.outer(np.diag(sig), np.diag(sig))) / ds.n)
    assert np.all(np.abs(emp - sig) < 5 * se)
    with pytest.raises(ParameterError):
        sample_data(t, 0, np.random.default_rng(0))


def test_sample_data_reproducible():
    t = generate_truth(UNIFORM_BAND, 50, 10, 2, RngHandle(5).generator())
    a = sample_data(t, 10, RngHandle(5, 1).generator()).Y
    b = sample_data(t, 10, RngHandle(5, 1).generator()).Y
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("header", [True, False])
def test_csv_round_trip_is_exact(tmp_path, header):
    t = generate_truth(SIGNED_TWO, 12, 4, 2, RngHandle(6).generator())
    ds = sample_data(t, 7, RngHandle(6, 1).generator())
    path = tmp_path / "d.csv"
    save_dataset(ds, path, header=header)
    back = load_dataset(path)
    np.testing.assert_array_equal(back.Y, ds.Y)
    np.testing.assert_array_equal(back.truth.B_star, t.B_star)
    np.testing.assert_array_equal(back.truth.support, t.support)
    assert back.truth.psi_star == t.psi_star and back.meta["n"] == 7


def test_load_without_sidecar(tmp_path):
    path = tmp_path / "plain.csv"
    path.write_text("1,2\n3,4\n")
    ds = load_dataset(path)
    assert ds.truth is None and ds.Y.shape == (2, 2)
    assert isinstance(ds, Dataset)


def test_header_detection_and_override(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("a,b\n1,2\n3,4\n")
    assert read_matrix_csv(path).shape == (2, 2)
    with pytest.raises(IngestionError, match="row 1, column 1"):
        read_matrix_csv(path, header=False)
    num = tmp_path / "n.csv"
    num.write_text("1,2\n3,4\n")
    assert read_matrix_csv(num, header=True).shape == (1, 2)


@pytest.mark.parametrize("text,where", [
    ("1,2,3\n4,5\n", "row 2 has 2 fields"),
    ("1,2\n3,x\n", "row 2, column 2"),
    ("a,b\n1,2\n3,nan\n", "row 3, column 2"),
    ("", "no data rows"),
    ("a,b\n", "no data rows after header"),
])
def test_ingestion_errors_carry_location(tmp_path, text, where):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(IngestionError, match=where):
        read_matrix_csv(path)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="absent.csv"):
        read_matrix_csv(tmp_path / "absent.csv")


def test_blank_lines_are_skipped(tmp_path):
    path = tmp_path / "b.csv"
    path.write_text("1,2\n\n3,4\n , \n")
    assert read_matrix_csv(path).shape == (2, 2)
