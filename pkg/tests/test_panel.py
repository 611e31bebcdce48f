import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from l2relax.panel import (
    PanelError,
    TimePanel,
    compute_gram,
    load_panel_csv,
    parse_split,
    standardize_in_sample,
)

from conftest import random_panel


def write(tmp_path, text, name="p.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_csv_split_shapes(tmp_path):
    p = write(tmp_path, "date,y,a,b\n2000,1,2,3\n2001,2,3,5\n2002,0,1,1\n2003,4,4,2\n")
    panel = load_panel_csv(p, "y", 3)
    assert (panel.T, panel.N) == (4, 2)
    assert panel.train_idx.tolist() == [0, 1, 2]
    assert panel.eval_idx.tolist() == [3]
    assert panel.names == ("a", "b")


def test_split_by_label_and_last_row(tmp_path):
    p = write(tmp_path, "date,y,a\nq1,1,2\nq2,2,3\nq3,0,1\nq4,4,4\n")
    assert load_panel_csv(p, "y", "q3").eval_idx.tolist() == [3]
    panel = load_panel_csv(p, "y", 4)
    assert not panel.has_eval


def test_blank_cell_is_missing_value(tmp_path):
    p = write(tmp_path, "date,y,a\nq1,1,2\nq2,2,\nq3,0,1\n")
    with pytest.raises(PanelError, match="missing value"):
        load_panel_csv(p, "y", 2)


def test_non_numeric_and_missing_target(tmp_path):
    p = write(tmp_path, "y,a\n1,2\n2,x\n0,1\n")
    with pytest.raises(PanelError, match="non-numeric"):
        load_panel_csv(p, "y", 2)
    p = write(tmp_path, "y,a\n1,2\n2,3\n0,1\n", "q.csv")
    with pytest.raises(PanelError, match="target"):
        load_panel_csv(p, "z", 2)


def test_split_out_of_range():
    with pytest.raises(PanelError):
        parse_split(0, None, 5)
    with pytest.raises(PanelError):
        parse_split(6, None, 5)
    with pytest.raises(PanelError):
        parse_split("2020Q9", ("a", "b"), 2)


def test_overlapping_split_rejected():
    with pytest.raises(PanelError, match="overlap"):
        TimePanel(np.zeros(4), np.ones((1, 4)), [0, 1, 2], [2, 3])


def test_standardize_divisor_t():
    panel = TimePanel(np.array([1.0, 2.0, 3.0]), np.array([[1.0, 0.0, 2.0]]), np.arange(3))
    std, params = standardize_in_sample(panel)
    assert params.y_sd == pytest.approx(np.sqrt(2 / 3), abs=1e-15)
    assert std.y.mean() == pytest.approx(0, abs=1e-15)
    assert np.mean(std.y**2) == pytest.approx(1, abs=1e-12)


def test_standardize_idempotent():
    rng = np.random.default_rng(1)
    std, _ = standardize_in_sample(random_panel(rng, 4, 30))
    again, params = standardize_in_sample(std)
    assert params.y_mean == pytest.approx(0, abs=1e-12)
    assert params.y_sd == pytest.approx(1, abs=1e-12)
    np.testing.assert_allclose(params.x_sds, 1, atol=1e-12)
    np.testing.assert_allclose(again.X, std.X, atol=1e-12)


def test_constant_control_rejected():
    panel = TimePanel(np.array([1.0, 2.0, 4.0]), np.array([[5.0, 5.0, 5.0], [1.0, 2.0, 0.0]]), np.arange(3))
    with pytest.raises(PanelError, match="constant"):
        standardize_in_sample(panel)


def test_gram_hand_example(toy_panel):
    g = compute_gram(toy_panel)
    np.testing.assert_allclose(g.sigma, [[2 / 3, 0], [0, 2 / 9]], atol=1e-15)
    np.testing.assert_allclose(g.eta, [0, -2 / 9], atol=1e-15)
    assert g.n_obs == 3


def test_gram_target_equal_to_control():
    rng = np.random.default_rng(2)
    p = random_panel(rng, 3, 20)
    p = p.with_target(p.X[0])
    g = compute_gram(p)
    assert g.eta[0] == pytest.approx(g.sigma[0, 0], abs=1e-14)


def test_standardized_gram_unit_diagonal():
    rng = np.random.default_rng(3)
    std, _ = standardize_in_sample(random_panel(rng, 6, 40, n_train=30))
    np.testing.assert_allclose(np.diag(compute_gram(std).sigma), 1.0, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(3, 25), st.integers(0, 2**31 - 1))
def test_gram_psd_symmetric_and_order_free(N, T, seed):
    rng = np.random.default_rng(seed)
    panel = random_panel(rng, N, T)
    g = compute_gram(panel)
    assert np.max(np.abs(g.sigma - g.sigma.T)) <= 1e-12
    tr = np.trace(g.sigma)
    v = rng.standard_normal((200, N))
    quad = np.einsum("ij,jk,ik->i", v, g.sigma, v)
    assert np.all(quad >= -1e-10 * np.sum(v * v, axis=1) * tr / N)
    perm = rng.permutation(T)
    g2 = compute_gram(panel.with_split(perm))
    np.testing.assert_allclose(g2.sigma, g.sigma, atol=1e-12)
    np.testing.assert_allclose(g2.eta, g.eta, atol=1e-12)


def test_panel_arrays_read_only(toy_panel):
    with pytest.raises(ValueError):
        toy_panel.y[0] = 3.0
