import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from l2relax import solver
from l2relax.panel import GramPair, TimePanel, compute_gram, standardize_in_sample
from l2relax.solver import SolverSettings

from _oracles import dual_value, qp_dual_projected_gradient
from conftest import random_panel

DIAG = GramPair(np.diag([2 / 3, 2 / 9]), np.array([0.0, -2 / 9]), 2 / 3, np.array([2.0, 1 / 3]), 3)


def test_diagonal_gram_tau_zero():
    sol = solver.solve_dual(DIAG, 0.0)
    np.testing.assert_allclose(sol.gamma, [0, -4.5], atol=1e-12)
    np.testing.assert_allclose(solver.fit(DIAG, 0.0).beta, [0, -1], atol=1e-12)


def test_diagonal_gram_tau_ninth():
    f = solver.fit(DIAG, 1 / 9)
    np.testing.assert_allclose(f.beta, [0, -0.5], atol=1e-12)
    assert f.gamma[1] == pytest.approx(-9 / 4, abs=1e-10)
    cd = solver.fit(DIAG, 1 / 9, method="cd")
    np.testing.assert_allclose(cd.beta, [0, -0.5], atol=1e-10)


def test_tau_above_sup_gives_zero():
    rng = np.random.default_rng(0)
    g = compute_gram(random_panel(rng, 6, 20))
    for tau in (g.eta_sup, 2 * g.eta_sup, 1e9):
        f = solver.fit(g, tau)
        assert np.all(f.beta == 0.0) and np.all(f.gamma == 0.0)
        assert f.alpha == g.y_mean


def test_tau_zero_is_ols():
    rng = np.random.default_rng(1)
    g = compute_gram(random_panel(rng, 5, 40))
    ols = np.linalg.solve(g.sigma, g.eta)
    f = solver.fit(g, 0.0)
    assert np.max(np.abs(f.beta - ols)) <= 1e-6 * np.max(np.abs(ols))
    assert f.method == "l2relax"


def test_ridgeless_minimum_norm():
    rng = np.random.default_rng(2)
    p = random_panel(rng, 12, 8)  # N > T1: rank-deficient
    g = compute_gram(p)
    b = solver.fit_ridgeless(g).beta
    np.testing.assert_allclose(g.sigma @ b, g.eta, atol=1e-9)
    w, V = np.linalg.eigh(g.sigma)
    null = V[:, w < 1e-10 * w[-1]]
    assert null.shape[1] > 0
    for _ in range(50):
        other = b + null @ rng.standard_normal(null.shape[1])
        assert np.linalg.norm(other) > np.linalg.norm(b)


def test_ridgeless_zero_gram():
    g = GramPair(np.zeros((3, 3)), np.zeros(3), 1.0, np.zeros(3), 5)
    assert np.all(solver.fit_ridgeless(g).beta == 0)


def test_small_random_instance_matches_qp_oracle():
    rng = np.random.default_rng(3)
    g = compute_gram(random_panel(rng, 5, 20))
    tau = 0.1 * g.eta_sup
    ref = qp_dual_projected_gradient(g.sigma, g.eta, tau)
    got = solver.solve_dual(g, tau)
    assert abs(got.objective - dual_value(g.sigma, g.eta, tau, ref)) < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 8), st.integers(10, 30), st.sampled_from([0.0, 0.05, 0.1, 0.3, 0.5, 0.9]), st.integers(0, 2**31 - 1))
def test_feasibility_recovery_and_oracle(N, T, frac, seed):
    rng = np.random.default_rng(seed)
    g = compute_gram(random_panel(rng, N, T))
    tau = frac * g.eta_sup
    f = solver.fit(g, tau)
    assert f.converged
    assert np.max(np.abs(f.beta - g.sigma @ f.gamma)) <= 1e-10 * (1 + np.max(np.abs(f.beta)))
    assert np.max(np.abs(g.eta - g.sigma @ f.beta)) <= tau * (1 + 1e-6) + 1e-8
    assert f.kkt_residual <= 1e-6 * max(tau, g.eta_sup)
    ref = qp_dual_projected_gradient(g.sigma, g.eta, tau)
    assert solver.dual_objective(g, f.gamma, tau) <= dual_value(g.sigma, g.eta, tau, ref) + 1e-6
    assert np.max(np.abs(f.beta - g.sigma @ ref)) < 1e-5


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 10), st.integers(5, 30), st.integers(0, 2**31 - 1))
def test_norm_shrinks_with_tau(N, T, seed):
    rng = np.random.default_rng(seed)
    g = compute_gram(random_panel(rng, N, T))
    taus = np.sort(rng.uniform(0, 1.1, 8)) * g.eta_sup
    norms = [np.linalg.norm(f.beta) for f in solver.fit_path(g, taus)]
    assert all(a >= b - 1e-8 for a, b in zip(norms, norms[1:]))


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 15), st.integers(8, 40), st.integers(0, 2**31 - 1))
def test_coordinate_order_does_not_change_beta(N, T, seed):
    rng = np.random.default_rng(seed)
    g = compute_gram(random_panel(rng, N, T))
    tau = 0.2 * g.eta_sup
    a = solver.fit(g, tau, method="cd")
    b = solver.fit(g, tau, SolverSettings(order=tuple(rng.permutation(N))), method="cd")
    assert np.max(np.abs(a.beta - b.beta)) < 1e-6


def test_path_homotopy_agrees_with_descent():
    rng = np.random.default_rng(4)
    # N > T1 exercises the singular dual curvature
    for N, T in ((40, 25), (30, 80)):
        g = compute_gram(standardize_in_sample(random_panel(rng, N, T))[0])
        taus = np.linspace(0.01, 1.2, 25) * g.eta_sup
        h = solver.fit_path(g, taus)
        c = solver.fit_path(g, taus, method="cd")
        for a, b in zip(h, c):
            assert np.max(np.abs(a.beta - b.beta)) < 1e-6
            assert a.kkt_residual <= 1e-6 * g.eta_sup


def test_path_returns_input_order():
    rng = np.random.default_rng(5)
    g = compute_gram(random_panel(rng, 5, 30))
    taus = np.array([0.5, 0.1, 0.3]) * g.eta_sup
    for f, t in zip(solver.fit_path(g, taus), taus):
        assert f.tau == t


def test_lazy_curvature_route():
    rng = np.random.default_rng(6)
    g = compute_gram(random_panel(rng, 12, 40))
    tau = 0.2 * g.eta_sup
    dense = solver.fit(g, tau)
    lazy = solver.fit(g, tau, SolverSettings(dense_limit=4, tol=1e-12))
    np.testing.assert_allclose(lazy.beta, dense.beta, atol=1e-7)


def test_negative_tau_rejected():
    with pytest.raises(ValueError):
        solver.fit(DIAG, -1.0)


def test_predict_hand_example():
    f = solver.RelaxationFit(0.0, np.array([0.0, -1.0]), 0.0, np.zeros(2), 0.0)
    assert solver.predict(f, [7.0, 1.0], DIAG) == pytest.approx(0.0, abs=1e-15)
    alpha = DIAG.y_mean - DIAG.x_means @ f.beta
    f2 = solver.RelaxationFit(0.0, f.beta, alpha, np.zeros(2), 0.0)
    assert solver.predict(f2, [7.0, 1.0]) == pytest.approx(0.0, abs=1e-15)


def test_zero_beta_predicts_mean_and_mpse_is_variance():
    rng = np.random.default_rng(7)
    p = random_panel(rng, 4, 30)
    g = compute_gram(p)
    f = solver.fit(g, 10 * g.eta_sup)
    assert solver.predict(f, rng.standard_normal(4)) == pytest.approx(g.y_mean)
    assert solver.predict(solver.fit(g, 0.3 * g.eta_sup), g.x_means) == pytest.approx(g.y_mean)
    assert solver.mpse(f, p, p.train_idx) == pytest.approx(np.var(p.y), rel=1e-12)


def test_mpse_second_path():
    rng = np.random.default_rng(8)
    p = random_panel(rng, 6, 50, n_train=35)
    f = solver.fit(compute_gram(p), 0.05)
    e = [p.y[t] - (f.alpha + sum(f.beta[i] * p.X[i, t] for i in range(6))) for t in p.eval_idx]
    assert solver.mpse(f, p, p.eval_idx) == pytest.approx(sum(v * v for v in e) / len(e), abs=1e-12)
    with pytest.raises(ValueError):
        solver.mpse(f, p, [])


def test_original_units_predictions_match():
    rng = np.random.default_rng(9)
    p = random_panel(rng, 5, 40, n_train=30)
    p = TimePanel(3.0 + 2.0 * p.y, p.X * np.arange(1, 6)[:, None] + 1.0, p.train_idx, p.eval_idx)
    std, params = standardize_in_sample(p)
    f = solver.fit(compute_gram(std), 0.1)
    raw = solver.to_original_units(f, params)
    pred_std = params.y_mean + params.y_sd * solver.predict(f, std.X)
    np.testing.assert_allclose(solver.predict(raw, p.X), pred_std, atol=1e-10)
    assert raw.scale == "original"


def test_fit_dict_round_trip():
    rng = np.random.default_rng(10)
    g = compute_gram(random_panel(rng, 4, 20))
    f = solver.fit(g, 0.2 * g.eta_sup)
    back = solver.RelaxationFit.from_dict(f.to_dict())
    np.testing.assert_array_equal(back.beta, f.beta)
    assert back.alpha == f.alpha and back.tau == f.tau
