import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from lsqfi.basis import BasisSpec, eval_basis, penalty_matrices
from lsqfi.design import Dataset, GridCurves, assemble, build_design
from lsqfi.penalty import PenaltyConfig, lqa_weights
from lsqfi.solver import (Coefficients, FitOptions, check_loss, fit, hierarchy_violations, majorizer,
                          newton_step, null_masks, objective, padded_roughness, perturbed_check_loss,
                          predict, reconstruct, threshold)


def lp_quantile(X, y, tau):
    n, p = X.shape
    c = np.r_[np.zeros(2 * p), tau * np.ones(n), (1 - tau) * np.ones(n)]
    A = np.hstack([X, -X, np.eye(n), -np.eye(n)])
    res = linprog(c, A_eq=A, b_eq=y, bounds=[(0, None)] * (2 * p + 2 * n), method="highs")
    return res.x[:p] - res.x[p:2 * p]


def toy_design(n=50, seed=0, q=0, spec=BasisSpec(2, 2)):
    rng = np.random.default_rng(seed)
    grid = np.linspace(0, 1, 101)
    vals = rng.normal(size=(n, spec.n_basis)) @ eval_basis(spec, grid).T
    data = Dataset(GridCurves(grid, vals), rng.normal(size=(n, q)), np.zeros(n))
    return build_design(data, spec), rng


def test_check_loss_values():
    assert check_loss(0.0, 0.3) == 0.0
    assert check_loss(2.0, 0.5) == 1.0
    assert check_loss(-1.0, 0.3) == pytest.approx(0.7)


def test_majorizer_quadratic_coefficient():
    rho, rp = 1e-6, 0.8
    f = lambda r: majorizer(np.array([r]), np.array([rp]), 0.5, rho)
    # second difference of a quadratic recovers twice its leading coefficient
    c2 = (f(1.0) - 2 * f(0.0) + f(-1.0)) / 2
    assert c2 == pytest.approx(1 / (4 * (rho + abs(rp))), rel=1e-9)


def test_majorizer_tangent_at_expansion_point():
    rng = np.random.default_rng(0)
    rho, tau = 1e-6, 0.3
    rp = rng.normal(size=20)
    assert majorizer(rp, rp, tau, rho) == pytest.approx(np.mean(perturbed_check_loss(rp, tau, rho)), abs=1e-14)
    h = 1e-6
    for i in range(3):
        e = np.zeros_like(rp)
        e[i] = h
        g = (majorizer(rp + e, rp, tau, rho) - majorizer(rp - e, rp, tau, rho)) / (2 * h) * rp.size
        sub = tau - (rp[i] < 0)
        assert abs(g - sub) < 1e-4


def test_majorizer_dominates_check_loss():
    rng = np.random.default_rng(1)
    rho = 1e-6
    for _ in range(10_000 // 100):
        tau = rng.uniform(0.05, 0.95)
        r, rp = rng.normal(scale=3, size=(2, 100))
        assert majorizer(r, rp, tau, rho) >= np.mean(check_loss(r, tau)) - 1e-4
        assert majorizer(r, rp, tau, rho) >= np.mean(perturbed_check_loss(r, tau, rho)) - 1e-12


def test_newton_step_toy_oracle():
    phi = np.array([[1.0, 0.5], [0.2, -1.0], [1.5, 0.3]])
    omega = np.array([0.1, -0.2])
    y = np.array([0.3, 0.4, -0.2])
    r = y - phi @ omega
    tau, rho, eta = 0.4, 1e-3, 0.05
    Wt = np.array([[0.2, 0.05], [0.05, 0.1]])
    V = np.array([[1.0, -0.3], [-0.3, 2.0]])
    w = 1 / (rho + np.abs(r))
    H = np.zeros((2, 2))
    g = np.zeros(2)
    for i in range(3):
        H += w[i] * np.outer(phi[i], phi[i])
        g += (1 - 2 * tau - r[i] * w[i]) * phi[i]
    H += 12 * (Wt + eta * V)
    g += 12 * (Wt + eta * V) @ omega
    a, b, c, d = H.ravel()
    inv = np.array([[d, -b], [-c, a]]) / (a * d - b * c)
    delta = newton_step(phi, omega, r, Wt, V, tau, rho, eta)
    assert np.max(np.abs(delta - (-inv @ g))) < 1e-10


def test_newton_step_is_zero_at_stationary_point():
    # least squares at its exact solution has zero gradient
    rng = np.random.default_rng(2)
    phi = rng.normal(size=(20, 3))
    y = rng.normal(size=20)
    om = np.linalg.lstsq(phi, y, rcond=None)[0]
    delta = newton_step(phi, om, y - phi @ om, np.zeros((3, 3)), np.zeros((3, 3)), 0.5, 1e-6, 0.0, "ls")
    assert np.linalg.norm(delta) < 1e-12


def test_newton_step_descends_surrogate():
    D, rng = toy_design(n=40, q=1, spec=BasisSpec(3, 5))
    spec = BasisSpec(3, 5)
    mats = penalty_matrices(spec)
    y = rng.normal(size=40)
    cfg = PenaltyConfig.from_rule(0.05, 1, eta=1e-3)
    om = rng.normal(scale=0.1, size=D.d_n)
    r = y - D.phi @ om
    W = lqa_weights(om[:D.q_n], cfg, mats, 1).padded(D.d_n)
    Vt = padded_roughness(mats, 1, D.d_n)
    pen = W + cfg.eta * Vt
    sur = lambda w: majorizer(y - D.phi @ w, r, 0.5, 1e-6) + w @ pen @ w
    delta = newton_step(D.phi, om, r, W, Vt, 0.5, 1e-6, cfg.eta)
    h = 1e-7
    assert (sur(om + h * delta) - sur(om - h * delta)) / (2 * h) <= 0
    assert sur(om + delta) <= sur(om)


@pytest.mark.parametrize("tau", [0.3, 0.5, 0.7])
def test_unpenalized_fit_matches_lp(tau):
    D, rng = toy_design()
    y = D.phi @ np.array([1.0, -2.0, 0.5, 3.0]) + 0.3 * rng.standard_t(3, 50)
    res = fit(D, y, BasisSpec(2, 2), PenaltyConfig(),
              FitOptions(tau=tau, zero_threshold=0.0, conv_tol=1e-8, max_iter=2000))
    assert res.converged
    assert np.max(np.abs(res.coeffs.omega - lp_quantile(D.phi, y, tau))) < 1e-3


def test_zero_response_gives_zero_fit():
    D, _ = toy_design(n=30, q=2, spec=BasisSpec(3, 6))
    res = fit(D, np.zeros(30), BasisSpec(3, 6), PenaltyConfig.from_rule(0.1, 2, eta=1e-4))
    assert np.all(res.coeffs.omega == 0)
    assert np.all(res.interval_masks)


def test_ls_normal_equations():
    D, rng = toy_design(n=60, q=1, spec=BasisSpec(3, 4))
    y = rng.normal(size=60)
    res = fit(D, y, BasisSpec(3, 4), PenaltyConfig(),
              FitOptions(loss="ls", penalty="smooth", zero_threshold=0.0, conv_tol=1e-12))
    r = y - predict(res, D)
    assert np.max(np.abs(D.phi.T @ r)) < 1e-8


def test_predict_intercept_only_and_layout_check():
    D, _ = toy_design(n=5, q=1, spec=BasisSpec(3, 4))
    c = Coefficients(np.zeros(D.d_n), 1, 7)
    assert np.all(predict(c, D) == 0)
    with pytest.raises(ValueError):
        predict(Coefficients(np.zeros(D.d_n + 1), 1, 7, True), D)


def test_reconstruct_direct_sum():
    spec = BasisSpec(3, 6)
    rng = np.random.default_rng(4)
    c = Coefficients(rng.normal(size=3 * spec.n_basis + 2), 2, spec.n_basis)
    t = rng.uniform(0, 1, 30)
    B = eval_basis(spec, t)
    direct = np.array([[sum(c.b[k, j] * B[i, j] for j in range(spec.n_basis)) for i in range(30)]
                       for k in range(3)])
    assert np.max(np.abs(reconstruct(c, spec, t) - direct)) < 1e-12
    unit = Coefficients(np.zeros(3 * spec.n_basis + 2), 2, spec.n_basis)
    unit.b[1, 4] = 1.0
    assert np.allclose(reconstruct(unit, spec, t)[1], B[:, 4], atol=0)
    assert np.all(reconstruct(Coefficients(np.zeros(3 * spec.n_basis + 2), 2, spec.n_basis), spec, t) == 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(1e-4, 1.0))
def test_group_threshold_never_breaks_hierarchy(seed, cutoff):
    rng = np.random.default_rng(seed)
    spec = BasisSpec(3, 10)
    mats = penalty_matrices(spec)
    q = 2
    om = rng.normal(scale=0.5, size=(q + 1) * spec.n_basis + q)
    # knock random windows out so all branches of the thresholding are used
    om[:(q + 1) * spec.n_basis][rng.uniform(size=(q + 1) * spec.n_basis) < 0.4] *= 1e-4
    out = threshold(om, mats, q, cutoff, "group")
    masks = null_masks(out[:(q + 1) * spec.n_basis].reshape(q + 1, -1), mats.window)
    assert hierarchy_violations(masks) == 0
    assert np.array_equal(out[-q:], om[-q:])


def test_hierarchy_violation_counter():
    m = np.array([[True, False, True], [False, False, True], [True, True, False]])
    assert hierarchy_violations(m) == 2


def test_descent_and_objective_trace_on_sparse_fit():
    D, rng = toy_design(n=120, q=2, spec=BasisSpec(3, 12))
    spec = BasisSpec(3, 12)
    y = D.x_mat @ rng.normal(size=spec.n_basis) + rng.standard_t(3, 120) * 0.2
    res = fit(D, y, spec, PenaltyConfig.from_rule(0.02, 2, eta=1e-5))
    s = np.asarray(res.surrogate_trace)
    assert np.all(np.diff(s) <= 1e-8)
    assert res.objective_trace[-1] <= res.objective_trace[0]
    mats = penalty_matrices(spec)
    assert res.objective_trace[-1] == pytest.approx(
        objective(res.raw_omega, D.phi, y, mats, res.config, res.options, 2))


def test_options_validation():
    with pytest.raises(ValueError):
        FitOptions(tau=1.0)
    with pytest.raises(ValueError):
        FitOptions.for_method("alt9")
    assert FitOptions.for_method("Alt.3").method == "alt3"
