"""Change-detection statistics: hand values, independent oracles for the
threshold, the projector identities, and Monte-Carlo behavior under both
hypotheses."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gamma

from wavefdi.errors import DegenerateStatisticsError, UnidentifiableSubsetError
from wavefdi.fdi import (
    DEFAULT_SUBSETS,
    ResidualBatch,
    chi2_threshold,
    covariance_matrix,
    global_chi2_test,
    minmax_test,
    normalized_residual,
    primary_residuals,
    run_fdi_pipeline,
    sensitivity_matrix,
    sensitivity_test,
    subset_label,
)


def chi2_tail_by_quadrature(lam, dof):
    """Independent oracle: numerically integrate the χ² density.

    The head [0, λ] is a finite interval where quad is essentially
    exact; the tail is its complement.
    """
    def pdf(x):
        return x ** (dof / 2.0 - 1.0) * math.exp(-x / 2.0) / (2 ** (dof / 2.0) * gamma(dof / 2.0))
    head, err = quad(pdf, 0.0, lam, epsabs=1e-12, epsrel=1e-12)
    assert err < 1e-10
    return 1.0 - head


def test_threshold_matches_tail_integral():
    for alpha, dof in ((0.05, 5), (0.01, 5), (0.2, 3), (0.001, 8)):
        lam = chi2_threshold(alpha, dof)
        assert chi2_tail_by_quadrature(lam, dof) == pytest.approx(alpha, abs=1e-8)


def test_threshold_closed_form_two_dof():
    # the two-dof survival function is exp(−λ/2), so λ = −2·ln(alpha)
    for alpha in (0.5, 0.1, 0.01):
        assert chi2_threshold(alpha, 2) == pytest.approx(-2.0 * math.log(alpha), rel=1e-12)


def test_threshold_pinned_values():
    assert chi2_threshold(0.05, 5) == pytest.approx(11.070497693516351, rel=1e-13)
    assert chi2_threshold(0.01, 5) == pytest.approx(15.086272469388991, rel=1e-13)
    assert chi2_threshold(0.5, 1) == pytest.approx(0.4549364231195724, rel=1e-12)


def test_threshold_monotonicity():
    alphas = (0.2, 0.1, 0.05, 0.01, 0.001)
    lams = [chi2_threshold(a, 5) for a in alphas]
    assert all(l1 < l2 for l1, l2 in zip(lams, lams[1:]))
    lams = [chi2_threshold(0.05, d) for d in range(1, 9)]
    assert all(l1 < l2 for l1, l2 in zip(lams, lams[1:]))


def test_threshold_validates_inputs():
    with pytest.raises(ValueError):
        chi2_threshold(0.0, 5)
    with pytest.raises(ValueError):
        chi2_threshold(1.0, 5)
    with pytest.raises(ValueError):
        chi2_threshold(0.05, 0)


def test_moment_statistics_hand_values():
    batch = ResidualBatch(np.array([1.0, -1.0]),
                          np.array([[1.0, 2.0], [3.0, 4.0]]))
    H = primary_residuals(batch)
    np.testing.assert_array_equal(H, [[1.0, 2.0], [-3.0, -4.0]])
    np.testing.assert_allclose(normalized_residual(H),
                               np.array([-2.0, -2.0]) / math.sqrt(2.0), atol=1e-15)
    np.testing.assert_allclose(sensitivity_matrix(batch.regressors),
                               [[5.0, 7.0], [7.0, 10.0]], atol=1e-15)


def test_covariance_includes_lagged_cross_terms():
    H = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    S = covariance_matrix(H, i_lags=1)
    lag0 = H.T @ H / 3.0
    cross = H[:-1].T @ H[1:]
    expected = lag0 + (cross + cross.T) / 2.0
    np.testing.assert_allclose(S, expected, atol=1e-15)
    with pytest.raises(ValueError):
        covariance_matrix(H, i_lags=-1)
    with pytest.raises(ValueError):
        covariance_matrix(H, i_lags=3)


def random_quadratic_problem(seed, p=5):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((p, p))
    M = M @ M.T + p * np.eye(p)
    L = rng.standard_normal((p, p))
    S = L @ L.T + p * np.eye(p)
    X = rng.standard_normal(p)
    return X, M, S


def test_statistic_is_quadratic_in_evidence():
    X, M, S = random_quadratic_problem(4)
    t1 = global_chi2_test(X, M, S)
    t9 = global_chi2_test(3.0 * X, M, S)
    assert t9 == pytest.approx(9.0 * t1, rel=1e-12)
    assert global_chi2_test(np.zeros(5), M, S) == 0.0


def test_full_rank_projector_collapses():
    # with square full-rank M the projection is the identity: t = XᵀS⁻¹X
    X, M, S = random_quadratic_problem(8)
    direct = float(X @ np.linalg.solve(S, X))
    assert global_chi2_test(X, M, S) == pytest.approx(direct, rel=1e-10)


def test_full_subset_equals_global():
    X, M, S = random_quadratic_problem(15)
    t = global_chi2_test(X, M, S)
    assert sensitivity_test(X, M, S, tuple(range(5))) == pytest.approx(t, rel=1e-10)
    assert sensitivity_test(X, M, S, np.eye(5)) == pytest.approx(t, rel=1e-10)
    assert minmax_test(X, M, S, tuple(range(5))) == pytest.approx(t, rel=1e-10)


def test_selection_forms_agree():
    X, M, S = random_quadratic_problem(23)
    A = np.zeros((5, 2))
    A[1, 0] = 1.0
    A[3, 1] = 1.0
    assert sensitivity_test(X, M, S, A) == pytest.approx(
        sensitivity_test(X, M, S, (1, 3)), rel=1e-12)
    with pytest.raises(ValueError):
        sensitivity_test(X, M, S, (1, 1))
    with pytest.raises(ValueError):
        sensitivity_test(X, M, S, (5,))
    with pytest.raises(ValueError):
        sensitivity_test(X, M, S, ())


def test_minmax_equals_sensitivity_when_information_decouples():
    # diagonal Fisher information: nothing to project out
    rng = np.random.default_rng(5)
    M = np.diag([2.0, 3.0, 1.5, 4.0, 2.5])
    S = np.eye(5)
    X = rng.standard_normal(5)
    for subset in ((0,), (2,), (4,), (1, 3)):
        assert minmax_test(X, M, S, subset) == pytest.approx(
            sensitivity_test(X, M, S, subset), abs=1e-10)


def test_degenerate_covariance_refused():
    X, M, _ = random_quadratic_problem(2)
    with pytest.raises(DegenerateStatisticsError):
        global_chi2_test(X, M, -np.eye(5))


def test_duplicated_direction_is_unidentifiable():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((400, 5))
    X[:, 4] = X[:, 3]          # weight 5 indistinguishable from weight 4
    e = rng.standard_normal(400)
    batch = ResidualBatch(e, X)
    H = primary_residuals(batch)
    Xbar = normalized_residual(H)
    M = sensitivity_matrix(X)
    S = covariance_matrix(H)
    with pytest.raises(UnidentifiableSubsetError):
        minmax_test(Xbar, M, S, (3,))


def test_batch_validation():
    with pytest.raises(ValueError):
        ResidualBatch(np.zeros(3), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        ResidualBatch(np.zeros(2), np.zeros((2, 5)))
    with pytest.raises(ValueError):
        ResidualBatch(np.array([np.nan, 0.0]), np.zeros((2, 1)))


def test_zero_residuals_report_healthy():
    rng = np.random.default_rng(0)
    batch = ResidualBatch(np.zeros(50), rng.standard_normal((50, 5)))
    rep = run_fdi_pipeline(batch, isolation="sensitivity")
    assert rep.t == 0.0
    assert rep.verdict == "healthy"
    assert rep.isolation is None


def test_pipeline_threshold_modes():
    rng = np.random.default_rng(1)
    batch = ResidualBatch(rng.standard_normal(300), rng.standard_normal((300, 5)))
    rep = run_fdi_pipeline(batch, alpha=0.05)
    assert rep.threshold == pytest.approx(11.070497693516351, rel=1e-12)
    rep = run_fdi_pipeline(batch, threshold_mode="dof-mean")
    assert rep.threshold == 5.0
    rep = run_fdi_pipeline(batch, threshold_mode="dof-mean", eta=7.5)
    assert rep.threshold == 7.5
    with pytest.raises(ValueError):
        run_fdi_pipeline(batch, threshold_mode="bogus")
    with pytest.raises(ValueError):
        run_fdi_pipeline(batch, isolation="bogus")


def shifted_batch(seed, delta, nb=4000, noise=0.1):
    """Residual window whose weights drift by ``delta``: e = X·δ + ν."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((nb, 5))
    e = X @ delta + noise * rng.standard_normal(nb)
    return ResidualBatch(e, X)


def test_weight_shift_is_detected_and_isolated():
    delta = np.zeros(5)
    delta[3] = 0.05
    batch = shifted_batch(42, delta)
    rep = run_fdi_pipeline(batch, alpha=0.01, isolation="sensitivity")
    assert rep.verdict == "faulty"
    assert rep.t > 10.0 * rep.threshold
    assert rep.isolation.best_subset == (3,)
    assert subset_label(rep.isolation.best_subset) == "w4"

    rep = run_fdi_pipeline(batch, alpha=0.01, isolation="minmax")
    assert rep.verdict == "faulty"
    assert rep.isolation.best_subset == (3,)


def test_minmax_discounts_subsets_outside_the_change():
    delta = np.zeros(5)
    delta[3] = 0.05
    batch = shifted_batch(7, delta)
    H = primary_residuals(batch)
    Xbar = normalized_residual(H)
    M = sensitivity_matrix(batch.regressors)
    S = covariance_matrix(H)
    on_target = minmax_test(Xbar, M, S, (3,))
    off_target = minmax_test(Xbar, M, S, (0,))
    assert on_target > chi2_threshold(0.01, 1)
    assert off_target < 0.1 * on_target


def test_healthy_windows_are_chi_square_distributed():
    """No change injected: the statistic's sample mean must sit near the
    number of monitored weights."""
    rng = np.random.default_rng(2024)
    ts = []
    for _ in range(120):
        X = rng.standard_normal((1500, 5))
        e = 0.1 * rng.standard_normal(1500)
        rep = run_fdi_pipeline(ResidualBatch(e, X))
        ts.append(rep.t)
    ts = np.asarray(ts)
    assert abs(ts.mean() - 5.0) < 0.8
    assert np.quantile(ts, 0.95) < 2.0 * chi2_threshold(0.05, 5)


def test_default_subsets_cover_all_weights():
    assert DEFAULT_SUBSETS[:5] == ((0,), (1,), (2,), (3,), (4,))
    assert (1, 2) in DEFAULT_SUBSETS
    assert subset_label((1, 2)) == "w2+w3"
