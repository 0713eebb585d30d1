"""Filter recursion checked against hand values, a brute-force oracle,
and the analytic limits where the gain must vanish."""

import numpy as np
import pytest

from wavefdi.errors import NotSteadyStateError, ObservabilityError
from wavefdi.kalman import (
    DiscreteModel,
    FilterState,
    check_observability,
    discretize,
    estimates_to_csv,
    kf_measurement_update,
    kf_time_update,
    observability_matrix,
    riccati_steady_gain,
    run_filter,
    run_filter_with_inputs,
)
from wavefdi.wave_model import StateSpace, WaveModel, build_state_space, zero_nonlinearity


def scalar_model(q=0.0, r=1.0):
    return DiscreteModel(Ad=np.eye(1), Bd=np.zeros((1, 1)), Cd=np.eye(1),
                         Q=q * np.eye(1), R=r * np.eye(1))


def prior_state(x, P):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    return FilterState(xhat=x, P=P, xhat_prior=x, P_prior=P)


def test_measurement_update_hand_example():
    # P⁻=1, C=1, R=1, z=2, x̂⁻=0  →  K=0.5, x̂=1, P=0.5
    fs = kf_measurement_update(prior_state(0.0, 1.0), scalar_model(), np.array([2.0]))
    assert fs.gain[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert fs.xhat[0] == pytest.approx(1.0, abs=1e-15)
    assert fs.P[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert fs.innovation[0] == pytest.approx(2.0, abs=1e-15)


def test_filter_matches_bruteforce_oracle():
    """Same recursion written with explicit inverses, no factorizations."""
    rng = np.random.default_rng(7)
    n, m, steps = 4, 2, 60
    Ad = np.eye(n) + 0.01 * rng.standard_normal((n, n))
    Bd = 0.01 * rng.standard_normal((n, 1))
    Cd = rng.standard_normal((m, n))
    Q = 1e-4 * np.eye(n)
    R = np.diag([0.5, 2.0])
    dm = DiscreteModel(Ad=Ad, Bd=Bd, Cd=Cd, Q=Q, R=R)
    z = rng.standard_normal((steps, m))
    u = rng.standard_normal((steps, 1))

    states = run_filter_with_inputs(dm, z, u, prior_state(np.zeros(n), np.eye(n)),
                                    check=False)

    x, P = np.zeros(n), np.eye(n)
    for k in range(steps):
        K = P @ Cd.T @ np.linalg.inv(Cd @ P @ Cd.T + R)
        x = x + K @ (z[k] - Cd @ x)
        P = P - K @ Cd @ P
        P = 0.5 * (P + P.T)
        np.testing.assert_allclose(states[k].xhat, x, rtol=0.0, atol=1e-12)
        np.testing.assert_allclose(states[k].P, P, rtol=0.0, atol=1e-12)
        x = Ad @ x + Bd @ u[k]
        P = Ad @ P @ Ad.T + Q


def test_overwhelming_measurement_noise_keeps_prior():
    fs = kf_measurement_update(prior_state(3.0, 1.0), scalar_model(r=1e12),
                               np.array([100.0]))
    assert abs(fs.xhat[0] - 3.0) < 1e-9
    assert abs(fs.gain[0, 0]) < 1e-10


def test_certain_prior_ignores_measurement():
    fs = kf_measurement_update(prior_state(3.0, 0.0), scalar_model(), np.array([100.0]))
    assert fs.xhat[0] == pytest.approx(3.0, abs=1e-12)
    assert fs.gain[0, 0] == pytest.approx(0.0, abs=1e-12)


def test_time_update_adds_process_noise():
    dm = DiscreteModel(Ad=np.eye(2), Bd=np.zeros((2, 1)), Cd=np.array([[1.0, 0.0]]),
                       Q=0.3 * np.eye(2), R=np.eye(1))
    fs = kf_time_update(prior_state(np.array([1.0, 2.0]), np.diag([4.0, 9.0])),
                        dm, np.zeros(1))
    np.testing.assert_allclose(fs.P_prior, np.diag([4.3, 9.3]), atol=1e-15)
    np.testing.assert_allclose(fs.xhat_prior, [1.0, 2.0], atol=1e-15)


def subsystem_ss(a2):
    return StateSpace(A=np.array([[0.0, 1.0], [-a2, 0.0]]),
                      B=np.array([[0.0], [1.0]]),
                      C=np.array([[1.0, 0.0]]), a=a2 / 2, b=-a2, sensor_indices=(1,))


def test_euler_discretization_matches_hand_matrices():
    dm = discretize(subsystem_ss(0.081), 0.01, method="euler")
    np.testing.assert_allclose(dm.Ad, [[1.0, 0.01], [-0.00081, 1.0]], atol=1e-15)
    np.testing.assert_allclose(dm.Bd, [[0.0], [0.01]], atol=1e-15)


def test_euler_error_shrinks_quadratically():
    ss = subsystem_ss(2.0)
    errs = []
    for ts in (0.02, 0.01):
        e = discretize(ss, ts, method="euler")
        x = discretize(ss, ts, method="exact")
        errs.append(np.max(np.abs(e.Ad - x.Ad)))
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_exact_discretization_of_double_integrator():
    ss = StateSpace(A=np.array([[0.0, 1.0], [0.0, 0.0]]),
                    B=np.array([[0.0], [1.0]]),
                    C=np.array([[1.0, 0.0]]), a=0.0, b=0.0, sensor_indices=(1,))
    dm = discretize(ss, 0.5, method="exact")
    np.testing.assert_allclose(dm.Ad, [[1.0, 0.5], [0.0, 1.0]], atol=1e-14)
    np.testing.assert_allclose(dm.Bd, [[0.125], [0.5]], atol=1e-14)


def test_discretize_validation():
    with pytest.raises(ValueError):
        discretize(subsystem_ss(1.0), 0.0)
    with pytest.raises(ValueError):
        discretize(subsystem_ss(1.0), 0.01, method="tustin")
    with pytest.raises(ValueError):
        discretize(subsystem_ss(1.0), 0.01, q=np.eye(3))


def test_model_noise_validation():
    with pytest.raises(ValueError):
        DiscreteModel(Ad=np.eye(2), Bd=np.zeros((2, 1)), Cd=np.array([[1.0, 0.0]]),
                      Q=np.array([[0.0, 1.0], [0.0, 0.0]]), R=np.eye(1))
    with pytest.raises(ValueError):
        DiscreteModel(Ad=np.eye(2), Bd=np.zeros((2, 1)), Cd=np.array([[1.0, 0.0]]),
                      Q=np.eye(2), R=-np.eye(1))


def test_unobservable_pair_is_refused():
    dm = DiscreteModel(Ad=np.eye(2), Bd=np.zeros((2, 1)), Cd=np.array([[1.0, 0.0]]),
                       Q=np.eye(2), R=np.eye(1))
    assert np.linalg.matrix_rank(observability_matrix(dm)) == 1
    with pytest.raises(ObservabilityError):
        check_observability(dm)


def test_alternate_sensors_make_small_grid_observable():
    model = WaveModel(K=0.5, nonlinearity=zero_nonlinearity(), N=5, dx=1.0)
    dm = discretize(build_state_space(model, (1, 3, 5)), 0.01)
    assert np.linalg.matrix_rank(observability_matrix(dm)) == 10
    check_observability(dm)   # must not raise


def test_first_innovation_uses_initial_prediction():
    model = WaveModel(K=0.5, nonlinearity=zero_nonlinearity(), N=3, dx=1.0)
    dm = discretize(build_state_space(model, (1, 2, 3)), 0.01, q=1e-6, r=1e-6)
    z = np.arange(1.0, 7.0).reshape(2, 3)
    x0 = np.array([0.5, 0.0, -0.25, 0.0, 0.1, 0.0])
    states = run_filter(dm, model, z, FilterState(xhat=x0, P=np.eye(6)))
    np.testing.assert_allclose(states[0].innovation, z[0] - dm.Cd @ x0, atol=1e-14)
    np.testing.assert_array_equal(states[0].xhat_prior, x0)


def test_covariance_stays_symmetric_and_psd():
    rng = np.random.default_rng(3)
    model = WaveModel(K=0.5, nonlinearity=zero_nonlinearity(), N=4, dx=1.0)
    dm = discretize(build_state_space(model, (1, 3)), 0.01, q=1e-6, r=1e-4)
    z = 1e-2 * rng.standard_normal((80, 2))
    states = run_filter(dm, model, z, FilterState(xhat=np.zeros(8), P=np.eye(8)))
    for fs in states:
        np.testing.assert_allclose(fs.P, fs.P.T, atol=1e-12)
        assert np.min(np.linalg.eigvalsh(fs.P)) >= -1e-10


def test_riccati_gain_agrees_with_long_run():
    ss = subsystem_ss(0.081)
    dm = discretize(ss, 0.01, q=1e-6, r=1e-6)
    gain, P_prior = riccati_steady_gain(dm, tol=1e-13)
    rng = np.random.default_rng(1)
    z = rng.standard_normal((2500, 1))
    u = np.zeros((2500, 1))
    states = run_filter_with_inputs(dm, z, u, prior_state(np.zeros(2), np.eye(2)),
                                    check=False)
    np.testing.assert_allclose(states[-1].gain, gain, rtol=0.0, atol=1e-8)
    assert np.min(np.linalg.eigvalsh(P_prior)) > 0


def test_riccati_iteration_budget_enforced():
    dm = discretize(subsystem_ss(0.081), 0.01, q=1e-6, r=1e-6)
    with pytest.raises(NotSteadyStateError):
        riccati_steady_gain(dm, max_iter=5)


def test_estimates_csv_shape(tmp_path):
    model = WaveModel(K=0.5, nonlinearity=zero_nonlinearity(), N=3, dx=1.0)
    dm = discretize(build_state_space(model, (1, 3)), 0.01, q=1e-6, r=1e-4)
    z = np.zeros((10, 2))
    states = run_filter(dm, model, z, FilterState(xhat=np.zeros(6), P=np.eye(6)))
    out = tmp_path / "estimates.csv"
    estimates_to_csv(states, 0.01, out)
    lines = out.read_text().strip().splitlines()
    header = lines[0].split(",")
    assert header[0] == "t" and header[-1] == "trace_P"
    assert len(header) == 1 + 6 + 2 + 1
    assert len(lines) == 11
    assert all(len(line.split(",")) == len(header) for line in lines[1:])


def test_measurement_width_checked():
    model = WaveModel(K=0.5, nonlinearity=zero_nonlinearity(), N=3, dx=1.0)
    dm = discretize(build_state_space(model, (1, 3)), 0.01)
    with pytest.raises(ValueError):
        run_filter(dm, model, np.zeros((5, 3)), FilterState(xhat=np.zeros(6), P=np.eye(6)))
