"""Standard discrete-time Kalman filter over the canonical wave model.

Running the *linear* KF recursion on (Ad, Bd, Cd) with the virtual
inputs treated as known signals reconstructs all 2N states from the m
sensed positions.  No Jacobian of the nonlinearity is ever formed: the
filter only sees f through the input vector v̂, evaluated at its own
current state estimate (certainty equivalence).
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NotSteadyStateError, ObservabilityError
from .wave_model import StateSpace, WaveModel, split_state, virtual_inputs

__all__ = [
    "DiscreteModel",
    "FilterState",
    "discretize",
    "kf_measurement_update",
    "kf_time_update",
    "run_filter",
    "run_filter_with_inputs",
    "observability_matrix",
    "check_observability",
    "riccati_steady_gain",
    "estimates_to_csv",
]


@dataclass
class DiscreteModel:
    """Discrete-time model (Ad, Bd, Cd) plus noise covariances Q, R."""

    Ad: np.ndarray
    Bd: np.ndarray
    Cd: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        n = self.Ad.shape[0]
        m = self.Cd.shape[0]
        if self.Ad.shape != (n, n) or self.Bd.shape[0] != n or self.Cd.shape[1] != n:
            raise ValueError("inconsistent Ad/Bd/Cd dimensions")
        if self.Q.shape != (n, n) or self.R.shape != (m, m):
            raise ValueError("Q must be n×n and R m×m")
        for name, mat in (("Q", self.Q), ("R", self.R)):
            if np.max(np.abs(mat - mat.T)) > 1e-10 * max(1.0, np.max(np.abs(mat))):
                raise ValueError(f"{name} must be symmetric")
        if np.min(np.linalg.eigvalsh(self.Q)) < -1e-10 * max(1.0, np.trace(self.Q)):
            raise ValueError("Q must be positive semidefinite")
        try:
            np.linalg.cholesky(self.R)
        except np.linalg.LinAlgError:
            raise ValueError("R must be positive definite") from None

    @property
    def n(self) -> int:
        return self.Ad.shape[0]

    @property
    def m(self) -> int:
        return self.Cd.shape[0]


@dataclass
class FilterState:
    """One KF step: posterior (xhat, P), prior (xhat_prior, P_prior),
    gain, and innovation z − Cd·xhat_prior.

    When used as the ``init`` argument of a filter run, ``xhat`` and ``P``
    are read as the *prediction* for step 0 (the prior before the first
    measurement); all other fields are ignored.
    """

    xhat: np.ndarray
    P: np.ndarray
    xhat_prior: np.ndarray = None
    P_prior: np.ndarray = None
    gain: np.ndarray = None
    innovation: np.ndarray = None


def _as_cov(value, size: int, name: str) -> np.ndarray:
    """Scalar → scaled identity; array → validated square matrix."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(size)
    if arr.shape != (size, size):
        raise ValueError(f"{name} must be a scalar or {size}×{size}, got {arr.shape}")
    return arr.copy()


def discretize(ss: StateSpace, ts: float, method: str = "euler",
               q=1e-6, r=1e-6) -> DiscreteModel:
    """Discrete-time counterpart of the continuous (A, B, C).

    ``euler``: Ad = I + A·Ts, Bd = B·Ts — the convention used throughout
    the monitored-subsystem algebra.  ``exact``: matrix exponential via
    the augmented block [[A, B], [0, 0]], valid for singular A as well.
    q and r may be scalars (diagonal loading) or full covariance matrices.
    """
    if not (math.isfinite(ts) and ts > 0):
        raise ValueError(f"ts must be > 0, got {ts!r}")
    n = ss.A.shape[0]
    nu = ss.B.shape[1]
    if method == "euler":
        Ad = np.eye(n) + ss.A * ts
        Bd = ss.B * ts
    elif method == "exact":
        block = np.zeros((n + nu, n + nu))
        block[:n, :n] = ss.A * ts
        block[:n, n:] = ss.B * ts
        eblock = scipy.linalg.expm(block)
        Ad = eblock[:n, :n]
        Bd = eblock[:n, n:]
    else:
        raise ValueError(f"unknown discretization method {method!r}")
    return DiscreteModel(Ad=Ad, Bd=Bd, Cd=ss.C.copy(),
                         Q=_as_cov(q, n, "q"), R=_as_cov(r, ss.C.shape[0], "r"))


def _solve_innovation_cov(S: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve S·x = rhs via Cholesky; on failure add a small ridge and
    retry once (the innovation covariance is PD whenever R is)."""
    try:
        factor = scipy.linalg.cho_factor(S, lower=True)
    except np.linalg.LinAlgError:
        ridge = 1e-10 * np.trace(S) / S.shape[0]
        factor = scipy.linalg.cho_factor(S + ridge * np.eye(S.shape[0]), lower=True)
    return scipy.linalg.cho_solve(factor, rhs)


def kf_measurement_update(fs: FilterState, dm: DiscreteModel, z) -> FilterState:
    """Measurement update:

        K = P⁻Cᵀ(CP⁻Cᵀ + R)⁻¹
        x̂ = x̂⁻ + K(z − Cx̂⁻)
        P  = P⁻ − K·C·P⁻             (then symmetrized)
    """
    if fs.xhat_prior is None or fs.P_prior is None:
        raise ValueError("measurement update requires prior quantities")
    z = np.asarray(z, dtype=float)
    C = dm.Cd
    PCt = fs.P_prior @ C.T
    S = C @ PCt + dm.R
    # K = PCt S⁻¹  ⇔  Kᵀ = S⁻¹ PCtᵀ (S symmetric)
    gain = _solve_innovation_cov(S, PCt.T).T
    innovation = z - C @ fs.xhat_prior
    xhat = fs.xhat_prior + gain @ innovation
    P = fs.P_prior - gain @ PCt.T
    P = 0.5 * (P + P.T)
    return FilterState(xhat=xhat, P=P, xhat_prior=fs.xhat_prior,
                       P_prior=fs.P_prior, gain=gain, innovation=innovation)


def kf_time_update(fs: FilterState, dm: DiscreteModel, u) -> FilterState:
    """Time update: x̂⁻ = Ad·x̂ + Bd·u and P⁻ = Ad·P·Adᵀ + Q."""
    u = np.asarray(u, dtype=float)
    xhat_prior = dm.Ad @ fs.xhat + dm.Bd @ u
    P_prior = dm.Ad @ fs.P @ dm.Ad.T + dm.Q
    return FilterState(xhat=fs.xhat, P=fs.P, xhat_prior=xhat_prior,
                       P_prior=P_prior, gain=fs.gain, innovation=fs.innovation)


def observability_matrix(dm: DiscreteModel) -> np.ndarray:
    """Stack [Cd; Cd·Ad; …; Cd·Ad^(n−1)]."""
    rows = [dm.Cd]
    T = dm.Cd
    for _ in range(dm.n - 1):
        T = T @ dm.Ad
        rows.append(T)
    return np.vstack(rows)


def check_observability(dm: DiscreteModel):
    rank = np.linalg.matrix_rank(observability_matrix(dm))
    if rank != dm.n:
        raise ObservabilityError(
            f"sensor set leaves the model unobservable: rank {rank} < {dm.n}"
        )


def _run(dm: DiscreteModel, measurements: np.ndarray, init: FilterState, input_fn):
    states = []
    prior = FilterState(xhat=init.xhat, P=init.P,
                        xhat_prior=init.xhat, P_prior=init.P)
    for k in range(measurements.shape[0]):
        fs = kf_measurement_update(prior, dm, measurements[k])
        states.append(fs)
        u = input_fn(k, fs.xhat)
        prior = kf_time_update(fs, dm, u)
    return states


def run_filter(dm: DiscreteModel, model: WaveModel, measurements, init: FilterState):
    """Filter a measurement stream over the full wave model.

    Step k innovates the current prediction against z(k), updates, then
    evaluates v̂(k) from the fresh *estimate* (certainty equivalence) and
    propagates to k+1.  ``init`` supplies the prediction for step 0.
    Refuses sensor sets that fail the observability rank test.
    """
    measurements = np.asarray(measurements, dtype=float)
    if measurements.ndim != 2 or measurements.shape[1] != dm.m:
        raise ValueError(f"measurements must be steps×{dm.m}")
    if dm.n != 2 * model.N:
        raise ValueError("discrete model and wave model disagree on the state size")
    check_observability(dm)

    def input_fn(_k, xhat):
        pos, vel = split_state(xhat)
        return virtual_inputs(model, pos, vel)

    return _run(dm, measurements, init, input_fn)


def run_filter_with_inputs(dm: DiscreteModel, measurements, inputs, init: FilterState,
                           check: bool = True):
    """Filter with a known input sequence (steps×n_inputs) instead of
    estimate-fed virtual inputs.  ``inputs[k]`` acts over [k, k+1), i.e.
    it propagates the posterior of step k to the prediction for k+1."""
    measurements = np.asarray(measurements, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    if measurements.shape[0] != inputs.shape[0]:
        raise ValueError("measurements and inputs disagree on the number of steps")
    if check:
        check_observability(dm)
    return _run(dm, measurements, init, lambda k, _x: inputs[k])


def riccati_steady_gain(dm: DiscreteModel, tol: float = 1e-9,
                        stable_steps: int = 10, max_iter: int = 200_000):
    """Iterate the covariance recursion until the gain settles.

    Returns (gain, P_prior) once the gain has moved less than ``tol``
    (max-abs) for ``stable_steps`` consecutive iterations.
    """
    P_prior = np.eye(dm.n)
    prev_gain = None
    quiet = 0
    for _ in range(max_iter):
        PCt = P_prior @ dm.Cd.T
        S = dm.Cd @ PCt + dm.R
        gain = _solve_innovation_cov(S, PCt.T).T
        P = P_prior - gain @ PCt.T
        P = 0.5 * (P + P.T)
        P_prior = dm.Ad @ P @ dm.Ad.T + dm.Q
        if prev_gain is not None and np.max(np.abs(gain - prev_gain)) < tol:
            quiet += 1
            if quiet >= stable_steps:
                return gain, P_prior
        else:
            quiet = 0
        prev_gain = gain
    raise NotSteadyStateError(
        f"filter gain did not converge within {max_iter} Riccati iterations"
    )


def estimates_to_csv(states, ts: float, path):
    """Write `t, yhat_1..yhat_n, innov_1..innov_m, trace_P` per step."""
    if not states:
        raise ValueError("empty filter run")
    n = states[0].xhat.shape[0]
    m = states[0].innovation.shape[0]
    header = ",".join(["t"]
                      + [f"yhat_{i}" for i in range(1, n + 1)]
                      + [f"innov_{j}" for j in range(1, m + 1)]
                      + ["trace_P"])
    rows = np.zeros((len(states), 1 + n + m + 1))
    for k, fs in enumerate(states):
        rows[k, 0] = k * ts
        rows[k, 1:1 + n] = fs.xhat
        rows[k, 1 + n:1 + n + m] = fs.innovation
        rows[k, -1] = np.trace(fs.P)
    np.savetxt(path, rows, delimiter=",", header=header, comments="", fmt="%.17g")
