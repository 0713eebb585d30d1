"""Scalar ARMAX form of the steady-state filter on one grid subsystem.

Every grid point i obeys the same 2-state dynamics once the neighbour
coupling is moved into the input: with a₂ = 2K/Δx² and forward-Euler
sampling,

    Ad = [[1, Ts], [−a₂·Ts, 1]],   Bd = [0, Ts]ᵀ,   Cd = [1, 0],

and the subsystem input bundles boundary term, neighbour coupling and
nonlinearity, v = (K/Δx²)·(left + right) + f(φ, φ̇).  Running the
steady-state Kalman filter on this model and eliminating the unmeasured
velocity state collapses the filter into one scalar regression on past
predictions, the input, and past innovations:

    ẑ(k+1) = 2·ẑ(k) − (1 + a₂Ts²)·ẑ(k−1) + Ts²·v(k−1)
             + κᵖ₁·ê(k) + (Ts·κᵖ₂ − κᵖ₁)·ê(k−1),

where κᵖ = Ad·K is the predictor-form gain built from the converged
filter gain K = (κ₁, κ₂).  That exact recursion is what
:func:`armax_predict` evaluates (weights ``w_pred``).

The model also carries ``w``, the conventional five-parameter labelling
of the same subsystem,

    w = [2, −(1 + Ts²·a₂), Ts, κ₁, κ₁ − κ₂·Ts],

which pairs the input with Ts and the innovations with the filter-form
gain.  The FDI layer monitors changes of the five-dimensional weight
vector; ``w`` provides the naming (w1..w5) while predictions and
residuals always use the exact causal form.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotSteadyStateError
from .kalman import DiscreteModel, discretize
from .wave_model import StateSpace, WaveModel

__all__ = [
    "REGRESSOR_LAYOUT",
    "ArmaxModel",
    "nominal_weights",
    "predictor_weights",
    "subsystem_discrete_model",
    "subsystem_input",
    "steady_state_gain",
    "kf_to_armax",
    "build_regressor",
    "regressor_matrix",
    "armax_predict",
]

REGRESSOR_LAYOUT = ("zhat[k]", "zhat[k-1]", "v[k-1]", "innov[k]", "innov[k-1]")


@dataclass(frozen=True, eq=False)
class ArmaxModel:
    """Weights of the subsystem ARMAX form.

    ``w``       conventional labelling [2, −(1+Ts²·a₂), Ts, κ₁, κ₁−κ₂Ts]
    ``w_pred``  exact causal predictor [2, −(1+Ts²·a₂), Ts², κᵖ₁, Ts·κᵖ₂−κᵖ₁]

    Both pair with the regressor X(k) = [ẑ(k), ẑ(k−1), v(k−1), ê(k), ê(k−1)].
    """

    w: np.ndarray
    w_pred: np.ndarray
    ts: float
    a2: float
    gain: np.ndarray

    def __post_init__(self):
        for name in ("w", "w_pred"):
            vec = getattr(self, name)
            if vec.shape != (5,) or not np.all(np.isfinite(vec)):
                raise ValueError(f"{name} must be a finite 5-vector")


def nominal_weights(a2: float, ts: float, kappa) -> np.ndarray:
    """Conventional weight display [2, −(1+Ts²·a₂), Ts, κ₁, κ₁−κ₂·Ts]."""
    k1, k2 = float(kappa[0]), float(kappa[1])
    return np.array([2.0, -(1.0 + ts**2 * a2), ts, k1, k1 - k2 * ts])


def predictor_weights(a2: float, ts: float, kappa_pred) -> np.ndarray:
    """Exact causal one-step predictor weights, with κᵖ = Ad·K."""
    kp1, kp2 = float(kappa_pred[0]), float(kappa_pred[1])
    return np.array([2.0, -(1.0 + ts**2 * a2), ts**2, kp1, ts * kp2 - kp1])


def subsystem_discrete_model(model: WaveModel, ts: float, q=1e-6, r=1e-6) -> DiscreteModel:
    """Euler-discretized 2-state model of a single grid point, with the
    neighbour coupling folded into the input."""
    a2 = 2.0 * model.K / model.dx**2
    ss = StateSpace(A=np.array([[0.0, 1.0], [-a2, 0.0]]),
                    B=np.array([[0.0], [1.0]]),
                    C=np.array([[1.0, 0.0]]),
                    a=model.coupling_a, b=-a2, sensor_indices=(model.N,))
    return discretize(ss, ts, method="euler", q=q, r=r)


def subsystem_input(model: WaveModel, left_position: float, right_position: float,
                    position: float, velocity: float) -> float:
    """Subsystem input v = (K/Δx²)·(left + right) + f(φ, φ̇).

    For the last grid point the right neighbour is the boundary sample
    φ_{N+1}; for the first, the left neighbour is φ₀.
    """
    a = model.coupling_a
    return a * (left_position + right_position) + float(model.nonlinearity(position, velocity))


def steady_state_gain(states, tol: float = 1e-9, window: int = 10) -> np.ndarray:
    """Extract the converged gain from a filter run.

    Requires the max-abs gain change to stay below ``tol`` over the last
    ``window`` consecutive steps; otherwise raises NotSteadyStateError.
    """
    gains = [fs.gain for fs in states if fs.gain is not None]
    if len(gains) < window + 1:
        raise NotSteadyStateError(
            f"need at least {window + 1} gain samples, got {len(gains)}"
        )
    recent = gains[-(window + 1):]
    deltas = [np.max(np.abs(g1 - g0)) for g0, g1 in zip(recent[:-1], recent[1:])]
    if max(deltas) >= tol:
        raise NotSteadyStateError(
            f"gain still moving by {max(deltas):.3e} (tolerance {tol:.1e}) "
            f"over the last {window} steps"
        )
    return gains[-1]


def kf_to_armax(dm: DiscreteModel, steady_gain) -> ArmaxModel:
    """Collapse a converged subsystem filter into its scalar ARMAX form.

    ``dm`` must be the euler-discretized 2-state subsystem model;
    ``steady_gain`` the converged 2-entry filter gain (see
    :func:`steady_state_gain`).
    """
    Ad, Bd, Cd = dm.Ad, np.ravel(dm.Bd), np.ravel(dm.Cd)
    if Ad.shape != (2, 2) or Bd.shape != (2,) or Cd.shape != (2,):
        raise ValueError("kf_to_armax expects a 2-state single-output model")
    ts = Ad[0, 1]
    if not (math.isfinite(ts) and ts > 0):
        raise ValueError(f"Ad[0,1] must be the sampling period Ts > 0, got {ts!r}")
    ok = (abs(Ad[0, 0] - 1.0) < 1e-12 and abs(Ad[1, 1] - 1.0) < 1e-12
          and abs(Bd[0]) < 1e-12 and abs(Bd[1] - ts) < 1e-12 * max(1.0, ts)
          and abs(Cd[0] - 1.0) < 1e-12 and abs(Cd[1]) < 1e-12)
    if not ok:
        raise ValueError("not an euler-discretized subsystem model "
                         "(expected Ad=[[1,Ts],[-a2*Ts,1]], Bd=[0,Ts], Cd=[1,0])")
    a2 = -Ad[1, 0] / ts
    kappa = np.ravel(np.asarray(steady_gain, dtype=float))
    if kappa.shape != (2,) or not np.all(np.isfinite(kappa)):
        raise ValueError("steady_gain must be a finite 2-vector")
    kappa_pred = Ad @ kappa
    return ArmaxModel(w=nominal_weights(a2, ts, kappa),
                      w_pred=predictor_weights(a2, ts, kappa_pred),
                      ts=ts, a2=a2, gain=kappa)


def build_regressor(zhat_hist, v_hist, innov_hist, k: int) -> np.ndarray:
    """X(k) = [ẑ(k), ẑ(k−1), v(k−1), ê(k), ê(k−1)] from history arrays."""
    if k < 2:
        raise ValueError(f"regressor needs two steps of history, got k={k}")
    for name, hist in (("zhat", zhat_hist), ("v", v_hist), ("innov", innov_hist)):
        if len(hist) <= k:
            raise ValueError(f"{name} history too short for k={k}")
    return np.array([zhat_hist[k], zhat_hist[k - 1], v_hist[k - 1],
                     innov_hist[k], innov_hist[k - 1]], dtype=float)


def regressor_matrix(zhat, v, innov, kmin: int, kmax: int) -> np.ndarray:
    """Stack regressor rows X(k) for k in [kmin, kmax)."""
    if kmin < 2:
        raise ValueError(f"kmin must be >= 2, got {kmin}")
    zhat = np.asarray(zhat, dtype=float)
    v = np.asarray(v, dtype=float)
    innov = np.asarray(innov, dtype=float)
    if kmax > len(zhat) or kmax > len(v) or kmax > len(innov):
        raise ValueError("history arrays too short for the requested range")
    ks = np.arange(kmin, kmax)
    return np.column_stack([zhat[ks], zhat[ks - 1], v[ks - 1], innov[ks], innov[ks - 1]])


def armax_predict(model: ArmaxModel, X) -> float:
    """One-step output prediction ẑ(k+1) = w_pred · X(k)."""
    X = np.asarray(X, dtype=float)
    if X.shape != (5,):
        raise ValueError(f"regressor must be a 5-vector, got shape {X.shape}")
    return float(model.w_pred @ X)
