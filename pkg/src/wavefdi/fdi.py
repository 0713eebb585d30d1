"""Local statistical approach to fault detection and isolation.

Given a window of prediction residuals e_k and regressors X_k from the
monitored ARMAX model, the pipeline runs:

  1. primary residuals        H_k = e_k · X_k
  2. normalized residual      X = (1/√Nb) Σ H_k
  3. sensitivity matrix       M = (1/Nb) Σ X_k X_kᵀ
     residual covariance      S = lag-0 second moment + symmetrized
                              cross terms up to 3 lags
  4. global χ² statistic      t = Xᵀ S⁻¹ M (Mᵀ S⁻¹ M)⁻¹ Mᵀ S⁻¹ X
  5. threshold                λ: χ²_p tail quantile at the desired
                              false-alarm rate (or the dof-mean η = p)
  6. verdict + isolation      sensitivity test on weight subsets, or the
                              min-max test that projects out nuisance
                              weights via the Fisher information

Under a healthy, matched model the residuals are martingale differences,
so X is asymptotically N(0, S) and t is χ² with p degrees of freedom —
that calibration is what makes the threshold meaningful.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from .errors import DegenerateStatisticsError, UnidentifiableSubsetError

__all__ = [
    "ResidualBatch",
    "IsolationResult",
    "FdiReport",
    "primary_residuals",
    "normalized_residual",
    "sensitivity_matrix",
    "covariance_matrix",
    "global_chi2_test",
    "chi2_threshold",
    "sensitivity_test",
    "minmax_test",
    "run_fdi_pipeline",
    "DEFAULT_SUBSETS",
    "subset_label",
]

# Singleton weight subsets plus the {w2, w3} pair (the two weights that a
# drift of the wave coefficient K moves first).  Indices are 0-based.
DEFAULT_SUBSETS = ((0,), (1,), (2,), (3,), (4,), (1, 2))


@dataclass(frozen=True, eq=False)
class ResidualBatch:
    """One test window: residuals e (length Nb) and regressors X (Nb×p)."""

    residuals: np.ndarray
    regressors: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.residuals, dtype=float)
        X = np.asarray(self.regressors, dtype=float)
        if e.ndim != 1 or X.ndim != 2 or X.shape[0] != e.shape[0]:
            raise ValueError("residuals must be (Nb,) and regressors (Nb, p)")
        if X.shape[0] < X.shape[1]:
            raise ValueError(f"batch needs Nb >= p, got Nb={X.shape[0]}, p={X.shape[1]}")
        if not (np.all(np.isfinite(e)) and np.all(np.isfinite(X))):
            raise ValueError("batch entries must be finite")
        object.__setattr__(self, "residuals", e)
        object.__setattr__(self, "regressors", X)

    @property
    def nb(self) -> int:
        return self.residuals.shape[0]

    @property
    def p(self) -> int:
        return self.regressors.shape[1]


@dataclass(frozen=True, eq=False)
class IsolationResult:
    mode: str
    stats: tuple          # ((subset, statistic), ...) in evaluation order
    best_subset: tuple
    best_stat: float


@dataclass(frozen=True, eq=False)
class FdiReport:
    X: np.ndarray
    M: np.ndarray
    S: np.ndarray
    t: float
    threshold: float
    alpha: float
    verdict: str                 # "healthy" | "faulty"
    isolation: IsolationResult = None
    window: tuple = None         # (start, end) sample indices, set by the harness


def primary_residuals(batch: ResidualBatch) -> np.ndarray:
    """H_k = e_k · X_k (the output gradient of the linear-in-weights
    model is the regressor itself)."""
    return batch.residuals[:, None] * batch.regressors


def normalized_residual(H) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] < 1:
        raise ValueError("H must be a non-empty Nb×p matrix")
    return H.sum(axis=0) / math.sqrt(H.shape[0])


def sensitivity_matrix(regressors) -> np.ndarray:
    """M = (1/Nb) Σ X_k X_kᵀ, the mean regressor outer product."""
    X = np.asarray(regressors, dtype=float)
    if X.ndim != 2 or X.shape[0] < X.shape[1]:
        raise ValueError("regressors must be (Nb, p) with Nb >= p")
    M = X.T @ X / X.shape[0]
    return 0.5 * (M + M.T)


def covariance_matrix(H, i_lags: int = 3) -> np.ndarray:
    """Long-run covariance of the primary residuals.

    Lag 0 contributes the sample second moment Σ H_k H_kᵀ / Nb; each lag
    m = 1..i_lags adds Σ (H_k H_{k+m}ᵀ + H_{k+m} H_kᵀ) / (Nb − m).  The
    lag terms capture the short innovation memory the regressor carries
    (ê appears at lags 0 and 1), which a lag-0 estimate would miss.
    """
    H = np.asarray(H, dtype=float)
    nb = H.shape[0]
    if i_lags < 0:
        raise ValueError(f"i_lags must be >= 0, got {i_lags}")
    if nb <= i_lags:
        raise ValueError(f"need more than {i_lags} rows, got {nb}")
    S = H.T @ H / nb
    for lag in range(1, i_lags + 1):
        cross = H[:-lag].T @ H[lag:]
        S = S + (cross + cross.T) / (nb - lag)
    return 0.5 * (S + S.T)


def _regularized(mat: np.ndarray, name: str) -> np.ndarray:
    """Clamp the spectrum to keep the matrix safely positive definite.

    The truncated-lag covariance estimator is not guaranteed PSD, so
    eigenvalues below 1e-12 of the mean positive eigenvalue are floored
    at 1e-10 of it.  Matrices with no positive spectrum at all are
    refused: they carry no usable scale.
    """
    eigvals, eigvecs = np.linalg.eigh(mat)
    positive = eigvals[eigvals > 0]
    if positive.size == 0 or not np.all(np.isfinite(eigvals)):
        raise DegenerateStatisticsError(f"{name} has no positive spectrum")
    scale = float(np.mean(positive))
    if eigvals[0] >= 1e-12 * scale:
        return mat
    clamped = np.maximum(eigvals, 1e-10 * scale)
    return (eigvecs * clamped) @ eigvecs.T


def global_chi2_test(X, M, S) -> float:
    """t = Xᵀ S⁻¹ M (Mᵀ S⁻¹ M)⁻¹ Mᵀ S⁻¹ X."""
    X = np.asarray(X, dtype=float)
    if not np.any(X):
        return 0.0          # no evidence of change, whatever the covariance
    M = np.asarray(M, dtype=float)
    S = _regularized(np.asarray(S, dtype=float), "S")
    Si_X = np.linalg.solve(S, X)
    Si_M = np.linalg.solve(S, M)
    F = _regularized(M.T @ Si_M, "M'S^-1M")
    b = M.T @ Si_X
    return max(float(b @ np.linalg.solve(F, b)), 0.0)


def chi2_threshold(alpha: float, dof: int) -> float:
    """λ with upper-tail probability alpha under χ²_dof.

    Solves gammaincc(dof/2, λ/2) = alpha by bisection on the survival
    function; the bracket is doubled until it straddles the root.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    if not (isinstance(dof, (int, np.integer)) and dof >= 1):
        raise ValueError(f"dof must be a positive integer, got {dof!r}")

    def tail(lam):
        return gammaincc(dof / 2.0, lam / 2.0)

    lo, hi = 0.0, float(dof) + 10.0
    while tail(hi) > alpha:
        hi *= 2.0
        if hi > 1e12:  # pragma: no cover - alpha in (0,1) always brackets first
            raise ArithmeticError("failed to bracket the chi-square quantile")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if tail(mid) > alpha:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    if abs(tail(lam) - alpha) > 1e-10:  # pragma: no cover - bisection is exact here
        raise ArithmeticError("chi-square quantile did not reach the CDF tolerance")
    return lam


def _selection_indices(A, p: int) -> tuple:
    """Accept a p×q 0/1 selection matrix or a sequence of 0-based indices."""
    arr = np.asarray(A)
    if arr.ndim == 2:
        if arr.shape[0] != p:
            raise ValueError(f"selection matrix must have {p} rows, got {arr.shape}")
        idx = []
        for col in range(arr.shape[1]):
            nz = np.flatnonzero(arr[:, col])
            if nz.size != 1 or arr[nz[0], col] != 1:
                raise ValueError("selection matrix columns must be distinct unit vectors")
            idx.append(int(nz[0]))
    else:
        idx = [int(i) for i in np.atleast_1d(arr)]
    if len(idx) == 0:
        raise ValueError("parameter selection must be nonempty")
    if len(set(idx)) != len(idx) or not all(0 <= i < p for i in idx):
        raise ValueError(f"selection indices must be distinct and in 0..{p - 1}, got {idx}")
    return tuple(idx)


def sensitivity_test(X, M, S, A) -> float:
    """Restricted χ² statistic for the weight subset selected by A,
    assuming the remaining weights stay at their nominal values."""
    M = np.asarray(M, dtype=float)
    idx = _selection_indices(A, M.shape[1])
    return global_chi2_test(X, M[:, idx], S)


def minmax_test(X, M, S, A) -> float:
    """Isolation statistic that is robust to changes of the unselected
    weights: project the Fisher information of the nuisance block out of
    the normalized residual before forming the quadratic form.
    """
    X = np.asarray(X, dtype=float)
    M = np.asarray(M, dtype=float)
    p = M.shape[1]
    phi = _selection_indices(A, p)
    if not np.any(X):
        return 0.0
    S = _regularized(np.asarray(S, dtype=float), "S")
    psi = tuple(i for i in range(p) if i not in phi)

    Si_M = np.linalg.solve(S, M)
    F = M.T @ Si_M                            # Fisher information, unclamped
    F = 0.5 * (F + F.T)
    score = M.T @ np.linalg.solve(S, X)       # M'S^-1X
    if not psi:
        F_c = _regularized(F, "M'S^-1M")
        return max(float(score @ np.linalg.solve(F_c, score)), 0.0)

    phi_ix = np.asarray(phi)
    psi_ix = np.asarray(psi)
    F_pp = F[np.ix_(phi_ix, phi_ix)]
    F_pn = F[np.ix_(phi_ix, psi_ix)]
    F_nn = F[np.ix_(psi_ix, psi_ix)]
    # rank-aware inverse: a degenerate nuisance block must be projected
    # out, not inverted into garbage
    F_nn_pinv = np.linalg.pinv(F_nn, rcond=1e-10, hermitian=True)
    X_star = score[phi_ix] - F_pn @ (F_nn_pinv @ score[psi_ix])
    I_star = F_pp - F_pn @ F_nn_pinv @ F_pn.T
    I_star = 0.5 * (I_star + I_star.T)
    # measured against the full information scale: a subset whose
    # remaining information is at numerical-noise level is not isolable
    fscale = float(np.max(np.linalg.eigvalsh(F)))
    if not (math.isfinite(fscale) and fscale > 0) \
            or np.min(np.linalg.eigvalsh(I_star)) < 1e-12 * fscale:
        raise UnidentifiableSubsetError(
            f"subset {phi} carries no Fisher information beyond the nuisance block"
        )
    return max(float(X_star @ np.linalg.solve(I_star, X_star)), 0.0)


def subset_label(subset) -> str:
    """Human-readable name for a 0-based weight subset: (1, 2) → 'w2+w3'."""
    return "+".join(f"w{i + 1}" for i in subset)


def run_fdi_pipeline(batch: ResidualBatch, alpha: float = 0.01,
                     isolation: str = "none", subsets=None,
                     threshold_mode: str = "quantile", eta: float = None) -> FdiReport:
    """Stages 1-6 over one residual window.

    ``threshold_mode`` "quantile" uses the χ²_p tail quantile at
    ``alpha``; "dof-mean" uses the fixed level η (defaulting to p, the
    statistic's healthy mean).  Isolation runs only on a faulty verdict.
    """
    if isolation not in ("none", "sensitivity", "minmax"):
        raise ValueError(f"unknown isolation mode {isolation!r}")
    H = primary_residuals(batch)
    X = normalized_residual(H)
    M = sensitivity_matrix(batch.regressors)
    S = covariance_matrix(H)
    t = global_chi2_test(X, M, S)
    if threshold_mode == "quantile":
        threshold = chi2_threshold(alpha, batch.p)
    elif threshold_mode == "dof-mean":
        threshold = float(batch.p if eta is None else eta)
    else:
        raise ValueError(f"unknown threshold mode {threshold_mode!r}")
    verdict = "faulty" if t > threshold else "healthy"

    iso = None
    if verdict == "faulty" and isolation != "none":
        if subsets is None:
            subsets = DEFAULT_SUBSETS
        test = sensitivity_test if isolation == "sensitivity" else minmax_test
        stats = []
        for subset in subsets:
            idx = _selection_indices(subset, batch.p)
            stats.append((idx, test(X, M, S, idx)))
        best_subset, best_stat = max(stats, key=lambda item: item[1])
        iso = IsolationResult(mode=isolation, stats=tuple(stats),
                              best_subset=best_subset, best_stat=best_stat)
    return FdiReport(X=X, M=M, S=S, t=t, threshold=threshold, alpha=alpha,
                     verdict=verdict, isolation=iso)
