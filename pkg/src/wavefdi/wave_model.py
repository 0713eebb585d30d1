"""Semi-discrete canonical form of a 1D nonlinear wave equation.

The continuous model is

    d²φ/dt² = K · d²φ/dx² + f(φ, dφ/dt)

on N interior grid points with Dirichlet boundary samples ``phi_left``
and ``phi_right``.  Central differences in space turn the PDE into N
coupled oscillators.  Stacking a (position, velocity) pair per grid
point — y_{1,i} = φ_i at index 2i−1, y_{2,i} = dφ_i/dt at index 2i,
1-based — yields the linear-plus-known-input description

    dy/dt = A·y + B·v(y),        z = C·y,

where A carries only the neighbour coupling coefficients a = K/Δx²,
b = −2K/Δx², C selects the sensed positions, and the virtual inputs v
absorb boundary terms and the nonlinearity.  Because every nonlinear
term lives inside v, a *linear* Kalman filter can run on (A, B, C)
without ever forming a Jacobian of f.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SineGordonParams",
    "Nonlinearity",
    "zero_nonlinearity",
    "sine_gordon_nonlinearity",
    "WaveModel",
    "StateSpace",
    "laplacian_1d",
    "build_state_space",
    "virtual_inputs",
    "state_derivative",
    "split_state",
]


@dataclass(frozen=True)
class SineGordonParams:
    """Coefficients of the forced damped sine-Gordon equation

        φ_tt = k·φ_xx − c·φ_t − eps·sin(φ) + l

    `k` plays the role of the wave coefficient K; the remaining terms
    form the source f(φ, φ̇) = l − c·φ̇ − eps·sin(φ).
    """

    c: float = 0.0
    k: float = 1.0
    eps: float = 1.0
    l: float = 0.0

    def __post_init__(self):
        for name in ("c", "k", "eps", "l"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"SineGordonParams.{name} must be finite, got {value!r}")
        if self.k <= 0:
            raise ValueError(f"coupling k must be > 0, got {self.k}")
        if self.c < 0:
            raise ValueError(f"damping c must be >= 0, got {self.c}")


@dataclass(frozen=True)
class Nonlinearity:
    """Named source term f(φ_i, φ̇_i) of the wave equation.

    Supported tags: ``zero`` (f ≡ 0) and ``sine-gordon``
    (f = l − c·φ̇ − eps·sin(φ)).  Parameters are stored as a sorted
    tuple of (name, value) pairs so instances compare by value.
    """

    tag: str
    params: tuple = ()

    _REQUIRED = {"zero": frozenset(), "sine-gordon": frozenset({"c", "eps", "l"})}

    def __post_init__(self):
        if self.tag not in self._REQUIRED:
            raise ValueError(f"unknown nonlinearity tag {self.tag!r}")
        names = {name for name, _ in self.params}
        if names != self._REQUIRED[self.tag]:
            raise ValueError(
                f"nonlinearity {self.tag!r} expects parameters "
                f"{sorted(self._REQUIRED[self.tag])}, got {sorted(names)}"
            )
        for name, value in self.params:
            if not math.isfinite(value):
                raise ValueError(f"nonlinearity parameter {name}={value!r} is not finite")

    def __call__(self, phi, phidot):
        phi = np.asarray(phi, dtype=float)
        phidot = np.asarray(phidot, dtype=float)
        if self.tag == "zero":
            return np.zeros(np.broadcast(phi, phidot).shape)
        p = dict(self.params)
        return p["l"] - p["c"] * phidot - p["eps"] * np.sin(phi)


def zero_nonlinearity() -> Nonlinearity:
    return Nonlinearity("zero")


def sine_gordon_nonlinearity(c: float = 0.0, eps: float = 1.0, l: float = 0.0) -> Nonlinearity:
    return Nonlinearity("sine-gordon", (("c", float(c)), ("eps", float(eps)), ("l", float(l))))


@dataclass(frozen=True)
class WaveModel:
    """Continuous wave PDE parameters plus grid geometry.

    K is the wave/stiffness coefficient, N the number of interior grid
    points, dx the spacing, and phi_left/phi_right the fixed Dirichlet
    boundary samples φ₀ and φ_{N+1}.
    """

    K: float
    nonlinearity: Nonlinearity
    N: int
    dx: float
    phi_left: float = 0.0
    phi_right: float = 0.0

    def __post_init__(self):
        if not isinstance(self.N, int) or self.N < 3:
            raise ValueError(f"N must be an integer >= 3, got {self.N!r}")
        if not (math.isfinite(self.dx) and self.dx > 0):
            raise ValueError(f"dx must be > 0, got {self.dx!r}")
        if not (math.isfinite(self.K) and self.K > 0):
            raise ValueError(f"K must be > 0, got {self.K!r}")
        for name in ("phi_left", "phi_right"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def from_sine_gordon(cls, params: SineGordonParams, N: int, dx: float,
                         phi_left: float = 0.0, phi_right: float = 0.0) -> "WaveModel":
        """Build the model from sine-Gordon parameters: K := k."""
        return cls(K=params.k,
                   nonlinearity=sine_gordon_nonlinearity(params.c, params.eps, params.l),
                   N=N, dx=dx, phi_left=phi_left, phi_right=phi_right)

    @property
    def coupling_a(self) -> float:
        """Off-diagonal coupling a = K/Δx²."""
        return self.K / self.dx**2

    @property
    def coupling_b(self) -> float:
        """Diagonal coupling b = −2K/Δx²."""
        return -2.0 * self.K / self.dx**2


@dataclass
class StateSpace:
    """Canonical matrices of the coupled semi-discrete system.

    A is 2N×2N with integrator rows for positions and (a, b, a)
    coupling rows for velocities; B routes the N virtual inputs to the
    velocity rows; C selects sensed position states.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    a: float
    b: float
    sensor_indices: tuple


def laplacian_1d(phi, dx: float, phi_left: float = 0.0, phi_right: float = 0.0) -> np.ndarray:
    """Second central difference (φ_{i+1} − 2φ_i + φ_{i−1})/Δx² with
    Dirichlet boundary samples."""
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 1 or phi.size < 1:
        raise ValueError("phi must be a 1-D vector with at least one entry")
    if not (dx > 0):
        raise ValueError(f"dx must be > 0, got {dx!r}")
    if not (np.all(np.isfinite(phi)) and math.isfinite(phi_left) and math.isfinite(phi_right)):
        raise ValueError("laplacian_1d requires finite field and boundary values")
    padded = np.concatenate(([phi_left], phi, [phi_right]))
    return (padded[2:] - 2.0 * padded[1:-1] + padded[:-2]) / dx**2


def build_state_space(model: WaveModel, sensor_indices) -> StateSpace:
    """Assemble A, B, C for the interleaved state ordering.

    ``sensor_indices`` are 1-based grid point numbers; sensor j reads
    the position state y_{1,i} stored at (1-based) state index 2i−1.
    """
    N = model.N
    sensors = tuple(int(j) for j in sensor_indices)
    if len(set(sensors)) != len(sensors):
        raise ValueError(f"sensor indices must be distinct, got {sensors}")
    for j in sensors:
        if not 1 <= j <= N:
            raise ValueError(f"sensor index {j} outside grid range 1..{N}")

    a = model.coupling_a
    b = model.coupling_b
    n = 2 * N
    A = np.zeros((n, n))
    B = np.zeros((n, N))
    for i in range(N):
        A[2 * i, 2 * i + 1] = 1.0
        A[2 * i + 1, 2 * i] = b
        if i > 0:
            A[2 * i + 1, 2 * (i - 1)] = a
        if i < N - 1:
            A[2 * i + 1, 2 * (i + 1)] = a
        B[2 * i + 1, i] = 1.0

    C = np.zeros((len(sensors), n))
    for row, j in enumerate(sensors):
        C[row, 2 * (j - 1)] = 1.0
    return StateSpace(A=A, B=B, C=C, a=a, b=b, sensor_indices=sensors)


def virtual_inputs(model: WaveModel, positions, velocities) -> np.ndarray:
    """Virtual inputs v_i: boundary coupling at the two end points plus
    the source term f(φ_i, φ̇_i) everywhere.

        v_1 = (K/Δx²)·φ₀     + f(y_{1,1}, y_{2,1})
        v_i =                  f(y_{1,i}, y_{2,i})     1 < i < N
        v_N = (K/Δx²)·φ_{N+1} + f(y_{1,N}, y_{2,N})
    """
    positions = np.asarray(positions, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    if positions.shape != (model.N,) or velocities.shape != (model.N,):
        raise ValueError(
            f"positions/velocities must have shape ({model.N},), "
            f"got {positions.shape} and {velocities.shape}"
        )
    if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(velocities))):
        raise ValueError("virtual_inputs requires finite positions and velocities")
    v = np.asarray(model.nonlinearity(positions, velocities), dtype=float).copy()
    v[0] += model.coupling_a * model.phi_left
    v[-1] += model.coupling_a * model.phi_right
    return v


def split_state(y) -> tuple:
    """Split an interleaved state vector into (positions, velocities)."""
    y = np.asarray(y, dtype=float)
    return y[0::2], y[1::2]


def state_derivative(model: WaveModel, ss: StateSpace, y) -> np.ndarray:
    """Right-hand side of the canonical ODE, dy/dt = A·y + B·v(y)."""
    y = np.asarray(y, dtype=float)
    pos, vel = split_state(y)
    return ss.A @ y + ss.B @ virtual_inputs(model, pos, vel)
