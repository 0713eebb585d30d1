"""Ground-truth time integration, sensor model, and fault injection.

The simulator advances the semi-discrete wave system dy/dt = A·y + B·v(y)
with classical RK4, adds per-sample process noise, and produces noisy
position measurements z = C·y + noise.  Faults are injected either on
sensor channels (bias / stuck / noise inflation) or on the plant's wave
coefficient K (a step change at the onset sample, invisible to any
filter that keeps the nominal K).

Determinism contract: one `numpy` Generator seeded from the config
drives all randomness, drawing measurement noise first and process
noise second in every sample, so two runs with the same seed agree
bitwise — and a faulted run agrees bitwise with its fault-free twin on
every sample before the onset.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrationDivergedError
from .wave_model import WaveModel, StateSpace, build_state_space, split_state, virtual_inputs

__all__ = [
    "InitialProfile",
    "SimConfig",
    "FaultSpec",
    "Trajectory",
    "initial_state",
    "integrate_step",
    "measure",
    "simulate",
    "trajectory_to_csv",
]

SENSOR_FAULT_KINDS = ("sensor-bias", "sensor-stuck", "sensor-noise-inflation")
FAULT_KINDS = SENSOR_FAULT_KINDS + ("param-drift-K",)


@dataclass(frozen=True)
class InitialProfile:
    """Initial position field shape; velocities always start at zero.

    shape ``zero``: φ ≡ 0.
    shape ``gaussian-pulse``: φ_i = amplitude·exp(−(x_i − center)²/(2·width²))
    with x_i = i·dx; center defaults to the domain midpoint and width to
    a tenth of the domain length.
    shape ``custom``: explicit length-N position vector in ``values``.
    """

    shape: str = "zero"
    center: float = None
    width: float = None
    amplitude: float = 1.0
    values: tuple = None

    def __post_init__(self):
        if self.shape not in ("zero", "gaussian-pulse", "custom"):
            raise ValueError(f"unknown initial profile shape {self.shape!r}")
        if self.shape == "custom" and self.values is None:
            raise ValueError("custom initial profile requires explicit values")
        if self.values is not None:
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))


@dataclass(frozen=True)
class SimConfig:
    ts: float = 0.01
    steps: int = 2000
    substeps: int = 1
    process_noise_std: float = 0.0
    measurement_noise_std: float = 0.0
    seed: int = 0
    initial_profile: InitialProfile = field(default_factory=InitialProfile)

    def __post_init__(self):
        if not (math.isfinite(self.ts) and self.ts > 0):
            raise ValueError(f"ts must be > 0, got {self.ts!r}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps!r}")
        if self.substeps < 1:
            raise ValueError(f"substeps must be >= 1, got {self.substeps!r}")
        for name in ("process_noise_std", "measurement_noise_std"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")


@dataclass(frozen=True)
class FaultSpec:
    """One injected fault.

    kind ``sensor-bias``: add ``magnitude`` to output channel ``target``.
    kind ``sensor-stuck``: replace the channel with the constant ``magnitude``.
    kind ``sensor-noise-inflation``: multiply the channel's noise draw by ``magnitude``.
    kind ``param-drift-K``: change the plant's wave coefficient by the
    relative fraction ``magnitude`` (e.g. 0.01 = +1%) while active.

    ``target`` is a 1-based output channel index for sensor kinds and the
    literal string "K" for the parameter drift.  ``duration`` of None
    means the fault persists to the end of the run.
    """

    kind: str
    target: object
    magnitude: float
    onset: int
    duration: int = None

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise ValueError(f"unknown fault kind {self.kind!r}")
        if self.onset < 0:
            raise ValueError(f"fault onset must be >= 0, got {self.onset!r}")
        if self.duration is not None and self.duration < 0:
            raise ValueError(f"fault duration must be >= 0, got {self.duration!r}")
        if not math.isfinite(self.magnitude):
            raise ValueError("fault magnitude must be finite")
        if self.kind == "param-drift-K":
            if self.target != "K":
                raise ValueError(f'param-drift-K target must be "K", got {self.target!r}')
        else:
            if not isinstance(self.target, int) or self.target < 1:
                raise ValueError(
                    f"{self.kind} target must be a 1-based sensor index, got {self.target!r}"
                )

    def active(self, step: int) -> bool:
        if step < self.onset:
            return False
        return self.duration is None or step < self.onset + self.duration


@dataclass
class Trajectory:
    """Ground-truth run: states (steps×2N), measurements (steps×m), and
    the true virtual inputs v(k) (steps×N) at each sample time."""

    times: np.ndarray
    states: np.ndarray
    measurements: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        rows = {self.times.shape[0], self.states.shape[0],
                self.measurements.shape[0], self.inputs.shape[0]}
        if len(rows) != 1:
            raise ValueError("trajectory arrays disagree on the number of steps")


def initial_state(model: WaveModel, profile: InitialProfile) -> np.ndarray:
    """Interleaved 2N state for the chosen initial position field."""
    y0 = np.zeros(2 * model.N)
    if profile.shape == "zero":
        return y0
    if profile.shape == "custom":
        values = np.asarray(profile.values, dtype=float)
        if values.shape != (model.N,):
            raise ValueError(
                f"custom initial profile needs {model.N} position values, got {values.shape}"
            )
        y0[0::2] = values
        return y0
    # gaussian-pulse
    length = (model.N + 1) * model.dx
    center = length / 2.0 if profile.center is None else profile.center
    width = length / 10.0 if profile.width is None else profile.width
    if width <= 0:
        raise ValueError(f"pulse width must be > 0, got {width!r}")
    x = model.dx * np.arange(1, model.N + 1)
    y0[0::2] = profile.amplitude * np.exp(-((x - center) ** 2) / (2.0 * width**2))
    return y0


def _rk4_advance(rhs, y: np.ndarray, ts: float, substeps: int) -> np.ndarray:
    h = ts / substeps
    for i in range(substeps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise IntegrationDivergedError(
                f"non-finite state after internal step {i + 1}/{substeps}"
            )
    return y


def integrate_step(model: WaveModel, state, ts: float, substeps: int = 1) -> np.ndarray:
    """Advance dy/dt = A·y + B·v(y) by one sample of length ``ts`` using
    classical 4th-order Runge-Kutta with ``substeps`` internal steps."""
    y = np.asarray(state, dtype=float)
    if y.shape != (2 * model.N,):
        raise ValueError(f"state must have shape ({2 * model.N},), got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("integrate_step requires a finite state")
    ss = build_state_space(model, (1,))

    def rhs(yy):
        pos, vel = split_state(yy)
        return ss.A @ yy + ss.B @ virtual_inputs(model, pos, vel)

    return _rk4_advance(rhs, y, ts, substeps)


def measure(true_state, C: np.ndarray, noise_std: float, faults, rng) -> np.ndarray:
    """One measurement sample z = C·y + noise, then the given (already
    active) sensor faults applied in list order.  The noise vector is
    always drawn, so fault injection never shifts the RNG stream."""
    y = np.asarray(true_state, dtype=float)
    m = C.shape[0]
    noise = noise_std * rng.standard_normal(m)
    for f in faults:
        if f.kind == "sensor-noise-inflation":
            _check_sensor_target(f, m)
            noise[f.target - 1] *= f.magnitude
    z = C @ y + noise
    for f in faults:
        if f.kind == "sensor-bias":
            _check_sensor_target(f, m)
            z[f.target - 1] += f.magnitude
        elif f.kind == "sensor-stuck":
            _check_sensor_target(f, m)
            z[f.target - 1] = f.magnitude
    return z


def _check_sensor_target(fault: FaultSpec, m: int):
    if fault.target > m:
        raise ValueError(
            f"fault targets sensor {fault.target} but only {m} sensors exist"
        )


def simulate(model: WaveModel, cfg: SimConfig, sensor_indices, faults=()) -> Trajectory:
    """Full ground-truth run with faults.

    param-drift-K faults change the *plant's* K while active; any filter
    built from the nominal model keeps the original coefficient, which
    is exactly the mismatch the FDI layer is meant to notice.
    """
    faults = tuple(faults)
    for f in faults:
        if f.kind != "param-drift-K":
            _check_sensor_target(f, len(tuple(sensor_indices)))

    ss = build_state_space(model, sensor_indices)
    n, m = 2 * model.N, ss.C.shape[0]
    times = cfg.ts * np.arange(cfg.steps)
    states = np.zeros((cfg.steps, n))
    measurements = np.zeros((cfg.steps, m))
    inputs = np.zeros((cfg.steps, model.N))
    rng = np.random.default_rng(cfg.seed)

    y = initial_state(model, cfg.initial_profile)
    plant = model
    plant_ss = ss
    for k in range(cfg.steps):
        drift = sum(f.magnitude for f in faults
                    if f.kind == "param-drift-K" and f.active(k))
        k_eff = model.K * (1.0 + drift)
        if k_eff != plant.K:
            plant = WaveModel(K=k_eff, nonlinearity=model.nonlinearity, N=model.N,
                              dx=model.dx, phi_left=model.phi_left, phi_right=model.phi_right)
            plant_ss = build_state_space(plant, sensor_indices)

        pos, vel = split_state(y)
        states[k] = y
        inputs[k] = virtual_inputs(plant, pos, vel)
        active_sensor_faults = [f for f in faults
                                if f.kind in SENSOR_FAULT_KINDS and f.active(k)]
        measurements[k] = measure(y, ss.C, cfg.measurement_noise_std,
                                  active_sensor_faults, rng)

        A, B, mdl = plant_ss.A, plant_ss.B, plant

        def rhs(yy):
            p, v = split_state(yy)
            return A @ yy + B @ virtual_inputs(mdl, p, v)

        try:
            y = _rk4_advance(rhs, y, cfg.ts, cfg.substeps)
        except IntegrationDivergedError as exc:
            raise IntegrationDivergedError(f"step {k}: {exc}") from exc
        # drawn unconditionally so the stream layout is independent of the std
        y = y + cfg.process_noise_std * rng.standard_normal(n)

    return Trajectory(times=times, states=states, measurements=measurements, inputs=inputs)


def trajectory_to_csv(traj: Trajectory, path):
    """Write `t, y_true_1..y_true_2N, z_1..z_m` with a header row."""
    n = traj.states.shape[1]
    m = traj.measurements.shape[1]
    header = ",".join(["t"]
                      + [f"y_true_{i}" for i in range(1, n + 1)]
                      + [f"z_{j}" for j in range(1, m + 1)])
    table = np.column_stack([traj.times, traj.states, traj.measurements]) \
        if traj.times.size else np.empty((0, 1 + n + m))
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.17g")
