"""End-to-end scenario orchestration: simulate → filter → monitor → report.

Two views exist over the same machinery.  The estimation view
("simulate") reconstructs the full state and summarizes per-sensor
innovation magnitudes, which is how a biased sensor shows up.  The
detection view ("detect"/"isolate") additionally collapses the last
grid subsystem into its scalar ARMAX form and runs the χ² pipeline over
sliding residual windows, which is how a drift of the wave coefficient
K shows up.  `run_calibration` replays the detection view on a matched
synthetic subsystem to verify the healthy χ² behaviour.
"""

import dataclasses
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .armax import (ArmaxModel, kf_to_armax, regressor_matrix,
                    subsystem_discrete_model, subsystem_input)
from .config import ScenarioConfig
from .errors import ConfigError
from .fdi import (FdiReport, ResidualBatch, chi2_threshold, run_fdi_pipeline,
                  subset_label)
from .kalman import (DiscreteModel, FilterState, discretize, estimates_to_csv,
                     riccati_steady_gain, run_filter)
from .simulator import Trajectory, simulate, trajectory_to_csv
from .wave_model import SineGordonParams, WaveModel, build_state_space

__all__ = [
    "MonitorRun",
    "ScenarioResult",
    "CalibrationResult",
    "build_wave_model",
    "run_subsystem_monitor",
    "monitor_residuals",
    "simulate_subsystem_plant",
    "multisine",
    "sliding_windows",
    "run_scenario",
    "run_calibration",
    "fdi_reports_to_csv",
    "calibration_to_csv",
]

INNOVATION_RATIO_FLAG = 5.0   # max/median mean|innovation| that implicates a sensor


@dataclass
class MonitorRun:
    """Steady-gain one-step predictor streams over one subsystem."""

    zhat: np.ndarray
    innovations: np.ndarray
    inputs: np.ndarray


@dataclass
class ScenarioResult:
    exit_code: int
    verdict: str
    suspect_sensor: int
    innovation_ratio: float
    reports: list
    files: dict
    out_dir: Path
    summary: str


@dataclass
class CalibrationResult:
    t_values: np.ndarray
    threshold: float
    alpha: float
    mean_t: float
    var_t: float
    false_alarm_rate: float


def build_wave_model(cfg: ScenarioConfig) -> WaveModel:
    w = cfg.wave
    params = SineGordonParams(c=w.c, k=w.K, eps=w.eps, l=w.l)
    return WaveModel.from_sine_gordon(params, N=w.N, dx=w.dx,
                                      phi_left=w.phi_left, phi_right=w.phi_right)


def run_subsystem_monitor(dm: DiscreteModel, z, input_fn, gain) -> MonitorRun:
    """Run the steady-gain predictor over a scalar measurement stream.

    Per step: predict ẑ(k) = x̂⁻₁(k), take the innovation against z(k),
    correct, evaluate the input v(k) = input_fn(k, posterior), advance.
    """
    z = np.ravel(np.asarray(z, dtype=float))
    Ad = dm.Ad
    Bd = np.ravel(dm.Bd)
    g = np.ravel(np.asarray(gain, dtype=float))
    steps = z.shape[0]
    zhat = np.zeros(steps)
    innov = np.zeros(steps)
    v = np.zeros(steps)
    xp = np.zeros(2)
    for k in range(steps):
        zhat[k] = xp[0]
        innov[k] = z[k] - xp[0]
        xpost = xp + g * innov[k]
        vk = float(input_fn(k, xpost))
        v[k] = vk
        xp = Ad @ xpost + Bd * vk
    return MonitorRun(zhat=zhat, innovations=innov, inputs=v)


def monitor_residuals(mrun: MonitorRun, am: ArmaxModel, kmin: int, kmax: int):
    """Residuals e(k) = z(k+1) − w_pred·X(k) and regressors for k in
    [kmin, kmax); requires kmax+1 samples of history."""
    if kmin < 2:
        raise ValueError(f"kmin must be >= 2, got {kmin}")
    if kmax + 1 > mrun.zhat.shape[0]:
        raise ValueError("monitor run too short for the requested residual range")
    X = regressor_matrix(mrun.zhat, mrun.inputs, mrun.innovations, kmin, kmax)
    z_next = mrun.zhat[kmin + 1:kmax + 1] + mrun.innovations[kmin + 1:kmax + 1]
    e = z_next - X @ am.w_pred
    return e, X


def simulate_subsystem_plant(Ad, Bd, Cd, v, rng, q: float, r: float) -> np.ndarray:
    """Linear 2-state plant driven by a known input: returns the scalar
    measurement stream z with process noise N(0, q·I) and measurement
    noise N(0, r)."""
    v = np.ravel(np.asarray(v, dtype=float))
    steps = v.shape[0]
    Bd = np.ravel(Bd)
    c_row = np.ravel(Cd)
    w = math.sqrt(q) * rng.standard_normal((steps, 2))
    eta = math.sqrt(r) * rng.standard_normal(steps)
    z = np.zeros(steps)
    x = np.zeros(2)
    for k in range(steps):
        z[k] = c_row @ x + eta[k]
        x = Ad @ x + Bd * v[k] + w[k]
    return z


def multisine(steps: int, ts: float, amplitude: float,
              freqs=(0.030, 0.011), phases=(0.0, 1.0)) -> np.ndarray:
    """Deterministic two-tone excitation (frequencies in cycles per time unit)."""
    t = ts * np.arange(steps)
    out = np.zeros(steps)
    for f, ph in zip(freqs, phases):
        out += np.sin(2.0 * math.pi * f * t + ph)
    return amplitude * out


def sliding_windows(total: int, nb: int, overlap: float):
    """Start offsets of length-nb windows advancing by nb·(1−overlap)."""
    if total < nb:
        return []
    step = max(1, int(round(nb * (1.0 - overlap))))
    return list(range(0, total - nb + 1, step))


def fdi_reports_to_csv(reports, path):
    """`window_start, window_end, t, lambda, verdict, best_subset, t_subset`."""
    lines = ["window_start,window_end,t,lambda,verdict,best_subset,t_subset"]
    for rep in reports:
        start, end = rep.window if rep.window is not None else ("", "")
        if rep.isolation is not None:
            best = subset_label(rep.isolation.best_subset)
            t_subset = f"{rep.isolation.best_stat:.17g}"
        else:
            best, t_subset = "", ""
        lines.append(f"{start},{end},{rep.t:.17g},{rep.threshold:.17g},"
                     f"{rep.verdict},{best},{t_subset}")
    Path(path).write_text("\n".join(lines) + "\n")


def _resolve_out_dir(cfg: ScenarioConfig, out_dir) -> Path:
    if out_dir is None:
        out_dir = cfg.out or os.environ.get("WAVEFDI_OUT") or "wavefdi_out"
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _innovation_profile(states, start: int):
    innov = np.array([fs.innovation for fs in states[start:]])
    mean_abs = np.mean(np.abs(innov), axis=0)
    suspect = int(np.argmax(mean_abs)) + 1
    median = float(np.median(mean_abs))
    ratio = float(mean_abs[suspect - 1] / median) if median > 0 else math.inf
    return mean_abs, suspect, ratio


def _monitor_last_subsystem(cfg: ScenarioConfig, model: WaveModel,
                            traj: Trajectory, states):
    """ARMAX monitor over the last grid point; returns (reports, stream info)."""
    N = model.N
    if N not in cfg.sensors:
        raise ConfigError(
            f"sensors: detection monitors grid point {N}, which is not sensed; "
            f"add it or set sensors: odd-plus-last"
        )
    channel = cfg.sensors.index(N)
    dm_sub = subsystem_discrete_model(model, cfg.sim.ts, q=cfg.process_q(),
                                      r=cfg.measurement_r())
    gain, _ = riccati_steady_gain(dm_sub)
    am = kf_to_armax(dm_sub, gain)

    neighbor = np.array([fs.xhat[2 * (N - 1) - 2] for fs in states])
    z_sub = traj.measurements[:, channel]

    def input_fn(k, xpost):
        return subsystem_input(model, neighbor[k], model.phi_right,
                               xpost[0], xpost[1])

    mrun = run_subsystem_monitor(dm_sub, z_sub, input_fn, gain)
    kmin = max(cfg.fdi.warmup, 2)
    kmax = cfg.sim.steps - 1
    if kmax - kmin < cfg.fdi.nb:
        raise ConfigError(
            f"fdi.nb: window of {cfg.fdi.nb} does not fit the {kmax - kmin} "
            f"monitored samples (sim.steps={cfg.sim.steps}, fdi.warmup={cfg.fdi.warmup})"
        )
    e, X = monitor_residuals(mrun, am, kmin, kmax)
    starts = sliding_windows(e.shape[0], cfg.fdi.nb, cfg.fdi.overlap)
    # keep the whole-run false-alarm rate at alpha across all windows
    alpha_eff = cfg.fdi.alpha / len(starts)
    subsets0 = tuple(tuple(i - 1 for i in s) for s in cfg.fdi.subsets)
    reports = []
    for s in starts:
        batch = ResidualBatch(e[s:s + cfg.fdi.nb], X[s:s + cfg.fdi.nb])
        rep = run_fdi_pipeline(batch, alpha=alpha_eff, isolation=cfg.fdi.isolation,
                               subsets=subsets0, threshold_mode=cfg.fdi.threshold_mode,
                               eta=cfg.fdi.eta)
        rep = FdiReport(X=rep.X, M=rep.M, S=rep.S, t=rep.t, threshold=rep.threshold,
                        alpha=rep.alpha, verdict=rep.verdict, isolation=rep.isolation,
                        window=(kmin + s, kmin + s + cfg.fdi.nb))
        reports.append(rep)
    return reports, am


def run_scenario(cfg: ScenarioConfig, out_dir=None, mode: str = None) -> ScenarioResult:
    """Run one configured scenario and write its artifacts.

    mode "simulate" stops after state reconstruction; "detect" adds the
    ARMAX/χ² pipeline; "isolate" also runs the configured isolation
    test.  Default: "detect" for param-change scenarios, else "simulate".
    Exit code 0 = healthy, 3 = fault flagged.
    """
    from . import plots  # deferred: pulls in matplotlib

    if mode is None:
        mode = "detect" if cfg.scenario == "param-change" else "simulate"
    if mode not in ("simulate", "detect", "isolate"):
        raise ValueError(f"unknown mode {mode!r}")
    if cfg.sim.steps < 2:
        raise ConfigError("sim.steps: scenario runs need at least 2 steps")

    out = _resolve_out_dir(cfg, out_dir)
    model = build_wave_model(cfg)
    traj = simulate(model, cfg.sim, cfg.sensors, cfg.faults)

    ss = build_state_space(model, cfg.sensors)
    dm = discretize(ss, cfg.sim.ts, method=cfg.filter.discretization,
                    q=cfg.process_q(), r=cfg.measurement_r())
    init = FilterState(xhat=np.zeros(dm.n), P=cfg.filter.p0 * np.eye(dm.n))
    states = run_filter(dm, model, traj.measurements, init)

    files = {}
    files["trajectory"] = out / "trajectory.csv"
    trajectory_to_csv(traj, files["trajectory"])
    files["estimates"] = out / "estimates.csv"
    estimates_to_csv(states, cfg.sim.ts, files["estimates"])

    mean_abs, suspect, ratio = _innovation_profile(states, cfg.sim.steps // 2)
    files["field_plot"] = out / "field_snapshots.svg"
    plots.plot_field_snapshots(model, traj, states, files["field_plot"])
    files["innovation_plot"] = out / "innovation_bars.svg"
    plots.plot_innovation_bars(cfg.sensors, mean_abs, files["innovation_plot"])

    reports = []
    if mode in ("detect", "isolate"):
        fdi_cfg = cfg if mode == "isolate" else _without_isolation(cfg)
        reports, _am = _monitor_last_subsystem(fdi_cfg, model, traj, states)
        files["fdi_report"] = out / "fdi_report.csv"
        fdi_reports_to_csv(reports, files["fdi_report"])
        files["t_plot"] = out / "t_statistic.svg"
        plots.plot_t_statistic(reports, files["t_plot"])

    if mode == "simulate":
        flagged = ratio > INNOVATION_RATIO_FLAG
        verdict = "faulty" if flagged else "healthy"
    else:
        flagged = any(rep.verdict == "faulty" for rep in reports)
        verdict = "faulty" if flagged else "healthy"
    exit_code = 3 if flagged else 0

    summary = _summary_text(cfg, mode, suspect, ratio, mean_abs, reports,
                            verdict, exit_code)
    files["summary"] = out / "summary.txt"
    files["summary"].write_text(summary)
    return ScenarioResult(exit_code=exit_code, verdict=verdict,
                          suspect_sensor=suspect, innovation_ratio=ratio,
                          reports=reports, files=files, out_dir=out, summary=summary)


def _without_isolation(cfg: ScenarioConfig):
    return dataclasses.replace(cfg, fdi=dataclasses.replace(cfg.fdi, isolation="none"))


def _summary_text(cfg, mode, suspect, ratio, mean_abs, reports, verdict, exit_code):
    lines = [
        f"scenario: {cfg.scenario}",
        f"mode: {mode}",
        f"seed: {cfg.seed}",
        f"grid: N={cfg.wave.N} dx={cfg.wave.dx} K={cfg.wave.K}",
        f"sensors: {len(cfg.sensors)}",
        f"steps: {cfg.sim.steps} at ts={cfg.sim.ts}",
        f"faults: {[f.kind for f in cfg.faults] or 'none'}",
        "",
        f"largest mean |innovation|: sensor {suspect} "
        f"({mean_abs[suspect - 1]:.6g}, {ratio:.2f}x the median)",
    ]
    if mode == "simulate":
        lines.append(f"sensor flag threshold: {INNOVATION_RATIO_FLAG:.1f}x median")
    if reports:
        worst = max(reports, key=lambda rep: rep.t)
        lines += [
            "",
            f"fdi windows: {len(reports)} of {cfg.fdi.nb} residuals "
            f"(overlap {cfg.fdi.overlap})",
            f"max t: {worst.t:.6g} (threshold {worst.threshold:.6g}, "
            f"window {worst.window})",
        ]
        if worst.isolation is not None:
            lines.append(
                f"isolation ({worst.isolation.mode}): best subset "
                f"{subset_label(worst.isolation.best_subset)} "
                f"with statistic {worst.isolation.best_stat:.6g}"
            )
    lines += ["", f"verdict: {verdict}", f"exit_code: {exit_code}", ""]
    return "\n".join(lines)


def _calibration_trial(dm_sub: DiscreteModel, am: ArmaxModel, gain, v,
                       warmup: int, nb: int, seed) -> float:
    """One matched-model H0 window → the global χ² statistic."""
    rng = np.random.default_rng(seed)
    z = simulate_subsystem_plant(dm_sub.Ad, dm_sub.Bd, dm_sub.Cd, v, rng,
                                 q=float(dm_sub.Q[0, 0]), r=float(dm_sub.R[0, 0]))
    mrun = run_subsystem_monitor(dm_sub, z, lambda k, _x: v[k], gain)
    kmin = max(warmup, 2)
    e, X = monitor_residuals(mrun, am, kmin, kmin + nb)
    batch = ResidualBatch(e, X)
    rep = run_fdi_pipeline(batch, alpha=0.05, isolation="none")
    return rep.t


def run_calibration(cfg: ScenarioConfig, trials: int,
                    excitation_amplitude: float = None) -> CalibrationResult:
    """Healthy-model Monte-Carlo of the detection statistic.

    Each trial builds one independent matched subsystem window (plant
    and filter share the same model and noise levels) and computes the
    global χ² statistic; the result summarizes the empirical mean,
    variance, and false-alarm rate at the configured alpha.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    model = build_wave_model(cfg)
    r = cfg.measurement_r()
    dm_sub = subsystem_discrete_model(model, cfg.sim.ts, q=cfg.process_q(), r=r)
    gain, _ = riccati_steady_gain(dm_sub)
    am = kf_to_armax(dm_sub, gain)

    warmup = max(cfg.fdi.warmup, 2)
    steps = warmup + cfg.fdi.nb + 2
    if excitation_amplitude is None:
        excitation_amplitude = 200.0 * math.sqrt(r)
    v = multisine(steps, cfg.sim.ts, excitation_amplitude)
    seeds = np.random.SeedSequence(cfg.seed).spawn(trials)

    def one(seed):
        return _calibration_trial(dm_sub, am, gain, v, warmup, cfg.fdi.nb, seed)

    with ThreadPoolExecutor(max_workers=min(4, os.cpu_count() or 1)) as pool:
        t_values = np.array(list(pool.map(one, seeds)))

    threshold = chi2_threshold(cfg.fdi.alpha, 5)
    fa = float(np.mean(t_values > threshold))
    return CalibrationResult(t_values=t_values, threshold=threshold,
                             alpha=cfg.fdi.alpha, mean_t=float(np.mean(t_values)),
                             var_t=float(np.var(t_values)),
                             false_alarm_rate=fa)


def calibration_to_csv(result: CalibrationResult, path):
    lines = ["trial,t,threshold,verdict"]
    for i, t in enumerate(result.t_values):
        verdict = "faulty" if t > result.threshold else "healthy"
        lines.append(f"{i},{t:.17g},{result.threshold:.17g},{verdict}")
    Path(path).write_text("\n".join(lines) + "\n")
