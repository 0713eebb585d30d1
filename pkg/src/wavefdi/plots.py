"""Static SVG figures for scenario runs.

Figures are written without embedded timestamps and with a fixed SVG
hash salt so repeated runs of the same scenario produce identical files.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "wavefdi"

__all__ = ["plot_field_snapshots", "plot_innovation_bars", "plot_t_statistic"]


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_field_snapshots(model, traj, states, path, snapshots: int = 5):
    """Position field φ(x) at evenly spaced times: truth solid, estimate dashed."""
    steps = traj.states.shape[0]
    ks = np.unique(np.linspace(0, steps - 1, snapshots).astype(int))
    x = model.dx * np.arange(1, model.N + 1)
    fig, ax = plt.subplots(figsize=(7, 4))
    colors = plt.cm.viridis(np.linspace(0.0, 0.9, len(ks)))
    for color, k in zip(colors, ks):
        ax.plot(x, traj.states[k, 0::2], color=color,
                label=f"t={traj.times[k]:.2f}")
        ax.plot(x, states[k].xhat[0::2], color=color, linestyle="--", alpha=0.7)
    ax.set_xlabel("x")
    ax.set_ylabel("position")
    ax.set_title("field snapshots (solid true, dashed estimate)")
    ax.legend(loc="best", fontsize=8)
    _save(fig, path)


def plot_innovation_bars(sensor_indices, mean_abs_innov, path):
    """Mean |innovation| per output channel."""
    channels = np.arange(1, len(sensor_indices) + 1)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(channels, mean_abs_innov, color="steelblue")
    ax.set_xlabel("output channel")
    ax.set_ylabel("mean |innovation|")
    ax.set_title("per-sensor innovation magnitude")
    _save(fig, path)


def plot_t_statistic(reports, path):
    """Global χ² statistic per window with the applied threshold."""
    centers = [0.5 * (rep.window[0] + rep.window[1]) for rep in reports]
    ts = [rep.t for rep in reports]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(centers, ts, marker="o", color="firebrick", label="t")
    thr = reports[0].threshold
    ax.axhline(thr, color="black", linestyle="--", label=f"threshold {thr:.3g}")
    if max(ts) > 50 * thr:
        ax.set_yscale("log")
    ax.set_xlabel("window centre (sample)")
    ax.set_ylabel("t statistic")
    ax.set_title("change-detection statistic per window")
    ax.legend(loc="best", fontsize=8)
    _save(fig, path)
