"""Static figures for experiment and benchmark reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLES = {
    "truth": dict(color="black", lw=1.5, label="truth"),
    "eks": dict(color="red", lw=2.5, ls="-.", label="extended smoother"),
    "kf": dict(color="tab:blue", lw=0.8, ls="-.", label="Kalman filter"),
    "rts": dict(color="tab:green", lw=1.2, ls="--", label="Kalman smoother"),
}


def _clip_to_axis(ax, values):
    lo, hi = ax.get_ylim()
    return np.clip(values, lo, hi)


def plot_experiment(result, path, dpi=150):
    """Two panels (x1, x2) with truth, the three estimates and the measurements.

    Measurements beyond the axis range are drawn on the boundary.
    """
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    t = result.t
    for i, ax in enumerate(axes):
        ax.plot(t, result.truth[:, i], **STYLES["truth"])
        ax.plot(t, result.kf[:, i], **STYLES["kf"])
        ax.plot(t, result.rts[:, i], **STYLES["rts"])
        ax.plot(t, result.eks[:, i], **STYLES["eks"])
        lo, hi = result.truth[:, i].min(), result.truth[:, i].max()
        pad = 0.5 * (hi - lo)
        ax.set_ylim(lo - pad, hi + pad)
        ax.set_ylabel(f"$x_{i + 1}$")
    axes[1].plot(t, _clip_to_axis(axes[1], result.z), "d", ms=3, mfc="none", color="0.4", label="measurements")
    axes[1].set_xlabel("t")
    axes[0].legend(loc="upper left", fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)


def plot_bench(rows, path, dpi=150):
    """Log-log time per outer iteration against ``N`` with a linear reference."""
    N = np.array([r.N for r in rows], dtype=float)
    per = np.array([r.per_outer for r in rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(N, per, "o-", label="measured")
    ax.loglog(N, per[0] * N / N[0], "k--", lw=0.8, label="linear in N")
    ax.set_xlabel("N")
    ax.set_ylabel("seconds per outer iteration")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
