"""Figure rendering for trajectories, rate tables, and resolvent contours.

Everything here draws straight to files with the ``Agg`` backend; the CLI
report paths call these next to their delimited output.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_trajectory_figure",
    "save_rate_figure",
    "save_contour_figure",
]


def save_trajectory_figure(path, steps, curves, title=None, ylabel="squared distance"):
    """Log-scale decay curves; ``curves`` maps legend label to values."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, values in curves.items():
        values = np.asarray(values, dtype=float)
        positive = values > 0
        ax.semilogy(np.asarray(steps)[positive], values[positive], label=label, lw=1.4)
    ax.set_xlabel("step")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_rate_figure(path, rows, title=None):
    """Empirical (with error bars) versus theoretical rates, one group per row."""
    idx = np.arange(len(rows))
    emp = np.array([r.empirical_rate for r in rows])
    err = np.array([r.empirical_stderr for r in rows])
    theo = np.array([r.theoretical_rate for r in rows])
    width = 0.38
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.bar(idx - width / 2, emp, width, yerr=np.nan_to_num(err), capsize=3, label="empirical")
    ax.bar(idx + width / 2, theo, width, label="theoretical")
    ax.set_xticks(idx)
    ax.set_xticklabels(
        [
            f"$\\alpha$={r.theta.alpha:g}\n$\\beta$={r.theta.beta:g}\n$\\gamma$={r.theta.gamma:g}"
            for r in rows
        ],
        fontsize=8,
    )
    ax.set_ylabel("decay rate")
    if title:
        ax.set_title(title)
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_contour_figure(path, re, im, smin, eps, eigenvalues=None, title=None):
    """Level sets of the resolvent smallest singular value around the spectrum."""
    fig, ax = plt.subplots(figsize=(5.4, 5.0))
    smin = np.asarray(smin, dtype=float)
    levels = sorted({eps / 4, eps / 2, eps, eps * 2, eps * 4})
    filled = ax.contourf(re, im, smin, levels=60, cmap="viridis")
    fig.colorbar(filled, ax=ax, label=r"$\sigma_{\min}(zI - M)$")
    ax.contour(re, im, smin, levels=levels, colors="white", linewidths=0.8)
    if eigenvalues is not None:
        eigenvalues = np.asarray(eigenvalues)
        ax.plot(eigenvalues.real, eigenvalues.imag, "rx", ms=6, label="eigenvalues")
        ax.legend(frameon=False, loc="upper right")
    circle = plt.Circle((0, 0), 1.0, fill=False, color="0.7", ls="--", lw=0.8)
    ax.add_patch(circle)
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
