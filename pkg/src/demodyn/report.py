"""Figure rendering for the CLI report paths.

Every figure is written next to the delimited output it illustrates; the
CSVs stay the authoritative artifacts.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

CLASS_LABELS = ("newborn", "quarter", "halfyear", "adult_f", "adult_m", "total")
DPI = 120


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def save_class_trajectories(path, summary, classes=(0, 1, 2), obs=None,
                            title=None) -> Path:
    """Posterior mean and 95% band per class; optional observed overlay."""
    months = np.arange(summary.class_mean.shape[1])
    fig, axes = plt.subplots(len(classes), 1, figsize=(9, 2.6 * len(classes)),
                             sharex=True)
    if len(classes) == 1:
        axes = [axes]
    for ax, cls in zip(axes, classes):
        ax.fill_between(months, summary.class_lower[cls], summary.class_upper[cls],
                        color="tab:blue", alpha=0.25, label="95% band")
        ax.plot(months, summary.class_mean[cls], color="black", lw=1.2,
                label="posterior mean")
        if obs is not None and cls < 5:
            seen = obs[cls] >= 0
            ax.plot(months[seen], obs[cls][seen], ".", ms=3, color="tab:red",
                    label="observed")
        ax.set_ylabel(CLASS_LABELS[cls])
        ax.set_ylim(bottom=0)
    axes[0].legend(loc="upper right", fontsize=8)
    axes[-1].set_xlabel("month")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)


def save_traces(path, result, max_params: int = 12) -> Path:
    """Thinned trace per monitored scalar parameter (first few blocks)."""
    n = min(max_params, result.params.shape[1])
    ncol = 3
    nrow = (n + ncol - 1) // ncol
    fig, axes = plt.subplots(nrow, ncol, figsize=(10, 1.9 * nrow), squeeze=False)
    for i in range(nrow * ncol):
        ax = axes[i // ncol][i % ncol]
        if i < n:
            ax.plot(result.iterations, result.params[:, i], lw=0.5)
            ax.set_title(result.names[i], fontsize=8)
            ax.tick_params(labelsize=7)
        else:
            ax.axis("off")
    fig.tight_layout()
    return _save(fig, path)


def save_simulated_trajectory(path, totals, title="simulated population") -> Path:
    """Latent class totals of one simulated trajectory."""
    months = np.arange(totals.shape[1])
    fig, ax = plt.subplots(figsize=(9, 4))
    for cls in range(6):
        ax.plot(months, totals[cls], lw=1.2, label=CLASS_LABELS[cls])
    ax.set_xlabel("month")
    ax.set_ylabel("animals")
    ax.set_ylim(bottom=0)
    ax.legend(fontsize=8)
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def save_bootstrap_series(path, months, estimates) -> Path:
    """Per-replicate ratio-estimator series across surveys."""
    fig, ax = plt.subplots(figsize=(9, 4))
    for rep in range(estimates.shape[0]):
        ax.plot(months, estimates[rep], lw=0.8, alpha=0.7)
    ax.set_xlabel("survey month")
    ax.set_ylabel("estimated total")
    ax.set_title("balanced-bootstrap population estimates")
    fig.tight_layout()
    return _save(fig, path)


def save_coverage(path, coverages) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    idx = np.arange(1, len(coverages) + 1)
    ax.bar(idx, coverages, color="tab:blue")
    ax.axhline(95.0, color="black", lw=0.8, ls="--", label="nominal 95%")
    ax.set_xlabel("synthetic series")
    ax.set_ylabel("coverage (%)")
    ax.set_ylim(0, 105)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def save_prediction(path, months, mean, lower, upper, aerial=None) -> Path:
    """Ecosystem-wide predicted totals with optional corrected aerial points."""
    fig, ax = plt.subplots(figsize=(9, 4))
    ax.fill_between(months, lower, upper, color="tab:blue", alpha=0.25,
                    label="95% band")
    ax.plot(months, mean, color="black", lw=1.2, label="predicted total")
    if aerial is not None:
        t, est, se = aerial
        ax.errorbar(t, est, yerr=se, fmt="o", ms=4, color="tab:green",
                    label="aerial (sightability-corrected)")
    ax.set_xlabel("month")
    ax.set_ylabel("animals")
    ax.set_ylim(bottom=0)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)
