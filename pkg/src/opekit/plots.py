"""Static SVG plots for benchmark reports.

matplotlib is imported lazily and configured for reproducible output: a
fixed hash salt and no embedded creation date, so rerunning a report
produces byte-identical files.
"""

from __future__ import annotations

from .errors import InputError

_SAVE_KWARGS = {"format": "svg", "metadata": {"Date": None}}


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "opekit"
    import matplotlib.pyplot as plt

    return plt


def scatter_estimates_vs_oracle(points_by_estimator: dict, path: str) -> None:
    """One panel per estimator: estimate against the oracle value."""
    if not points_by_estimator:
        raise InputError("nothing to plot")
    plt = _plt()
    names = sorted(points_by_estimator)
    fig, axes = plt.subplots(1, len(names), figsize=(4 * len(names), 4), squeeze=False)
    for ax, name in zip(axes[0], names):
        oracle, estimates = points_by_estimator[name]
        ax.scatter(oracle, estimates, s=18, alpha=0.8)
        lo = min(min(oracle), min(estimates))
        hi = max(max(oracle), max(estimates))
        pad = 0.05 * (hi - lo or 1.0)
        ax.plot([lo - pad, hi + pad], [lo - pad, hi + pad], lw=1, color="gray", linestyle="--")
        ax.set_title(name)
        ax.set_xlabel("oracle value")
        ax.set_ylabel("estimate")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def correlation_by_sample_size(series: dict, path: str) -> None:
    """Correlation with the oracle per estimator, across sample sizes."""
    if not series:
        raise InputError("nothing to plot")
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in sorted(series):
        sizes, corrs = series[name]
        ax.plot(sizes, corrs, marker="o", label=name)
    ax.set_xscale("log")
    ax.set_xlabel("sample size")
    ax.set_ylabel("correlation with oracle")
    ax.set_ylim(-1.05, 1.05)
    ax.axhline(0.8, lw=1, color="gray", linestyle=":")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def variance_curves(series: dict, path: str) -> None:
    """Replication variance per estimator against sample size, log-log."""
    if not series:
        raise InputError("nothing to plot")
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in sorted(series):
        sizes, variances = series[name]
        ax.plot(sizes, variances, marker="o", label=name)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("sample size")
    ax.set_ylabel("replication variance")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
