"""Matplotlib rendering of distillation results to image files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .distill import BinStatistics, ThresholdChoice


def plot_bin_trace(bins: BinStatistics, path, xi_thr: float | None = None, title: str | None = None):
    """Raw rate, channel efficiency and QBER per time bin, stacked."""
    t = np.arange(bins.n_bins) * bins.bin_duration
    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(8.0, 6.0))

    axes[0].plot(t, bins.raw_rate_bps() / 1e3, lw=0.7, color="C0")
    axes[0].set_ylabel(r"$R_\mathrm{raw}$ [kbps]")

    axes[1].plot(t, bins.xi_estimate, lw=0.7, color="C1")
    if xi_thr is not None:
        axes[1].axhline(xi_thr, color="green", ls="--", lw=1.2, label=rf"$\xi_\mathrm{{thr}}={xi_thr:.2f}$")
        axes[1].legend(loc="upper right", fontsize=8)
    axes[1].set_ylabel(r"$\xi$")
    axes[1].set_ylim(-0.02, 1.05)

    has_stats = bins.sifted_count > 0
    qber = np.divide(
        bins.error_count,
        bins.sifted_count,
        out=np.zeros(bins.n_bins),
        where=has_stats,
    )
    axes[2].plot(t[has_stats], 100 * qber[has_stats], ".", ms=2.5, color="C3")
    axes[2].set_ylabel("QBER [%]")
    axes[2].set_xlabel("time [s]")
    axes[2].set_ylim(bottom=0)

    if title:
        axes[0].set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_threshold_curve(choice: ThresholdChoice, path):
    """Total secret rate against the post-selection threshold."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(choice.grid, choice.rates_bps / 1e3, lw=1.2)
    ax.axvline(choice.xi_thr, color="green", ls="--", lw=1.0)
    ax.annotate(
        f"optimum {choice.xi_thr:.2f}\n{choice.rate.rate_bps / 1e3:.1f} kbps",
        xy=(choice.xi_thr, choice.rate.rate_bps / 1e3),
        xytext=(5, -15),
        textcoords="offset points",
        fontsize=8,
    )
    ax.set_xlabel(r"$\xi_\mathrm{thr}$")
    ax.set_ylabel(r"$R_\mathrm{sec}$ [kbps]")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_comparison(rows, path, title: str | None = None):
    """Reference vs computed secret rates as grouped bars."""
    labels = [r.name for r in rows]
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(max(5.0, 1.0 + 0.8 * len(rows)), 4.0))
    ax.bar(x - 0.18, [r.reference_bps / 1e3 for r in rows], width=0.36, label="reference")
    ax.bar(x + 0.18, [r.computed_bps / 1e3 for r in rows], width=0.36, label="computed")
    ax.set_xticks(x, labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(r"$R_\mathrm{sec}$ [kbps]")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
