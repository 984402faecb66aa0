"""Figure rendering for the report path.

Figures are written next to the delimited outputs; all plotted data also
lives in grid.csv / training_log.csv, so the images are a convenience view,
never the only record.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_grid_figure(x, true_values, predicted, mc_mean, mc_stderr,
                       title: str, path) -> None:
    """Closed form vs network prediction vs nearest Monte Carlo means."""
    fig, ax = plt.subplots(figsize=(7.0, 4.4))
    ax.errorbar(x, mc_mean, yerr=2.0 * np.asarray(mc_stderr), fmt=".", ms=3,
                color="tab:orange", ecolor="tab:orange", alpha=0.45, lw=0.8,
                label="MC mean (nearest point, 2 SE)")
    ax.plot(x, true_values, color="black", lw=1.6, label="closed form")
    ax.plot(x, predicted, color="tab:blue", lw=1.3, ls="--", label="network")
    ax.set_xlabel("$x_1$")
    ax.set_ylabel("u(0, x)")
    ax.set_title(title)
    ax.legend(frameon=False, fontsize=9)
    ax.grid(alpha=0.25)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_training_figure(losses, path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.semilogy(np.arange(len(losses)), losses, color="tab:blue", lw=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("training loss")
    ax.grid(alpha=0.25, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
