"""Optional PNG figures for region and convergence outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_region(grid, path, title=""):
    """Shade the stable part of ``grid`` and draw the boundary ``k^2 = -2 hhat``."""
    fig, ax = plt.subplots(figsize=(5, 4))
    H, K = np.meshgrid(grid.hhat_axis, grid.ksq_axis, indexing="ij")
    ax.contourf(H, K, grid.stable_mask.astype(float), levels=[0.5, 1.5], colors=["#9ecae1"])
    hb = np.linspace(grid.hhat_axis[0], min(grid.hhat_axis[-1], 0.0), 200)
    ax.plot(hb, -2.0 * hb, "k--", lw=1, label=r"$2\hat h + k^2 = 0$")
    ax.set_xlim(grid.hhat_axis[0], grid.hhat_axis[-1])
    ax.set_ylim(grid.ksq_axis[0], grid.ksq_axis[-1])
    ax.set_xlabel(r"$\hat h$")
    ax.set_ylabel(r"$k^2$")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_convergence(study, path, title=""):
    fig, ax = plt.subplots(figsize=(5, 4))
    h = np.asarray(study.h_list)
    e = np.asarray(study.errors)
    ax.loglog(h, e, "o-", base=2, label=f"slope {study.slope:.3f}")
    ax.set_xlabel("h")
    ax.set_ylabel("RMS error at T")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
