"""Figure rendering for the CLI report paths.

Every function writes one PNG next to the delimited outputs and returns
the path.  Figures are a human-readable view of the same data; the
byte-determinism contract of the CLI covers the CSV/JSON outputs, not
the PNG encoding.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = [
    "steady_figure",
    "trace_figure",
    "stability_figure",
    "eos_figure",
]

_DPI = 150


def steady_figure(outdir, grid, V0, n0, mu, lam) -> Path:
    """Potential and density profiles plus the occupation spectrum."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(grid.x, V0, color="tab:blue", label="V0")
    ax1.set_xlabel("x")
    ax1.set_ylabel("V0", color="tab:blue")
    ax1b = ax1.twinx()
    ax1b.plot(grid.x, n0, color="tab:red", label="n0")
    ax1b.set_ylabel("density", color="tab:red")
    ax1.set_title("steady potential and density")
    occupied = lam > 0
    ax2.semilogy(mu[occupied], lam[occupied], "o", color="tab:green")
    ax2.set_xlabel("mode energy")
    ax2.set_ylabel("occupation")
    ax2.set_title("occupation spectrum")
    ax2.grid(True, alpha=0.3)
    fig.tight_layout()
    path = Path(outdir) / "steady.png"
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def trace_figure(outdir, t, mass_dev, H, H_C, dist=None) -> Path:
    """Conserved-quantity drift and distance diagnostics over time."""
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    axes[0].semilogy(t, np.maximum(mass_dev, 1e-18), color="tab:purple")
    axes[0].set_title("max mass deviation")
    axes[0].set_xlabel("t")
    axes[1].plot(t, H - H[0], label="H - H(0)")
    axes[1].plot(t, H_C - H_C[0], "--", label="H_C - H_C(0)")
    axes[1].set_title("energy drift")
    axes[1].set_xlabel("t")
    axes[1].legend()
    if dist is not None:
        axes[2].plot(t, dist, color="tab:red")
        axes[2].set_title("gradient distance to reference")
    else:
        axes[2].text(0.5, 0.5, "no reference", ha="center", va="center")
        axes[2].set_axis_off()
    axes[2].set_xlabel("t")
    for ax in axes[:2]:
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = Path(outdir) / "trace.png"
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def stability_figure(outdir, t, dist, bound, tol_audit) -> Path:
    """Distance series against the conserved excess bound."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(t, dist, color="tab:red", label="d(t)")
    ax.axhline(bound, color="tab:blue", linestyle="--", label="bound B")
    ax.axhline(bound + tol_audit, color="tab:gray", linestyle=":",
               label="B + tol")
    ax.set_xlabel("t")
    ax.set_ylabel("squared gradient distance")
    ax.set_title("stability audit")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = Path(outdir) / "stability.png"
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def eos_figure(outdir, s, f, F, fstar) -> Path:
    """Occupation profile, its tail integral, and the conjugate values."""
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    axes[0].plot(s, f, color="tab:blue")
    axes[0].set_title("occupation profile f")
    axes[1].plot(s, F, color="tab:green")
    axes[1].set_title("tail integral F")
    axes[2].plot(s, fstar, color="tab:orange")
    axes[2].set_title("conjugate at -f(s)")
    for ax in axes:
        ax.set_xlabel("s")
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = Path(outdir) / "eos.png"
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path
