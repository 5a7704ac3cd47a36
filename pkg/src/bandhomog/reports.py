"""Figure rendering for the report paths (written to files next to the
delimited output; nothing interactive)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams["figure.figsize"] = (6.0, 4.0)
plt.rcParams["font.size"] = 9
plt.rcParams["axes.grid"] = True
plt.rcParams["grid.alpha"] = 0.3


def save_band_figure(bs, path, title="band structure"):
    fig, ax = plt.subplots()
    nk = bs.kpoints.shape[0]
    if bs.kpoints.shape[1] == 1:
        x = bs.kpoints[:, 0]
        ax.set_xlabel("k")
    else:
        x = np.arange(nk)
        ax.set_xlabel("path index")
    for band in range(bs.energies.shape[1]):
        ax.plot(x, bs.energies[:, band], lw=1.2)
    ax.set_ylabel("E")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_verify_figure(rows, path, title="fiber exponential bound"):
    fig, ax = plt.subplots()
    taus = sorted({r["tau"] for r in rows})
    for tau in taus:
        sel = sorted((r for r in rows if r["tau"] == tau), key=lambda r: r["delta"])
        d = [r["delta"] for r in sel]
        ax.loglog(d, [r["lhs"] for r in sel], "o-", label=f"lhs, tau={tau:g}")
        ax.loglog(d, [r["rhs"] for r in sel], "--", label=f"rhs, tau={tau:g}")
    ax.set_xlabel("|dk|")
    ax.set_ylabel("operator norm")
    ax.legend(fontsize=7)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_convergence_figure(rows, slopes, path, title="homogenization error"):
    fig, ax = plt.subplots()
    taus = sorted({r["tau"] for r in rows})
    for tau in taus:
        sel = sorted((r for r in rows if r["tau"] == tau), key=lambda r: r["eps"])
        e = [r["eps"] for r in sel]
        key = f"tau={tau:.17g}"
        slope = slopes.get(key, {}).get("slope")
        label = f"error, tau={tau:g}" + (f" (slope {slope:.2f})" if slope else "")
        ax.loglog(e, [r["error"] for r in sel], "o-", label=label)
        ax.loglog(e, [r["bound_total"] for r in sel], "--", label=f"bound, tau={tau:g}")
    ax.set_xlabel("eps")
    ax.set_ylabel("L2 error")
    ax.legend(fontsize=7)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_snapshot_figure(x, u, u_eff, path, title="physical-space snapshot"):
    fig, axes = plt.subplots(2, 1, sharex=True)
    axes[0].plot(x, np.real(u), lw=0.9, label="Re u")
    axes[0].plot(x, np.real(u_eff), lw=0.9, ls="--", label="Re u_eff")
    axes[1].plot(x, np.abs(u), lw=0.9, label="|u|")
    axes[1].plot(x, np.abs(u_eff), lw=0.9, ls="--", label="|u_eff|")
    axes[0].legend(fontsize=7)
    axes[1].legend(fontsize=7)
    axes[1].set_xlabel("x")
    axes[0].set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
