"""Static figures for the command-line reports (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_density", "plot_histogram", "plot_kl_table"]

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "axes.labelsize": 10,
    "font.size": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "savefig.dpi": 150,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps PNG bytes reproducible
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_density(lam, rho, path, branch=None, title=None, logscale=False) -> Path:
    """Density of states curve; tail-asymptotic points drawn dashed."""
    lam = np.asarray(lam)
    rho = np.asarray(rho)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if branch is not None:
            branch = np.asarray(branch)
            tail = branch == "tail-asymptotic"
            ax.plot(lam[~tail], rho[~tail], "k-", lw=1.2, label="solved")
            if tail.any():
                ax.plot(lam[tail], rho[tail], "k--", lw=1.0, label="tail law")
            ax.legend(frameon=False)
        else:
            ax.plot(lam, rho, "k-", lw=1.2)
        if logscale:
            ax.set_xscale("log")
            ax.set_yscale("log")
        ax.set_xlabel(r"$\lambda$")
        ax.set_ylabel(r"$\rho(\lambda)$")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return _save(fig, path)


def plot_histogram(edges, density, path, overlays: dict | None = None, title=None, cutoffs: dict | None = None) -> Path:
    """Eigenvalue histogram with analytic curves evaluated at the bin centres."""
    edges = np.asarray(edges)
    centers = 0.5 * (edges[1:] + edges[:-1])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.stairs(density, edges, fill=True, color="0.8", label="sample")
        for (name, y), ls in zip((overlays or {}).items(), ("-", "--", ":", "-.")):
            ax.plot(centers, y, "k" + ls, lw=1.2, label=name)
        for name, x in (cutoffs or {}).items():
            ax.axvline(x, color="0.4", lw=0.8, ls=":")
            ax.annotate(name, (x, ax.get_ylim()[1] * 0.9), fontsize=7, rotation=90, ha="right")
        ax.set_xlabel(r"$\lambda$")
        ax.set_ylabel(r"$\rho(\lambda)$")
        ax.set_xlim(edges[0], edges[-1])
        ax.legend(frameon=False)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return _save(fig, path)


def plot_kl_table(mu, Q, z, zp, path) -> Path:
    """``Z/N`` and ``Z'/N`` against ``Q``, one line pair per ``mu``."""
    mu, Q, z, zp = map(np.asarray, (mu, Q, z, zp))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for m in np.unique(mu):
            sel = mu == m
            label = "gaussian" if np.isinf(m) else rf"$\mu={m:g}$"
            line, = ax.plot(Q[sel], z[sel], "o-", ms=3, label=label + " Z/N")
            ax.plot(Q[sel], zp[sel], "s--", ms=3, color=line.get_color(), label=label + " Z'/N")
        ax.set_xlabel("Q")
        ax.set_ylabel("entropy per asset")
        ax.legend(frameon=False, ncol=2)
        fig.tight_layout()
        return _save(fig, path)
