"""SVG figure generation (pure functions of already-computed curves).

Figures are deterministic: fixed hash salt, no embedded dates, so
re-plotting the same CSV data reproduces identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import OutputError

plt.rcParams["svg.hashsalt"] = "kpzlab"
_META = {"Date": None}


def _save(fig, path):
    try:
        fig.savefig(path, format="svg", metadata=_META)
    except OSError as exc:
        raise OutputError(f"cannot write figure {path}: {exc}") from exc
    finally:
        plt.close(fig)


def curve_band(path, grid, mean, stderr, title="", xlabel="x", ylabel=""):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(grid, mean, color="tab:blue", lw=1.5)
    ax.fill_between(grid, mean - 3 * stderr, mean + 3 * stderr,
                    color="tab:blue", alpha=0.25, label="±3 stderr")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(loc="best")
    _save(fig, path)


def overlay(path, grid, a, b, labels=("a", "b"), title="", xlabel="x"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(grid, a, color="tab:blue", lw=1.5, label=labels[0])
    ax.plot(grid, b, color="tab:orange", lw=1.5, ls="--", label=labels[1])
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.legend(loc="best")
    _save(fig, path)


def ks_trend(path, betas, ks, title="KS distance to Chernoff reference"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(betas, ks, "o-", color="tab:green")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("beta")
    ax.set_ylabel("KS distance")
    ax.set_title(title)
    _save(fig, path)


def heatmap(path, x, y, z, title="", xlabel="x1", ylabel="x2"):
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    im = ax.pcolormesh(x, y, z.T, shading="auto", cmap="viridis")
    fig.colorbar(im, ax=ax)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    _save(fig, path)
