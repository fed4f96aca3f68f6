"""Static SVG figures.  Everything plotted here is also written to CSV."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "tppca"


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def histogram(values, path, xlabel, title=None, bins=30, reference=None):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(np.asarray(values, dtype=float), bins=bins, color="tab:blue", alpha=0.8)
    if reference is not None:
        ax.axvline(reference, color="k", ls="--", lw=1)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    _save(fig, path)


def iteration_histograms(counts, path):
    """Overlaid histograms of iteration counts, one per initializer."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    counts = {label: c for label, c in counts.items() if len(c)}
    top = max((max(c) for c in counts.values()), default=1)
    bins = np.arange(0.5, top + 1.5)
    for label, c in counts.items():
        ax.hist(c, bins=bins, alpha=0.6, label=label)
    ax.set_xlabel("iterations until convergence")
    ax.set_ylabel("count")
    if counts:
        ax.legend()
    _save(fig, path)


def scree_plot(scree_rows, path):
    idx = [r[0] for r in scree_rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(idx, [r[1] for r in scree_rows], "o-", color="tab:blue")
    ax.set_xlabel("component")
    ax.set_ylabel("eigenvalue")
    ax2 = ax.twinx()
    ax2.plot(idx, [r[2] for r in scree_rows], "s--", color="tab:orange", ms=3)
    ax2.set_ylabel("cumulative fraction")
    ax2.set_ylim(0, 1.05)
    _save(fig, path)


def shape_overlay(original, reduced, roots, path):
    """Landmark shapes: originals, reduced shapes and root estimates.

    ``original``/``reduced`` have shape ``(N, n, 2)``; ``roots`` maps a label
    to an ``(n, 2)`` array.
    """
    fig, ax = plt.subplots(figsize=(6, 5))
    o = np.asarray(original).reshape(-1, 2)
    ax.scatter(o[:, 0], o[:, 1], s=6, color="tab:blue", alpha=0.5, label="observed")
    if reduced is not None:
        r = np.asarray(reduced).reshape(-1, 2)
        ax.scatter(r[:, 0], r[:, 1], s=6, color="tab:red", alpha=0.5, label="reduced")
    markers = iter(["tab:green", "k", "tab:purple"])
    for label, shape in roots.items():
        s = np.asarray(shape).reshape(-1, 2)
        ax.scatter(s[:, 0], s[:, 1], marker="+", s=80, color=next(markers), label=label)
    for i, (x, y) in enumerate(np.asarray(next(iter(roots.values()))).reshape(-1, 2)):
        ax.annotate(str(i + 1), (x, y), fontsize=7, xytext=(3, 3), textcoords="offset points")
    ax.set_aspect("equal")
    ax.legend(fontsize=8)
    _save(fig, path)
