"""Deterministic SVG figures (no timestamps, fixed element ids)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "latentgeo", "svg.fonttype": "none", "font.size": 9}
COLORS = {"Linear": "tab:blue", "SqDiff": "tab:orange", "SqDiffD": "tab:green",
          "Feat": "tab:red", "FeatD": "tab:purple", "LinearSample": "tab:gray"}


def _save(fig, path):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fig.savefig(fh, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    tmp.replace(path)


def trace_bands(summaries, path, ylabel="normalized critic", title=None):
    """Mean +- 1 standard error per position, one band per method."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for name, s in summaries.items():
            pos = np.linspace(0.0, 1.0, len(s.mean))
            c = COLORS.get(name)
            ax.plot(pos, s.mean, color=c, label=f"{name} (n={s.n_paths})", lw=1.2)
            ax.fill_between(pos, s.mean - s.stderr, s.mean + s.stderr, color=c, alpha=0.25, lw=0)
        ax.set_xlabel("position along path")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(fontsize=7)
        fig.tight_layout()
        _save(fig, path)


def path_comparison(reports, path, data=None, latent_background=None):
    """Paths in latent space (left, if available) and sample space (right).

    ``latent_background`` is ``(extent, image)`` drawn under the latent paths,
    e.g. discriminator values over a latent grid.
    """
    with plt.rc_context(_RC):
        fig, (axz, axx) = plt.subplots(1, 2, figsize=(8, 4))
        if latent_background is not None:
            extent, img = latent_background
            axz.imshow(img, origin="lower", extent=extent, cmap="gray", aspect="auto")
        if data is not None:
            axx.scatter(data[:, 0], data[:, 1], s=1, c="orange", alpha=0.3, lw=0)
        for r in reports:
            c = COLORS.get(r.method)
            if r.z is not None and r.z.shape[1] >= 2:
                axz.plot(r.z[:, 0], r.z[:, 1], color=c, lw=1.2, label=r.method)
            if r.x.shape[1] >= 2:
                axx.plot(r.x[:, 0], r.x[:, 1], color=c, lw=1.2, label=r.method)
        axz.set_title("latent space")
        axx.set_title("sample space")
        axx.set_aspect("equal", adjustable="datalim")
        axx.legend(fontsize=7)
        fig.tight_layout()
        _save(fig, path)


def histogram(hist, path, xlabel="critic value"):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        width = np.diff(hist.edges)
        ax.bar(hist.edges[:-1], hist.real, width, align="edge", alpha=0.5, label="real", color="tab:blue")
        ax.bar(hist.edges[:-1], hist.fake, width, align="edge", alpha=0.5, label="generated", color="tab:orange")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("count")
        ax.legend(fontsize=7)
        fig.tight_layout()
        _save(fig, path)
