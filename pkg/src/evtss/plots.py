"""Static SVG figures with byte-stable output."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "evtss"
plt.rcParams["svg.fonttype"] = "none"
_META = {"Date": None, "Creator": None}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def qq_svg(qq, path, title="Gumbel QQ plot") -> None:
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.fill_between(qq.theoretical, qq.lower, qq.upper, color="0.85", label="simulation envelope")
    ax.plot(qq.theoretical, qq.empirical, "o", ms=2.5, color="C0", label="residuals")
    lim = [min(qq.theoretical.min(), qq.empirical.min()), max(qq.theoretical.max(), qq.empirical.max())]
    ax.plot(lim, lim, "k-", lw=0.8)
    ax.set_xlabel("standard Gumbel quantile")
    ax.set_ylabel("standardized residual")
    ax.set_title(title)
    ax.legend(loc="upper left", fontsize=7)
    _save(fig, path)


def density_svg(x, grid, pdf, path, title="Fitted density") -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(x, bins=min(50, max(10, len(x) // 15)), density=True, color="0.8", edgecolor="0.6")
    ax.plot(grid, pdf, "C3-", lw=1.5)
    ax.axvline(0.0, color="k", ls=":", lw=0.8)
    ax.set_xlabel("negated measure")
    ax.set_ylabel("density")
    ax.set_title(title)
    _save(fig, path)


def sweep_svg(results, path, title="Threshold sensitivity") -> None:
    """One column per parameter plus the probability panel; variants overlaid."""
    method = results[0].method
    keys = ["mu", "sigma", "xi"] if method == "bm" else ["sigma", "xi"]
    fig, axes = plt.subplots(1, len(keys) + 1, figsize=(3.2 * (len(keys) + 1), 3))
    for k, sr in enumerate(results):
        pts = sr.successful()
        t = np.array([p.threshold for p in pts])
        style = dict(color=f"C{k}", marker="o", ms=3, lw=1, label=sr.variant)
        for ax, key in zip(axes, keys):
            est = np.array([p.params[key] for p in pts])
            se = np.array([p.se[key] for p in pts])
            ax.plot(t, est, **style)
            ax.fill_between(t, est - 1.96 * se, est + 1.96 * se, color=f"C{k}", alpha=0.15)
            ax.set_title(key)
        axes[-1].plot(t, [p.p_model for p in pts], **style)
    first = results[0]
    axes[-1].plot(first.grid, [p.p_empirical for p in first.points], "k--", lw=1, label="empirical")
    axes[-1].set_title("collision probability")
    axes[-1].legend(fontsize=7)
    for ax in axes:
        ax.set_xlabel("threshold (s)")
    fig.suptitle(title)
    fig.tight_layout()
    _save(fig, path)


def contour_svg(xg, yg, z, path, points=None, title="Joint density") -> None:
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    if points is not None:
        ax.plot(points[0], points[1], ".", ms=2, color="0.6")
    ax.contour(xg, yg, z, levels=8, colors="C0", linewidths=0.8)
    ax.axvline(0.0, color="k", ls=":", lw=0.8)
    ax.axhline(0.0, color="k", ls=":", lw=0.8)
    ax.set_xlabel("-TTC")
    ax.set_ylabel("-THW")
    ax.set_title(title)
    _save(fig, path)
