"""Figures for the CLI outputs.  Everything here renders to files."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.bbox": "tight",
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def loglog_profile(radii, values, path, title="", ylabel="value", scaled=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(radii, np.maximum(values, 1e-300), "o-", ms=3, label=ylabel)
        if scaled is not None:
            ax.semilogx(radii, scaled, "s--", ms=3, label="scaled")
        ax.set_xlabel("r")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def x_curves(curves: dict, path, title=""):
    """``curves`` maps a label to (w = ln ln(1/r), ln X)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, (xs, ys) in curves.items():
            ys = np.asarray(ys, dtype=float)
            ok = np.isfinite(ys)
            ax.semilogx(np.asarray(xs)[ok], ys[ok], ".-", label=label)
        ax.set_xlabel("ln ln(1/r)")
        ax.set_ylabel("ln X(C, r)")
        ax.set_title(title)
        ax.legend(fontsize=8)
        return _save(fig, path)


def solution_map(x, y, values, path, title=""):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        m = int(round(np.sqrt(len(values))))
        im = ax.imshow(np.reshape(values, (m, m)).T, origin="lower", extent=(x.min(), x.max(), y.min(), y.max()),
                       cmap="viridis")
        fig.colorbar(im, ax=ax)
        ax.set_title(title)
        ax.grid(False)
        return _save(fig, path)


def cascade_plot(R, a, b, path, title=""):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.semilogx(R, a, "o-", label="a_k")
        ax.semilogx(R, b, "s-", label="b_k")
        ax.invert_xaxis()
        ax.set_xlabel("R_k")
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def ratio_plot(r, ratio, path, title=""):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.semilogx(r, ratio, "o-")
        ax.set_xlabel("scale")
        ax.set_ylabel("lhs / rhs")
        ax.set_title(title)
        return _save(fig, path)


def residual_curves(r, curves: dict, path, title=""):
    """``curves`` maps a variant name to its |residual| on ``r``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, res in curves.items():
            ax.loglog(r, np.maximum(res, 1e-300), "-", label=label)
        ax.set_xlabel("r")
        ax.set_ylabel("|radial residual|")
        ax.set_title(title)
        ax.legend(fontsize=8)
        return _save(fig, path)
