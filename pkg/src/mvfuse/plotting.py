"""Matplotlib figures for comparison reports. Figures are written to files, never shown."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .prior import JOINT_NAMES  # noqa: E402

_STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def _figure(width=6.0, height=None):
    golden = (np.sqrt(5) - 1.0) / 2.0
    return plt.subplots(figsize=(width, height or width * golden))


def plot_per_joint(comparison, path):
    """Grouped bars of mean error per joint, one bar per method."""
    names = comparison["methods"]
    rows = comparison["per_joint"]
    with plt.rc_context(_STYLE):
        fig, ax = _figure(8.0, 3.2)
        k = len(rows)
        width = 0.8 / len(names)
        x = np.arange(k)
        for i, name in enumerate(names):
            ax.bar(x + (i - (len(names) - 1) / 2) * width, [r[name] for r in rows], width, label=name)
        labels = JOINT_NAMES if k == len(JOINT_NAMES) else [str(i) for i in range(k)]
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=70, ha="right")
        ax.set_ylabel("mean error (mm)")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_worst_case(comparison, path):
    names = comparison["methods"]
    rows = comparison["curve"]
    tol = [r["tolerance_mm"] for r in rows]
    with plt.rc_context(_STYLE):
        fig, ax = _figure()
        for name in names:
            ax.plot(tol, [100 * r[name] for r in rows], label=name)
        ax.set_xlabel("error tolerance (mm)")
        ax.set_ylabel("frames with all joints within tolerance (%)")
        ax.set_ylim(0, 100)
        ax.grid(alpha=0.3)
        ax.legend(frameon=False, loc="lower right")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_sweep(rows, path, tolerances=(10.0, 15.0, 20.0, 30.0)):
    """Worst-case accuracy against component count at a few fixed tolerances."""
    ms = [r["components"] for r in rows]
    grid = np.asarray(rows[0]["tolerances_mm"])
    with plt.rc_context(_STYLE):
        fig, ax = _figure()
        for t in tolerances:
            i = int(np.argmin(np.abs(grid - t)))
            ax.plot(ms, [100 * r["fractions"][i] for r in rows], marker="o", ms=3, label=f"{grid[i]:g} mm")
        ax.set_xlabel("number of principal components")
        ax.set_ylabel("good frames (%)")
        ax.set_ylim(0, 100)
        ax.grid(alpha=0.3)
        ax.legend(frameon=False, title="tolerance")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
