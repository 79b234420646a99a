"""Figures written next to the CLI's tabular output."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.figsize": (5.0, 3.1),
    "savefig.dpi": 150,
}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_convergence(log, path, title=None):
    """Outer bounds per outer iteration and inner bounds per inner iteration."""
    with plt.rc_context(STYLE):
        fig, (ax_o, ax_i) = plt.subplots(1, 2, figsize=(7.5, 3.1))
        j = [o.index for o in log.outer]
        ax_o.plot(j, [o.lb for o in log.outer], "o-", label="lower bound", mfc="white")
        ax_o.plot(j, [o.ub for o in log.outer], "s--", label="upper bound", mfc="white")
        ax_o.set_xlabel("Outer iteration")
        ax_o.set_ylabel("Total annual cost (M€)")
        ax_o.set_xticks(j)
        ax_o.legend()
        step = 0
        for o in log.outer:
            its = o.inner.iterations
            x = list(range(step + 1, step + len(its) + 1))
            ax_i.plot(x, [it.lb for it in its], "o-", color="C0", mfc="white")
            ax_i.plot(x, [it.ub for it in its], "s--", color="C1", mfc="white")
            step += len(its)
            ax_i.axvline(step + 0.5, color="0.8", lw=0.6)
        ax_i.set_xlabel("Inner iteration (cumulative)")
        ax_i.set_ylabel("Operating cost (M€)")
        if title:
            fig.suptitle(title)
        return _save(fig, path)


def plot_sweep(rows, axis, path, ylabel="Total annual cost (M€)"):
    """Total annual cost against the sweep axis; failed points are skipped."""
    pts = [(r[axis], r["total_annual_cost"] / 1e3) for r in rows if r.get("total_annual_cost") is not None]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if pts:
            xs, ys = zip(*pts)
            numeric = all(isinstance(x, (int, float)) for x in xs)
            pos = xs if numeric else range(len(xs))
            ax.plot(pos, ys, "o-", mfc="white")
            ax.set_xticks(list(pos))
            if not numeric:
                ax.set_xticklabels([str(x) for x in xs], rotation=30, ha="right")
        ax.set_xlabel("Number of representative days" if axis == "K" else "Uncertainty budgets (D, G, W)")
        ax.set_ylabel(ylabel)
        return _save(fig, path)


def plot_days(days, path):
    """Hourly profiles of each representative day, line width by weight."""
    with plt.rc_context(STYLE):
        sigs = list(days[0].demand_factor) + list(days[0].wind_cf)
        fig, axes = plt.subplots(1, len(sigs), figsize=(3.2 * len(sigs), 2.8), squeeze=False)
        wmax = max(d.weight for d in days)
        for ax, s in zip(axes[0], sigs):
            for d in days:
                prof = d.demand_factor.get(s, d.wind_cf.get(s))
                ax.plot(range(1, len(prof) + 1), prof, lw=0.5 + 2.0 * d.weight / wmax, alpha=0.8)
            ax.set_title(s)
            ax.set_xlabel("Hour")
        axes[0][0].set_ylabel("Factor")
        return _save(fig, path)
