"""PNG figures for reports.  Files are byte-stable for equal inputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .backtest import BacktestReport  # noqa: E402
from .barcon import OfferingCurve  # noqa: E402

# no timestamps or version strings in the PNG metadata
_META = {"Software": None}


def _save(fig, target):
    """Write PNG bytes to a path or a binary file object."""
    if isinstance(target, (str, Path)):
        target = Path(target)
    fig.savefig(target, format="png", dpi=100, metadata=_META)
    plt.close(fig)
    return target


def plot_profit_vs_gamma(report: BacktestReport, path):
    """Yearly profit against the budget, one line per (unit, J), best budget marked."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for row in report.rows:
        gammas = list(row.yearly)
        ax.plot(gammas, [row.yearly[g] / 1e3 for g in gammas], marker="o", ms=3, label=f"{row.unit}, J={row.trim}")
        ax.plot([row.gamma_best], [row.best / 1e3], marker="*", ms=12, color="black")
    ax.set_xlabel("budget of uncertainty (hours)")
    ax.set_ylabel("yearly profit (kEUR)")
    ax.grid(alpha=0.3)
    if report.rows:
        ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_curves(curve: OfferingCurve, path):
    """Step offering curves, one panel per hour."""
    T = curve.horizon
    cols = min(T, 4)
    rows = -(-T // cols)
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 2.8 * rows), squeeze=False)
    for t, hour in enumerate(curve.steps):
        ax = axes[t // cols][t % cols]
        qs = [0.0] + [q for q, _ in hour]
        ps = [hour[0][1]] + [p for _, p in hour]
        ax.step(qs, ps, where="pre")
        ax.plot([q for q, _ in hour], [p for _, p in hour], "o", ms=4)
        ax.set_title(f"hour {t + 1}", fontsize=9)
        ax.set_xlabel("MW", fontsize=8)
        ax.set_ylabel("EUR/MWh", fontsize=8)
        ax.grid(alpha=0.3)
    for k in range(T, rows * cols):
        axes[k // cols][k % cols].set_visible(False)
    fig.tight_layout()
    return _save(fig, path)
