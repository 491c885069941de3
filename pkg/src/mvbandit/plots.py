"""Figure rendering for the CLI report commands.

PNG files are written with the Agg backend and without the software/date
metadata so reruns produce identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

MAX_POINTS = 10_000

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "legend.fontsize": 8,
    "svg.hashsalt": "mvbandit",
}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def downsample(n: int, limit: int = MAX_POINTS) -> np.ndarray:
    """Indices of at most ``limit`` evenly spaced points out of ``n``."""
    if n <= limit:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, limit).round().astype(int))


def regret_curves(results, path, title: str = "") -> None:
    """Proxy regret against horizon, one line per policy, with 3-se bars."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        by_policy = {}
        for res in results:
            by_policy.setdefault(res.report.policy, []).append(res.report)
        for label, reports in by_policy.items():
            reports = sorted(reports, key=lambda r: r.T)
            T = [r.T for r in reports]
            y = [r.proxy_regret_empirical.value for r in reports]
            err = [3 * np.nan_to_num(r.proxy_regret_empirical.se) for r in reports]
            ax.errorbar(T, y, yerr=err, marker="o", capsize=3, label=label)
        ax.set_xscale("log")
        ax.set_xlabel("horizon T")
        ax.set_ylabel("proxy regret")
        if title:
            ax.set_title(title)
        ax.legend()
        _save(fig, path)


def reward_trace(trace, path, title: str = "") -> None:
    """Observed rewards of a single run against time."""
    idx = downsample(len(trace.rewards))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(idx + 1, np.asarray(trace.rewards)[idx], lw=0.4)
        ax.set_xlabel("t")
        ax.set_ylabel("observed reward")
        if title:
            ax.set_title(title)
        _save(fig, path)


def tail_check(report, path, title: str = "") -> None:
    """Empirical tail frequency against the bound for every grid cell."""
    rows = [r for r in report.rows if r.applicable]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for side, marker in (("upper", "o"), ("lower", "s")):
            sel = [r for r in rows if r.tail_side == side]
            x = np.arange(len(sel))
            ax.plot(x, [min(r.bound, 1.0) for r in sel], marker="_", ls="none", ms=12,
                    color="k", label=f"bound ({side})" if side == "upper" else None)
            ax.plot(x, [r.empirical for r in sel], marker=marker, ls="none", label=f"empirical ({side})")
        ax.set_xlabel("grid cell (s, delta)")
        ax.set_ylabel("tail probability")
        if title:
            ax.set_title(title)
        ax.legend()
        _save(fig, path)


def minimax_scaling(rows, slope, path) -> None:
    """Log-log plot of the worst-case regret over each adversarial pair."""
    T = np.array([r.T for r in rows], dtype=float)
    y = np.array([r.max_regret for r in rows])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(T, y, "o-", label="max regret over pair")
        if slope is not None:
            ref = y[0] * (T / T[0]) ** (2.0 / 3.0)
            ax.loglog(T, ref, "--", color="gray", label="T^(2/3) reference")
            ax.set_title(f"fitted slope {slope:.3f}")
        ax.set_xlabel("horizon T")
        ax.set_ylabel("proxy regret")
        ax.legend()
        _save(fig, path)
