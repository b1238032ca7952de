"""PNG figures written next to the CSV output.

Uses the Agg backend and strips the software tag from PNG metadata so that
identical inputs give identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def plot_dims(rows: list[dict], out: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    eps = np.array([r["eps"] for r in rows])
    order = np.argsort(eps)
    for key in ("d_coordinate_kolmogorov", "d_truncation", "d_u", "d_l"):
        ax.plot(eps[order], np.array([r[key] for r in rows])[order], marker="o", label=key)
    ax.set_xscale("log")
    ax.set_xlabel("eps")
    ax.set_ylabel("dimension")
    ax.legend()
    return _save(fig, out / "dims.png")


def plot_bars(labels: list[str], values: list[float], errs: list[float], ref: float | None,
              ylabel: str, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(max(6, 0.25 * len(labels)), 4))
    x = np.arange(len(labels))
    ax.bar(x, values, yerr=errs, color="tab:blue", alpha=0.8)
    if ref is not None:
        ax.axhline(ref, color="tab:red", ls="--", lw=1)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=90, fontsize=6)
    ax.set_ylabel(ylabel)
    return _save(fig, path)


def plot_rate_fit(points: list[tuple[float, float]], slope: float, intercept: float, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    x = np.array([p[0] for p in points])
    y = np.array([p[1] for p in points])
    ax.plot(x, y, "o", label="search")
    xs = np.linspace(x.min(), x.max(), 50)
    ax.plot(xs, intercept + slope * xs, "-", label=f"slope {slope:.3f}")
    ax.set_xlabel("log(1/eps)")
    ax.set_ylabel("log n*")
    ax.legend()
    return _save(fig, path)


def plot_region(cells: list[dict], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    for flag, color, label in ((True, "tab:green", "feasible (MC)"), (False, "tab:red", "infeasible (MC)")):
        pts = [(c["n"], c["m"]) for c in cells if bool(c["feasible"]) == flag]
        if pts:
            ax.scatter(*zip(*pts), c=color, label=label, s=30)
    suff = [(c["n"], c["m"]) for c in cells if c.get("sufficient_lp")]
    if suff:
        ax.scatter(*zip(*suff), facecolors="none", edgecolors="k", s=80, label="sufficient (analytic)")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("m")
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_min_m(rows: list[dict], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    pts = [(r["n"], r["m_min"]) for r in rows if r["resolved"]]
    if pts:
        ax.loglog(*zip(*pts), "o-")
    ax.set_xlabel("n")
    ax.set_ylabel("smallest feasible m")
    return _save(fig, path)
