"""The four standard figures.

fig2  bar comparison of the collaborative solver against the edge-only and
      local-only extremes (energy and average delay panels)
fig3  weight sweeps: energy vs its weight, delay vs its weight, stability
      bound vs its weight, one line per method
fig4  association-stage convergence traces, one curve per server count
fig5  user-count sweeps of energy and average delay, one line per method

Figures are built purely from the CSV; methods absent from the data are
skipped with a warning and never fabricated.  Rendering is deterministic:
no timestamps are embedded, so identical CSV bytes give identical images.
"""

from __future__ import annotations

import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .schema import RESULT_COLUMNS, TRACE_COLUMNS, load_rows

FIGURES = ("fig2", "fig3", "fig4", "fig5")

_BAR_METHODS = ("proposed", "edge_only", "local_only")
_SWEEP_METHODS = ("proposed", "alternating_opt", "alpha_only", "resource_only")
_USER_METHODS = ("proposed", "greedy_assoc", "random_assoc")


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _mean_by(rows, key_fn, value_key):
    """Sorted (key, mean value) pairs over finite entries."""
    groups: dict = {}
    for r in rows:
        v = r[value_key]
        if not np.isfinite(v):
            continue
        groups.setdefault(key_fn(r), []).append(v)
    return sorted((k, float(np.mean(v))) for k, v in groups.items())


def render(fig_id: str, csv_path: str, out_path: str, fmt: str = "png") -> None:
    """Render one figure from a CSV; raises on schema or empty-data problems."""
    if fig_id not in FIGURES:
        raise ValueError(f"unknown figure id {fig_id!r}; expected one of {FIGURES}")
    if fmt not in ("png", "svg"):
        raise ValueError(f"unsupported format {fmt!r}")
    if fig_id == "fig4":
        rows = load_rows(csv_path, TRACE_COLUMNS)
        fig = _fig4(rows)
    else:
        rows = load_rows(csv_path, RESULT_COLUMNS)
        fig = {"fig2": _fig2, "fig3": _fig3, "fig5": _fig5}[fig_id](rows)
    _save(fig, out_path, fmt)


def _save(fig, out_path: str, fmt: str) -> None:
    meta = {"Date": None} if fmt == "svg" else {}
    try:
        fig.savefig(out_path, format=fmt, metadata=meta, dpi=110)
    finally:
        plt.close(fig)


def _fig2(rows):
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.4))
    for ax, col, label in ((axes[0], "energy_J", "total energy [J]"),
                           (axes[1], "avg_delay_s", "average delay [s]")):
        names, vals = [], []
        for method in _BAR_METHODS:
            sub = [r for r in rows if r["method"] == method]
            if not sub:
                _warn(f"fig2: no rows for method {method}, skipping")
                continue
            finite = [r[col] for r in sub if np.isfinite(r[col])]
            if not finite:
                _warn(f"fig2: no finite {col} for {method}, skipping")
                continue
            names.append(method)
            vals.append(float(np.mean(finite)))
        if not names:
            raise ValueError(f"fig2: no usable rows for {col}")
        ax.bar(names, vals, color=["#2c7fb8", "#7fcdbb", "#edf8b1"][: len(names)],
               edgecolor="black", linewidth=0.6)
        ax.set_yscale("log")
        ax.set_ylabel(label)
        ax.tick_params(axis="x", rotation=15)
    fig.suptitle("Collaborative split vs single-side training")
    fig.tight_layout()
    return fig


def _fig3(rows):
    panels = (
        ("omega_e", "energy_J", "energy weight", "total energy [J]"),
        ("omega_t", "avg_delay_s", "delay weight", "average delay [s]"),
        ("omega_s", "stability_bound", "stability weight", "stability bound"),
    )
    fig, axes = plt.subplots(1, 3, figsize=(11.5, 3.4))
    drew_any = False
    for ax, (wcol, vcol, xlabel, ylabel) in zip(axes, panels):
        others = [c for c in ("omega_t", "omega_e", "omega_s") if c != wcol]
        panel_rows = [r for r in rows
                      if all(r[c] == 1.0 for c in others)]
        sweep_vals = sorted({r[wcol] for r in panel_rows})
        if len(sweep_vals) < 2:
            _warn(f"fig3: no {wcol} sweep in the data, panel left empty")
            ax.set_title("(no sweep data)", fontsize=9)
            ax.set_xlabel(xlabel)
            continue
        for method in _SWEEP_METHODS:
            pts = _mean_by([r for r in panel_rows if r["method"] == method],
                           lambda r: r[wcol], vcol)
            if not pts:
                _warn(f"fig3: no rows for method {method} on the {wcol} sweep")
                continue
            ax.plot([p[0] for p in pts], [p[1] for p in pts],
                    marker="o", markersize=3, label=method)
            drew_any = True
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if ax.lines:
            ax.legend(fontsize=7)
    if not drew_any:
        plt.close(fig)
        raise ValueError("fig3: no weight-sweep data for any method")
    fig.suptitle("Performance under weighting factors")
    fig.tight_layout()
    return fig


def _fig4(rows):
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    m_values = sorted({int(r["M"]) for r in rows})
    for m in m_values:
        sub = [r for r in rows if int(r["M"]) == m]
        seeds = sorted({r["seed"] for r in sub})
        first = [r for r in sub if r["seed"] == seeds[0]]
        first.sort(key=lambda r: r["iteration"])
        ax.plot([r["iteration"] for r in first],
                [r["penalized_objective"] for r in first],
                marker="o", markersize=3, label=f"M = {m}")
    ax.set_xlabel("association iteration")
    ax.set_ylabel("penalized association objective")
    ax.legend(fontsize=8)
    fig.suptitle("Association convergence by server count")
    fig.tight_layout()
    return fig


def _fig5(rows):
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.4))
    for ax, col, label in ((axes[0], "energy_J", "total energy [J]"),
                           (axes[1], "avg_delay_s", "average delay [s]")):
        drew = False
        for method in _USER_METHODS:
            pts = _mean_by([r for r in rows if r["method"] == method],
                           lambda r: int(r["N"]), col)
            if not pts:
                _warn(f"fig5: no rows for method {method}, skipping")
                continue
            ax.plot([p[0] for p in pts], [p[1] for p in pts],
                    marker="s", markersize=3, label=method)
            drew = True
        if not drew:
            plt.close(fig)
            raise ValueError(f"fig5: no usable rows for {col}")
        ax.set_xlabel("number of users")
        ax.set_ylabel(label)
        ax.legend(fontsize=8)
    fig.suptitle("Scaling with the user population")
    fig.tight_layout()
    return fig
