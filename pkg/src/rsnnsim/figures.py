"""Figure rendering for reports: trend curves and per-layer breakdowns."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import ConfigError


def _plot_sweep_t(report: dict, ax):
    ts = [r["T"] for r in report["rows"]]
    cycles = [r["total_cycles"] for r in report["rows"]]
    ax.plot(ts, cycles, marker="o", color="tab:blue")
    ax.set_xlabel("time steps")
    ax.set_ylabel("total cycles")
    ax.set_title("latency versus spike-train length")
    ax.set_xticks(ts)
    ax.grid(True, alpha=0.3)


def _plot_sweep_units(report: dict, ax):
    us = [r["conv_units"] for r in report["rows"]]
    cycles = [r["total_cycles"] for r in report["rows"]]
    ax.plot(us, cycles, marker="s", color="tab:orange")
    for r in report["rows"]:
        ax.annotate(f"{r['speedup_vs_baseline']:.2f}x",
                    (r["conv_units"], r["total_cycles"]),
                    textcoords="offset points", xytext=(6, 6), fontsize=8)
    ax.set_xlabel("convolution units")
    ax.set_ylabel("total cycles")
    ax.set_title("latency versus convolution units")
    ax.set_xticks(us)
    ax.grid(True, alpha=0.3)


def _plot_layer_breakdown(report: dict, ax):
    layers = report["cycle_report"]["layers"]
    names = [f"{l['index']}: {l['detail']}" for l in layers]
    compute = [l["compute_cycles"] for l in layers]
    fetch = [l["weight_fetch_cycles"] for l in layers]
    pos = range(len(layers))
    ax.barh(pos, compute, color="tab:blue", label="compute")
    ax.barh(pos, fetch, left=compute, color="tab:red", label="weight fetch")
    ax.set_yticks(list(pos), names)
    ax.invert_yaxis()
    ax.set_xlabel("cycles")
    ax.set_title("per-layer cycle breakdown")
    ax.legend(loc="lower right", fontsize=8)


def render_figure(report: dict, path: str | Path):
    """Save a PNG matching the report kind next to its delimited output."""
    kind = report.get("kind")
    fig, ax = plt.subplots(figsize=(6, 4))
    try:
        if kind == "sweep_t":
            _plot_sweep_t(report, ax)
        elif kind == "sweep_units":
            _plot_sweep_units(report, ax)
        elif kind in ("inference", "oracle", "evaluate") and "cycle_report" in report:
            _plot_layer_breakdown(report, ax)
        else:
            raise ConfigError(f"no figure rendering for report kind {kind!r}")
        fig.tight_layout()
        fig.savefig(path, dpi=150)
    finally:
        plt.close(fig)
