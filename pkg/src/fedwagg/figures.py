"""Matplotlib figure rendering for experiment reports.

The report path writes these next to the delimited output: per-step bar
charts of run time and communication for the user/server rows, and a line
chart of per-client disparity cost against local dataset size for sweeps.
"""

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import REPORT_STEP_KEYS, MetricsReport

_BAR_KW = dict(width=0.38, edgecolor="black", linewidth=0.4)


def render_report_figures(report: MetricsReport, outdir: str,
                          stem: str = "report") -> list[str]:
    """Write step-time and step-bytes bar charts; returns the file paths."""
    os.makedirs(outdir, exist_ok=True)
    paths = []
    x = np.arange(len(REPORT_STEP_KEYS))
    panels = (
        ("time", "run time (s)",
         [report.steps[k].user_seconds for k in REPORT_STEP_KEYS],
         [report.steps[k].server_seconds for k in REPORT_STEP_KEYS]),
        ("bytes", "communication (bytes)",
         [report.steps[k].user_bytes for k in REPORT_STEP_KEYS],
         [report.steps[k].server_bytes for k in REPORT_STEP_KEYS]),
    )
    for name, ylabel, user_vals, server_vals in panels:
        fig, ax = plt.subplots(figsize=(6.0, 3.4))
        ax.bar(x - 0.2, user_vals, label="user (avg)", **_BAR_KW)
        ax.bar(x + 0.2, server_vals, label="server (total)", **_BAR_KW)
        ax.set_xticks(x, REPORT_STEP_KEYS)
        ax.set_ylabel(ylabel)
        ax.set_yscale("log" if max(server_vals, default=0) > 0 else "linear")
        title = f"{report.config['n_clients']} clients"
        if report.config.get("baseline"):
            title += ", mask-only baseline"
        ax.set_title(title, fontsize=10)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(outdir, f"{stem}_step_{name}.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths


def render_scaling_figure(sizes, byte_counts, path: str,
                          ylabel: str = "per-client disparity bytes") -> str:
    """Line chart of disparity-phase cost against local dataset size."""
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    ax.plot(sizes, byte_counts, marker="o")
    ax.set_xlabel("samples per client")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
