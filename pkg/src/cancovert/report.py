"""Figure rendering for the report commands.

All figures are written straight to files (Agg backend); the CSVs stay the
machine-readable contract, figures are the human-readable companion.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

BER_FLOOR = 1e-8  # display floor so zero-error points survive the log axis


def ber_figure(rows, path) -> Path:
    """BER and erasure rate vs window length, one line per message."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    messages = sorted({r["message"] for r in rows})
    for name in messages:
        pts = sorted((r for r in rows if r["message"] == name),
                     key=lambda r: r["window"])
        ls = [r["window"] for r in pts]
        ber = [max(float(r["ber"]), BER_FLOOR) for r in pts]
        line, = ax.plot(ls, ber, marker="o", label=f"{name} BER")
        if any(float(r.get("erasures", 0)) for r in pts):
            er = [max(float(r["erasures"]) / max(int(r["bits"]), 1), BER_FLOOR)
                  for r in pts]
            ax.plot(ls, er, marker="x", linestyle="--",
                    color=line.get_color(), alpha=0.6,
                    label=f"{name} erasures")
    ax.set_yscale("log")
    ax.set_xlabel("window length L")
    ax.set_ylabel("rate per transmitted bit")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def sched_figure(rows, path) -> Path:
    """Baseline vs channel-adjusted worst-case response times."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    labels = [r["can_id"] for r in rows]
    x = np.arange(len(labels))
    base = [1e3 * float(r["baseline_response"]) for r in rows]
    adj = [1e3 * float(r["adjusted_response"]) for r in rows]
    width = 0.38
    ax.bar(x - width / 2, base, width, label="baseline")
    ax.bar(x + width / 2, adj, width, label="channel active")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("worst-case response (ms)")
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def iat_trace_figure(iats, period, deviation, path, max_points=400) -> Path:
    """Observed IATs with the slicing thresholds overlaid."""
    path = Path(path)
    iats = np.asarray(iats, dtype=float)[:max_points]
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.step(np.arange(len(iats)), 1e3 * iats, where="mid", linewidth=0.8)
    for level, style in ((period, "-"), (period + deviation / 2, "--"),
                         (period - deviation / 2, "--")):
        ax.axhline(1e3 * level, color="gray", linestyle=style, linewidth=0.7)
    ax.set_xlabel("message index")
    ax.set_ylabel("inter-arrival time (ms)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def offset_trace_figure(offsets, margin, path, max_points=800) -> Path:
    """Accumulated offsets with the batch midpoint thresholds."""
    path = Path(path)
    offsets = np.asarray(offsets, dtype=float)[:max_points]
    kappa = (offsets.max() + offsets.min()) / 2.0 if len(offsets) else 0.0
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.plot(np.arange(1, len(offsets) + 1), 1e3 * offsets, linewidth=0.8)
    for level in (kappa, kappa + margin, kappa - margin):
        ax.axhline(1e3 * level, color="gray", linestyle="--", linewidth=0.7)
    ax.set_xlabel("message index")
    ax.set_ylabel("accumulated offset (ms)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
