"""Figure rendering for report outputs.

Uses the Agg backend so runs are headless; figures are written as PNG files
with fixed dpi and no timestamp metadata, so identical inputs give identical
bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_SAVE_KW = {"dpi": 150, "metadata": {"Software": "epdkit"}}


def criterion_vs_delta_figure(deltas, series: dict, out_path) -> Path:
    """Mean criterion value against contamination level, one line per criterion.

    series maps a label (e.g. "epdic") to a list of means aligned with deltas.
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label in sorted(series):
        ax.plot(deltas, series[label], marker="o", label=label.upper())
    ax.set_xlabel("contamination fraction")
    ax.set_ylabel("mean criterion value")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_KW)
    plt.close(fig)
    return out_path


def influence_figure(ys, values, out_path, bounded: bool | None = None) -> Path:
    """Influence of a contamination point swept along the response axis."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(ys, values, lw=1.2)
    ax.set_xlabel("contamination point y")
    ax.set_ylabel("criterion influence")
    if bounded is not None:
        ax.set_title("bounded" if bounded else "unbounded")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_KW)
    plt.close(fig)
    return out_path
