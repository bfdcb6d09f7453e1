"""SVG line charts derived from traces."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .benchmark import fit_curve  # noqa: E402
from .trace import RunTrace  # noqa: E402


def plot_trace(trace: RunTrace, path) -> Path:
    """Prefix regret (when recorded) and fit against the slot index, log axes."""
    path = Path(path)
    plt.rcParams["svg.hashsalt"] = "iotopt"
    t = np.arange(1, trace.horizon + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    fit = trace.extras.get("fit", fit_curve(trace))
    ax.plot(t, fit, label="fit")
    if "regret" in trace.extras:
        ax.plot(t, trace.extras["regret"], label="regret")
    ax.set_xscale("log")
    ax.set_yscale("symlog", linthresh=1.0)
    ax.set_xlabel("slot")
    ax.set_title(f"{trace.algo} on {trace.env}, seed {trace.seed}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
