"""Plot exported plan traces over the scenario map."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from .sim import Scenario, read_events_csv, read_plans_csv  # noqa: E402


def plot_traces(scenario: Scenario, prefix: str | Path, output: str | Path | None = None) -> Path:
    """Draw every searched plan plus the event footprints; returns the image path."""
    prefix = str(prefix)
    plans = read_plans_csv(prefix + ".plans.csv")
    events = read_events_csv(prefix + ".events.csv")
    out = Path(output) if output else Path(prefix + ".png")

    base = scenario.base_map
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(base.lethal_mask(), cmap="Greys", origin="upper", interpolation="nearest")
    for ev in events:
        r, c, w, h = ev["rect"]
        color = "tab:red" if ev["action"] == "add" else "tab:green"
        ax.add_patch(Rectangle((c - 0.5, r - 0.5), w, h, color=color, alpha=0.6))
        ax.annotate(f"obstacle {ev['event'] + 1}", (c + w / 2, r - 1), ha="center", fontsize=7)
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for i, plan in enumerate(plans):
        rows = [cell.row for cell in plan["cells"]]
        cols = [cell.col for cell in plan["cells"]]
        label = f"{plan['outcome']} @ t={plan['time']:.1f}s"
        ax.plot(cols, rows, color=colors[i % len(colors)], linewidth=1.5, label=label)
    ax.plot(scenario.start.col, scenario.start.row, "go", label="start")
    ax.plot(scenario.goal.col, scenario.goal.row, "b*", markersize=10, label="goal")
    ax.set_xlim(-0.5, base.width - 0.5)
    ax.set_ylim(base.height - 0.5, -0.5)
    ax.legend(loc="lower right", fontsize=7)
    ax.set_title(Path(prefix).name, fontsize=9)
    fig.tight_layout()
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
