"""Render deviation-versus-age figures next to the CSV output."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_deviation_figures(rows, out_dir) -> list[Path]:
    """One PNG per metric, deviation against epoch age, one line per estimator."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for metric, label in (("absolute", "absolute deviation"), ("relative", "relative deviation")):
        series: dict[str, dict[int, float]] = defaultdict(lambda: defaultdict(float))
        for row in rows:
            series[row.estimator][row.age] += getattr(row, metric)
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for estimator, points in sorted(series.items()):
            ages = sorted(points)
            ax.plot(ages, [points[a] for a in ages], label=estimator, linewidth=1.2)
        ax.set_xlabel("epoch age")
        ax.set_ylabel(label)
        ax.set_yscale("symlog")
        ax.legend()
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = out_dir / f"deviation_{metric}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths
