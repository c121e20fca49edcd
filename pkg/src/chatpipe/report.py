"""Evaluation report writers: a human-readable table, a tab-delimited
file, a machine-readable JSON document, and a bar-chart figure rendered
next to them.
"""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

__all__ = ["format_table", "write_report"]


def format_table(metrics: dict[str, float], skipped: dict[str, str]) -> str:
    width = max([len(k) for k in list(metrics) + list(skipped)] + [6])
    lines = [f"{'metric':<{width}}  value", f"{'-' * width}  {'-' * 10}"]
    for name, value in metrics.items():
        lines.append(f"{name:<{width}}  {value:.4f}")
    for name, reason in skipped.items():
        lines.append(f"{name:<{width}}  skipped ({reason})")
    return "\n".join(lines)


def _render_figure(metrics: dict[str, float], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(metrics)), 3.2))
    names = list(metrics)
    values = [metrics[n] for n in names]
    ax.bar(names, values, color="#4878a8")
    ax.set_ylabel("value")
    ax.set_title("evaluation metrics")
    for i, v in enumerate(values):
        ax.text(i, v, f"{v:.3f}", ha="center", va="bottom", fontsize=8)
    ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(
    metrics: dict[str, float],
    skipped: dict[str, str],
    outdir,
    extra: dict | None = None,
) -> dict[str, Path]:
    """Write report.json, report.tsv and metrics.png under ``outdir``.

    Returns the paths written, keyed by artifact kind.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": outdir / "report.json",
        "tsv": outdir / "report.tsv",
        "figure": outdir / "metrics.png",
    }
    document = {"metrics": metrics, "skipped": skipped}
    if extra:
        document.update(extra)
    paths["json"].write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    rows = ["metric\tvalue"]
    rows += [f"{name}\t{value:.9f}" for name, value in metrics.items()]
    rows += [f"{name}\tskipped: {reason}" for name, reason in skipped.items()]
    paths["tsv"].write_text("\n".join(rows) + "\n", encoding="utf-8")
    if metrics:
        _render_figure(metrics, paths["figure"])
    else:
        paths.pop("figure")
    return paths
