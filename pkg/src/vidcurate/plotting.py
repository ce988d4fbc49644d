"""Corpus report: JSON summary, CSV tables and matplotlib figures."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .balance import StatsReport, category_table, dataset_report  # noqa: E402
from .corpus import VideoRecord  # noqa: E402

FIGSIZE = (8, 4.5)
DPI = 120


def _style(ax, title: str, xlabel: str, ylabel: str) -> None:
    ax.set_title(title, fontsize=12)
    ax.set_xlabel(xlabel, fontsize=10)
    ax.set_ylabel(ylabel, fontsize=10)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.tick_params(labelsize=8)


def plot_category_shares(report: StatsReport, path: Path, top_k: int = 30) -> None:
    rows = report.categories[:top_k]
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.bar(range(len(rows)), [100.0 * s for _, _, s in rows], color="#4477aa")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels([c for c, _, _ in rows], rotation=60, ha="right")
    _style(ax, f"Category distribution ({report.total} videos)", "category", "share (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def plot_durations(report: StatsReport, path: Path) -> None:
    labels = [b for b, _ in report.duration_histogram]
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.bar(range(len(labels)), [n for _, n in report.duration_histogram], color="#228833")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    _style(ax, "Video durations", "duration (s)", "videos")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def plot_filter_drops(report: StatsReport, path: Path) -> None:
    names = list(report.filter_drops)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.barh(range(len(names)), [report.filter_drops[n] for n in names], color="#cc6677")
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names)
    _style(ax, "Records dropped per filter", "records", "")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def write_report(records: Sequence[VideoRecord], out_dir: str | Path, figures: bool = True, top_k: int = 10) -> StatsReport:
    """Write ``stats.json``, ``categories.csv``, ``durations.csv`` and, optionally, PNG figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = dataset_report(records, top_k)
    (out_dir / "stats.json").write_text(json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")

    with (out_dir / "categories.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["category", "count", "share"])
        for c, n, s in category_table(report):
            w.writerow([c, n, f"{s:.6f}"])
    with (out_dir / "durations.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin", "count"])
        w.writerows(report.duration_histogram)

    if figures and report.total:
        plot_category_shares(report, out_dir / "category_shares.png")
        plot_durations(report, out_dir / "duration_histogram.png")
        if report.filter_drops:
            plot_filter_drops(report, out_dir / "filter_drops.png")
    return report
