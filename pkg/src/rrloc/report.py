"""Figure rendering for benchmark outputs.

Consumes the delimited files the harness writes (``errors.csv``,
``ranks.csv``) and renders three figures next to them: mean localization
error per index family over all iterations, the same restricted to the last
two iterations, and a histogram of the selected ranks.  The CSV files stay
the canonical output; figures are a convenience view.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # file rendering only; no display required
import matplotlib.pyplot as plt
import numpy as np

from .config import ConfigError
from .matcore import ContractViolation

FIG_SIZE = (7.0, 4.0)
BAR_COLORS = "tab10"


def read_errors_csv(path: str | Path) -> list[dict]:
    """Rows of errors.csv with typed fields."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"missing errors file: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        {
            "run_id": int(r["run_id"]),
            "snr_db": float(r["snr_db"]),
            "index": r["index"],
            "iteration": int(r["iteration"]),
            "error_mm": float(r["error_mm"]),
        }
        for r in rows
    ]


def read_ranks_csv(path: str | Path) -> list[dict]:
    """Rows of ranks.csv with typed fields."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"missing ranks file: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        {"snr_db": float(r["snr_db"]), "rank": int(r["rank"]),
         "count": int(r["count"])}
        for r in rows
    ]


def _pool(rows: list[dict], scope: str) -> dict:
    """(snr_db, index) -> error array, restricted to the requested scope."""
    if scope == "last_two":
        max_iter: dict[tuple, int] = {}
        for r in rows:
            key = (r["snr_db"], r["index"], r["run_id"])
            max_iter[key] = max(max_iter.get(key, 0), r["iteration"])
        rows = [
            r for r in rows
            if r["iteration"] >= max_iter[(r["snr_db"], r["index"], r["run_id"])] - 1
        ]
    elif scope != "all_iterations":
        raise ContractViolation(f"unknown scope {scope!r}")
    pools: dict[tuple, list[float]] = {}
    for r in rows:
        pools.setdefault((r["snr_db"], r["index"]), []).append(r["error_mm"])
    return {k: np.array(v) for k, v in sorted(pools.items())}


def error_bar_chart(rows: list[dict], scope: str, path: str | Path,
                    title: str) -> Path:
    """Grouped bars: mean error (+- sample std) per index family and SNR."""
    pools = _pool(rows, scope)
    if not pools:
        raise ContractViolation("no error rows to plot")
    snrs = sorted({k[0] for k in pools})
    labels = sorted({k[1] for k in pools})
    width = 0.8 / len(labels)
    cmap = plt.get_cmap(BAR_COLORS)

    fig, ax = plt.subplots(figsize=FIG_SIZE)
    base = np.arange(len(snrs))
    for j, label in enumerate(labels):
        means = [pools[(s, label)].mean() if (s, label) in pools else np.nan
                 for s in snrs]
        stds = [pools[(s, label)].std(ddof=1) if (s, label) in pools
                and len(pools[(s, label)]) > 1 else 0.0 for s in snrs]
        ax.bar(base + (j - (len(labels) - 1) / 2) * width, means, width,
               yerr=stds, capsize=2, label=label, color=cmap(j % 10))
    ax.set_xticks(base)
    ax.set_xticklabels([f"{s:g}" for s in snrs])
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("localization error [mm]")
    ax.set_title(title)
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path


def rank_hist_chart(rows: list[dict], path: str | Path) -> Path:
    """Bars of how often each rank was selected, grouped by SNR."""
    if not rows:
        raise ContractViolation("no rank rows to plot")
    snrs = sorted({r["snr_db"] for r in rows})
    ranks = sorted({r["rank"] for r in rows})
    counts = {(r["snr_db"], r["rank"]): r["count"] for r in rows}
    width = 0.8 / len(snrs)
    cmap = plt.get_cmap(BAR_COLORS)

    fig, ax = plt.subplots(figsize=FIG_SIZE)
    base = np.arange(len(ranks))
    for j, snr in enumerate(snrs):
        heights = [counts.get((snr, r), 0) for r in ranks]
        ax.bar(base + (j - (len(snrs) - 1) / 2) * width, heights, width,
               label=f"{snr:g} dB", color=cmap(j % 10))
    ax.set_xticks(base)
    ax.set_xticklabels([str(r) for r in ranks])
    ax.set_xlabel("selected rank")
    ax.set_ylabel("runs")
    ax.set_title("Rank selection across runs")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path


def render_report(csv_dir: str | Path, out_dir: str | Path | None = None,
                  fmt: str = "svg") -> list[Path]:
    """Render the three standard figures from a directory of benchmark CSVs."""
    csv_dir = Path(csv_dir)
    out_dir = csv_dir if out_dir is None else Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    error_rows = read_errors_csv(csv_dir / "errors.csv")
    rank_rows = read_ranks_csv(csv_dir / "ranks.csv")
    written = [
        error_bar_chart(error_rows, "all_iterations",
                        out_dir / f"errors_all_iterations.{fmt}",
                        "Mean error, all iterations"),
        error_bar_chart(error_rows, "last_two",
                        out_dir / f"errors_last_two.{fmt}",
                        "Mean error, last two iterations"),
        rank_hist_chart(rank_rows, out_dir / f"ranks.{fmt}"),
    ]
    return written
