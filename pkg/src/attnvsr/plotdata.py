"""Tidy plot tables (median and standard deviation across seeds) from run directories."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import numpy as np

from .io import read_csv, write_csv

LONG_COLUMNS = ["condition", "seed", "x", "y"]
SUMMARY_COLUMNS = ["condition", "x", "median", "std", "n_seeds"]

# bundle name -> (run file, x column, y columns)
_SOURCES = {
    "evolution": ("summary.csv", "n_evals", ["best_fitness"]),
    "reassess": ("reassess.csv", "index", ["velocity"]),
    "ablation": ("ablation.csv", "snapshot_time", ["velocity"]),
    "alpha_eta": ("alpha_eta.csv", "n_evals", ["alpha", "eta"]),
}


def _run_dirs(runs_dir: Path):
    """``(condition, seed, path)`` for every ``<condition>/<seed>/`` under ``runs_dir``."""
    out = []
    for cond in sorted(p for p in runs_dir.iterdir() if p.is_dir()):
        for seed_dir in sorted((p for p in cond.iterdir() if p.is_dir()), key=lambda p: (len(p.name), p.name)):
            out.append((cond.name, seed_dir.name, seed_dir))
    return out


def summarize(long_rows: list[list]) -> list[list]:
    """Median and population standard deviation of ``y`` per ``(condition, x)``."""
    groups: dict[tuple, list[float]] = defaultdict(list)
    for condition, _seed, x, y in long_rows:
        groups[(condition, x)].append(y)
    out = []
    for (condition, x), ys in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        arr = np.asarray(ys, dtype=float)
        out.append([condition, x, float(np.median(arr)), float(np.std(arr)), len(arr)])
    return out


def build_plot_bundle(runs_dir: Path, out_dir: Path) -> list[Path]:
    runs_dir = Path(runs_dir)
    if not runs_dir.is_dir():
        raise ValueError(f"runs directory {runs_dir} does not exist")
    runs = _run_dirs(runs_dir)
    if not runs:
        raise ValueError(f"no run records under {runs_dir}")
    written = []
    for bundle, (filename, xcol, ycols) in _SOURCES.items():
        long_rows = []
        for condition, seed, path in runs:
            src = path / filename
            if not src.exists():
                continue
            for row in read_csv(src):
                for ycol in ycols:
                    label = condition if len(ycols) == 1 else f"{condition}:{ycol}"
                    long_rows.append([label, seed, float(row[xcol]), float(row[ycol])])
        if not long_rows:
            continue
        written.append(write_csv(Path(out_dir) / f"{bundle}.csv", LONG_COLUMNS, long_rows))
        written.append(write_csv(Path(out_dir) / f"{bundle}_summary.csv", SUMMARY_COLUMNS, summarize(long_rows)))
    if not written:
        raise ValueError(f"no run records under {runs_dir}")
    return written
