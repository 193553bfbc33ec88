"""CSV and genotype file persistence.

All CSVs are written with a header, '.' decimals, LF line endings and
shortest round-trip float formatting, so rewriting from the same data is
byte-identical.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .controllers import ControllerSpec, layout_descriptor, parse_layout_descriptor
from .morphology import SENSOR_NAMES

EVALS_COLUMNS = ["eval_index", "generation", "slot", "kind", "genotype_id", "fitness", "terrain_seed"]
SUMMARY_COLUMNS = ["generation", "n_evals", "best_fitness", "median_fitness", "best_genotype_id"]


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def write_dict_rows(path: Path, columns: Sequence[str], rows: Iterable[dict]) -> Path:
    return write_csv(path, columns, ([r[c] for c in columns] for r in rows))


def read_csv(path: Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_run_record(out_dir: Path, record, extra_summary: dict[str, list] | None = None) -> None:
    """``evals.csv`` and ``summary.csv``; ``extra_summary`` adds per-generation columns."""
    out_dir = Path(out_dir)
    write_dict_rows(out_dir / "evals.csv", EVALS_COLUMNS, record.evals)
    columns = list(SUMMARY_COLUMNS)
    rows = [dict(r) for r in record.generations]
    for name, vals in (extra_summary or {}).items():
        columns.append(name)
        for row, v in zip(rows, vals):
            row[name] = v
    write_dict_rows(out_dir / "summary.csv", columns, rows)


def write_genotype(path: Path, genotype, spec: ControllerSpec, n: int) -> Path:
    """First line is the layout descriptor, then one value per line (17 significant digits)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# " + layout_descriptor(spec, n)] + [f"{float(v):.17g}" for v in genotype]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_genotype(path: Path) -> tuple[np.ndarray, dict]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing layout descriptor header")
    meta = parse_layout_descriptor(lines[0].lstrip("# "))
    values = np.array([float(x) for x in lines[1:] if x.strip()])
    if len(values) != meta["p"]:
        raise ValueError(f"{path}: header declares {meta['p']} values, found {len(values)}")
    return values, meta


def trajectory_columns(n: int) -> list[str]:
    return (["step", "time", "com_x", "com_y"] + [f"area_{i}" for i in range(n)]
            + [f"actuation_{i}" for i in range(n)])


def write_trajectory(path: Path, rows: list[dict], n: int) -> Path:
    return write_csv(path, trajectory_columns(n), (
        [r["step"], r["time"], r["com_x"], r["com_y"], *r["area"], *r["actuation"]] for r in rows))


ATTENTION_COLUMNS = (["time", "voxel"] + [f"a{r}{c}" for r in range(4) for c in range(4)]
                     + [f"s_{name}" for name in SENSOR_NAMES] + ["actuation"])


def write_attention_frames(path: Path, frames: list[dict]) -> Path:
    return write_csv(path, ATTENTION_COLUMNS, (
        [f["time"], f["voxel"], *f["A"], *f["s"], f["a"]] for f in frames))
