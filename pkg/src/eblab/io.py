"""CSV input and output. Floats are written with 17 significant digits."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import DomainError
from .posterior import DensityGrid


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_design_csv(path) -> np.ndarray:
    """Design matrix: one row per observation, comma separated, no header."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise DomainError(f"{path}:{line_no}: non-numeric entry") from None
    if not rows:
        raise DomainError(f"{path}: empty design")
    if len({len(r) for r in rows}) != 1:
        raise DomainError(f"{path}: ragged rows")
    return np.array(rows)


def read_column_csv(path) -> np.ndarray:
    """Single-column dataset; a non-numeric first line is taken as a header."""
    vals = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip():
                continue
            if len(row) != 1:
                raise DomainError(f"{path}:{line_no}: expected one column")
            try:
                vals.append(float(row[0]))
            except ValueError:
                if line_no == 1:
                    continue
                raise DomainError(f"{path}:{line_no}: non-numeric entry") from None
    return np.array(vals)


def write_density_csv(path, grid: DensityGrid) -> None:
    write_csv(path, ["x", "density"], zip(grid.x, grid.density))


def read_density_csv(path) -> DensityGrid:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return DensityGrid(data[:, 0], data[:, 1])
