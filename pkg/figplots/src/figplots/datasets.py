"""Loading and validating the simulator's figure-data CSV files.

The file contract: a single `# config: {...}` comment line, a header row,
then comma-separated records.  Each figure kind has a fixed column list;
anything else is a schema mismatch.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

COLUMNS = {
    "fig1": ("x1", "x2", "density"),
    "fig2": ("panel", "t", "x2", "density"),
    "fig3": ("trajectory", "t", "x2"),
}


class SchemaError(ValueError):
    """The input file does not match the contract for its figure kind."""


@dataclass(frozen=True)
class FigureDataset:
    """One parsed figure-data file."""

    source: str
    kind: str
    config: dict
    table: dict   # column name -> numpy array (float, or str for 'panel')


def load_dataset(kind: str, path: str) -> FigureDataset:
    if kind not in COLUMNS:
        raise SchemaError(f"unknown figure kind {kind!r}; expected one of "
                          f"{sorted(COLUMNS)}")
    with open(path, newline="") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    if not lines or not lines[0].startswith("# config: "):
        raise SchemaError(f"{path}: missing '# config:' header line")
    config = json.loads(lines[0][len("# config: "):])
    body = [ln for ln in lines[1:] if not ln.startswith("#")]
    rows = list(csv.reader(body))
    header = tuple(rows[0])
    if header != COLUMNS[kind]:
        raise SchemaError(f"{path}: columns {header} do not match the "
                          f"{kind} contract {COLUMNS[kind]}")
    data = rows[1:]
    if not data:
        raise SchemaError(f"{path}: no data rows")
    cols = list(zip(*data))
    table = {}
    for name, values in zip(header, cols):
        if name == "panel":
            table[name] = np.array(values)
        else:
            try:
                table[name] = np.array(values, dtype=float)
            except ValueError as exc:
                raise SchemaError(f"{path}: non-numeric value in column "
                                  f"{name!r}: {exc}") from exc
    return FigureDataset(source=path, kind=kind, config=config, table=table)


def pivot_sheet(t: np.ndarray, x: np.ndarray, values: np.ndarray):
    """Arrange long-format (t, x, value) records into a (t, x) matrix."""
    ts = np.unique(t)
    xs = np.unique(x)
    sheet = np.full((len(ts), len(xs)), np.nan)
    ti = np.searchsorted(ts, t)
    xi = np.searchsorted(xs, x)
    sheet[ti, xi] = values
    if np.isnan(sheet).any():
        raise SchemaError("sheet records do not fill a complete (t, x) grid")
    return ts, xs, sheet
