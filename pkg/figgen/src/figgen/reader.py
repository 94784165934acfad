"""Comment-headed CSV reader with schema pinning.

The simulator writes tables as ``# key: value`` metadata lines followed by
a normal header row and comma-separated data rows.  Every table carries a
``schema`` key; anything other than the pinned schema version is refused.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

import numpy as np

from . import CSV_SCHEMA, FiggenError


@dataclass
class Table:
    """One parsed CSV artifact: metadata, column order, and column data."""

    path: str
    meta: Dict[str, str]
    fieldnames: List[str]
    columns: Dict[str, list] = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return len(self.columns[self.fieldnames[0]]) if self.fieldnames else 0

    def numeric(self, name: str) -> np.ndarray:
        """Column as a float array (empty cells become NaN)."""
        self.require(name)
        out = np.empty(self.n_rows)
        for i, cell in enumerate(self.columns[name]):
            try:
                out[i] = float(cell) if cell != "" else np.nan
            except ValueError as exc:
                raise FiggenError(
                    f"{self.path}: column {name!r} row {i} is not numeric: "
                    f"{cell!r}") from exc
        return out

    def require(self, *names: str) -> None:
        missing = [n for n in names if n not in self.columns]
        if missing:
            raise FiggenError(
                f"{self.path}: missing columns {', '.join(missing)}; "
                f"available columns are {', '.join(self.fieldnames)}")

    def match(self, pattern: str) -> List[str]:
        """Column names matching a regular expression, in table order."""
        rx = re.compile(pattern)
        return [n for n in self.fieldnames if rx.fullmatch(n)]

    def first_match(self, pattern: str, description: str) -> str:
        hits = self.match(pattern)
        if not hits:
            raise FiggenError(
                f"{self.path}: no column for {description} (expected a "
                f"name matching {pattern!r}); available columns are "
                f"{', '.join(self.fieldnames)}")
        return hits[0]


def read_table(path) -> Table:
    """Parse one artifact; refuses wrong schema versions and empty tables."""
    p = Path(path)
    if not p.exists():
        raise FiggenError(f"input CSV does not exist: {p}")
    meta: Dict[str, str] = {}
    body_lines: List[str] = []
    for line in p.read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, value = line.lstrip("# ").partition(":")
            meta[key.strip()] = value.strip()
        elif line.strip():
            body_lines.append(line)
    schema = meta.get("schema")
    if schema != CSV_SCHEMA:
        raise FiggenError(
            f"{p}: unsupported or missing CSV schema {schema!r}; this "
            f"renderer is pinned to {CSV_SCHEMA!r}")
    if not body_lines:
        raise FiggenError(f"{p}: no header row found")
    rows = list(csv.reader(io.StringIO("\n".join(body_lines))))
    fieldnames = rows[0]
    data_rows = rows[1:]
    if not data_rows:
        raise FiggenError(f"{p}: table has a header but no data rows")
    columns: Dict[str, list] = {name: [] for name in fieldnames}
    for i, row in enumerate(data_rows):
        if len(row) != len(fieldnames):
            raise FiggenError(
                f"{p}: row {i} has {len(row)} cells, expected "
                f"{len(fieldnames)}")
        for name, cell in zip(fieldnames, row):
            columns[name].append(cell)
    return Table(path=str(p), meta=meta, fieldnames=fieldnames,
                 columns=columns)
