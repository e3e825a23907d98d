"""CSV tables with '#'-prefixed metadata headers and atomic JSON sidecars.

Floats are written with ``repr``-exact ``.17g`` formatting so a table read
back reproduces the values bit for bit, and so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np


def _fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _meta_value(value: Any) -> str:
    return json.dumps(value, sort_keys=True, default=_json_default)


def _json_default(obj: Any):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


@dataclass
class Table:
    columns: list[str]
    rows: list[list[str]]
    metadata: dict[str, Any] = field(default_factory=dict)

    def column(self, name: str, dtype=float) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([dtype(r[i]) for r in self.rows])


def format_csv(columns: Sequence[str], rows: Iterable[Sequence[Any]],
               metadata: Mapping[str, Any] | None = None) -> str:
    """Render a table; metadata lines read ``# key: <json>`` in sorted key order."""
    buf = io.StringIO()
    for key in sorted(metadata or {}):
        buf.write(f"# {key}: {_meta_value(metadata[key])}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, header has {len(columns)}")
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def atomic_write_text(path: str | os.PathLike, text: str) -> Path:
    """Write via a temporary file in the target directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, columns, rows, metadata=None) -> Path:
    return atomic_write_text(path, format_csv(columns, rows, metadata))


def parse_csv(text: str) -> Table:
    meta: dict[str, Any] = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(":")
            try:
                meta[key.strip()] = json.loads(val)
            except json.JSONDecodeError:
                meta[key.strip()] = val.strip()
        elif line.strip():
            body.append(line)
    if not body:
        raise ValueError("table has no header row")
    rd = list(csv.reader(body))
    return Table(rd[0], rd[1:], meta)


def read_csv(path) -> Table:
    return parse_csv(Path(path).read_text())


def write_json(path, obj: Any) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True,
                                              default=_json_default) + "\n")
