"""CSV/JSON writers with provenance headers, and a reader that round-trips them exactly.

CSV files start with ``# key: <json>`` comment lines carrying metadata, then a
header row.  Floats are written with 17 significant digits, which is enough to
reproduce every double.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class Table:
    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)

    def column(self, name):
        j = self.columns.index(name)
        return [r[j] for r in self.rows]

    def records(self):
        return [dict(zip(self.columns, r)) for r in self.rows]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        text = format(v, ".17g")
        # keep a float marker so the reader does not turn 2.0 into an int
        return text if any(c in text for c in ".einf") else text + ".0"
    return str(v)


def _parse(s: str):
    if s == "":
        return None
    if s in ("true", "false"):
        return s == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "tolist"):
        return _jsonable(v.tolist())
    return v


def to_csv(table: Table) -> str:
    buf = io.StringIO()
    for k, v in table.metadata.items():
        buf.write(f"# {k}: {json.dumps(_jsonable(v), sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for r in table.rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def from_csv(text: str) -> Table:
    meta = {}
    lines = text.splitlines()
    body_start = 0
    for i, line in enumerate(lines):
        if not line.startswith("#"):
            body_start = i
            break
        key, _, value = line[1:].strip().partition(": ")
        meta[key] = json.loads(value)
    else:
        body_start = len(lines)
    reader = csv.reader(lines[body_start:])
    columns = next(reader, [])
    rows = [[_parse(s) for s in r] for r in reader if r]
    return Table(columns, rows, meta)


def to_json(table: Table) -> str:
    doc = {"metadata": table.metadata, "columns": table.columns, "rows": table.records()}
    return json.dumps(_jsonable(doc), indent=2, sort_keys=False)


def from_json(text: str) -> Table:
    doc = json.loads(text)
    cols = doc["columns"]
    rows = [[rec.get(c) for c in cols] for rec in doc["rows"]]
    return Table(cols, rows, doc.get("metadata", {}))


def write(table: Table, path, fmt: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = to_csv(table) if fmt == "csv" else to_json(table)
    path.write_text(text, encoding="utf-8")
    return path


def read(path) -> Table:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return from_json(text) if path.suffix == ".json" else from_csv(text)
