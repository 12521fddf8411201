"""Deterministic report emission: atomic table writes plus a content manifest."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

FORMATS = ("csv", "json")


def atomic_write(path: Path, data: str | bytes) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _sort_key(rec: dict) -> tuple:
    return (str(rec.get("market", "")), str(rec.get("minute", "")))


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return str(value)


def render_csv(records: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for rec in records:
        writer.writerow(["" if rec.get(c) is None else rec.get(c) for c in columns])
    return buf.getvalue()


def render_json(payload: Any) -> str:
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"


@dataclass
class ReportWriter:
    out_dir: Path
    fmt: str = "csv"
    entries: list[dict] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.fmt not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}, got {self.fmt!r}")
        self.out_dir = Path(self.out_dir)

    def _record(self, name: str, text: str, rows: int) -> Path:
        path = self.out_dir / name
        atomic_write(path, text)
        self.entries.append({
            "path": name,
            "rows": rows,
            "sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
        })
        return path

    def table(self, stem: str, records: Sequence[dict], columns: Sequence[str] | None = None,
              sort: bool = True) -> Path:
        """Write ``records`` as ``stem.csv`` or ``stem.json`` depending on the format."""
        rows = sorted(records, key=_sort_key) if sort else list(records)
        if columns is None:
            columns = list(rows[0]) if rows else []
        if self.fmt == "csv":
            return self._record(f"{stem}.csv", render_csv(rows, columns), len(rows))
        shaped = [{c: r.get(c) for c in columns} for r in rows]
        return self._record(f"{stem}.json", render_json(shaped), len(rows))

    def document(self, name: str, payload: Any, rows: int) -> Path:
        """Write a free-form JSON document regardless of the table format."""
        return self._record(name, render_json(payload), rows)

    def manifest(self) -> Path:
        files = sorted(self.entries, key=lambda e: e["path"])
        text = render_json({"files": files})
        path = self.out_dir / "manifest.json"
        atomic_write(path, text)
        return path
