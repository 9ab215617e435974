"""CSV time series, plain-text constants reports and JSON summaries.

Numbers are written with "%.17g" so identical runs give identical files.
"""

from __future__ import annotations

import csv
import json
import os
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

NUMBER_FORMAT = "%.17g"


def format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return NUMBER_FORMAT % float(value)
    return str(value)


def to_builtin(value: Any) -> Any:
    """numpy scalars and arrays to JSON-ready Python values; non-finite floats become strings."""
    if isinstance(value, Mapping):
        return {str(key): to_builtin(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(item) for item in value]
    if isinstance(value, np.ndarray):
        return [to_builtin(item) for item in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else repr(value)
    return value


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Comma-separated table with one header row."""
    _ensure_parent(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} entries, header has {len(header)}")
            writer.writerow([format_value(item) for item in row])
    os.replace(tmp, path)
    return path


def write_records(path: str, records: Sequence[Mapping[str, Any]], header: Sequence[str]) -> str:
    """Write dict rows in header order; missing keys are an error."""
    return write_csv(path, header, ([record[name] for name in header] for record in records))


def read_csv(path: str) -> tuple[list[str], np.ndarray]:
    """Header and float rows of a numeric table written by write_csv."""
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def write_json(path: str, data: Mapping[str, Any]) -> str:
    _ensure_parent(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as handle:
        json.dump(to_builtin(data), handle, indent=2, ensure_ascii=False, sort_keys=True)
    os.replace(tmp, path)
    return path


def _flatten(prefix: str, value: Any, out: list[tuple[str, str]]) -> None:
    if isinstance(value, Mapping):
        for key in sorted(value):
            _flatten(f"{prefix}.{key}" if prefix else str(key), value[key], out)
    elif isinstance(value, (list, tuple, np.ndarray)):
        out.append((prefix, ", ".join(format_value(item) for item in value)))
    else:
        out.append((prefix, format_value(value)))


def write_report(path: str, title: str, sections: Mapping[str, Mapping[str, Any]]) -> str:
    """Plain-text report: one [section] block of key = value lines per mapping."""
    _ensure_parent(path)
    lines = [title, "=" * 50]
    for name, content in sections.items():
        flat: list[tuple[str, str]] = []
        _flatten("", content, flat)
        lines.append("")
        lines.append(f"[{name}]")
        width = max((len(key) for key, _ in flat), default=0)
        lines.extend(f"{key.ljust(width)} = {value}" for key, value in flat)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")
    os.replace(tmp, path)
    return path
