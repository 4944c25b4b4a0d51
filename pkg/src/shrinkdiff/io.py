"""CSV ingestion and report writing for the command-line workflows."""
from __future__ import annotations

import csv
import json
import math
from io import StringIO
from pathlib import Path

import numpy as np

from .core import Dataset

__all__ = [
    "SCHEMA_VERSION",
    "CSVParseError",
    "dataset_summary",
    "emit_report",
    "load_csv",
    "read_table",
    "response_index",
]

SCHEMA_VERSION = "1.0"
_MISSING = {"", "na", "nan", "null", "none", "?"}


class CSVParseError(ValueError):
    """Malformed input table; the message names the offending row and column."""


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Header and float matrix from a rectangular numeric CSV.

    Row numbers in error messages count the header as row 1, matching what a
    spreadsheet shows.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CSVParseError(f"{path}: empty file (a header row is required)") from None
        header = [h.strip() for h in header]
        if not header or all(h == "" for h in header):
            raise CSVParseError(f"{path}: empty header row")
        width = len(header)
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != width:
                raise CSVParseError(f"{path}: row {line_no} has {len(row)} fields, header has {width}")
            vals = []
            for j, cell in enumerate(row):
                text = cell.strip()
                where = f"row {line_no}, column {j + 1} ({header[j]!r})"
                if text.lower() in _MISSING:
                    raise CSVParseError(f"{path}: missing value at {where}; impute before loading")
                try:
                    v = float(text)
                except ValueError:
                    raise CSVParseError(f"{path}: non-numeric cell {text!r} at {where}") from None
                if not math.isfinite(v):
                    raise CSVParseError(f"{path}: non-finite value {text!r} at {where}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise CSVParseError(f"{path}: no data rows")
    return header, np.array(rows, dtype=float)


def response_index(header: list[str], response) -> int:
    if response is None:
        lowered = [h.lower() for h in header]
        return lowered.index("y") if "y" in lowered else 0
    if isinstance(response, int) or (isinstance(response, str) and response.lstrip("-").isdigit()
                                     and response not in header):
        idx = int(response)
        if not -len(header) <= idx < len(header):
            raise CSVParseError(f"response index {idx} out of range for {len(header)} columns")
        return idx % len(header)
    if response not in header:
        raise CSVParseError(f"response column {response!r} not in header {header}")
    return header.index(response)


def load_csv(path, response=None, standardize: bool = True) -> Dataset:
    """Read a CSV with a header row into a standardized Dataset.

    ``response`` is a column name or 0-based index; by default the column
    named ``y`` (any case), else the first column. Every other column is a
    covariate. Constant columns are kept and flagged as degenerate.
    """
    header, table = read_table(path)
    if table.shape[1] < 2:
        raise CSVParseError(f"{path}: need a response and at least one covariate column")
    r = response_index(header, response)
    cols = [j for j in range(len(header)) if j != r]
    names = tuple(header[j] or f"x{j}" for j in cols)
    return Dataset.from_arrays(table[:, cols], table[:, r], standardize=standardize, names=names)


def dataset_summary(data: Dataset) -> dict:
    out = {"n": data.n, "p": data.p,
           "degenerate_columns": [int(j) for j in np.flatnonzero(data.degenerate)],
           "standardized": bool(data.standardized)}
    if data.names is not None:
        out["degenerate_names"] = [data.names[j] for j in out["degenerate_columns"]]
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _csv_cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    return str(v)


def emit_report(results: dict, fmt: str = "json", path=None) -> str:
    """Serialize a report and write it to ``path`` (or return it when ``path`` is None).

    ``results`` must hold ``config`` (the full effective configuration, seed
    included) and ``table`` (list of row dicts) plus ``columns`` (their order).
    JSON carries everything with a ``schema_version``; wall-clock numbers live
    only under ``timing`` so reruns differ nowhere else. CSV carries the table
    alone, preceded by ``#`` comment lines holding the configuration.
    """
    if fmt not in ("json", "csv"):
        raise ValueError(f"format must be 'json' or 'csv', got {fmt!r}")
    if fmt == "json":
        doc = {"schema_version": SCHEMA_VERSION}
        doc.update(_jsonable(results))
        text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    else:
        columns = list(results["columns"])
        lines = [f"# schema_version: {SCHEMA_VERSION}",
                 f"# command: {results.get('command', '')}",
                 "# config: " + json.dumps(_jsonable(results.get("config", {})), sort_keys=True)]
        for note in results.get("csv_notes", []):
            lines.append(f"# {note}")
        buf = StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in results["table"]:
            w.writerow([_csv_cell(row[c]) for c in columns])
        text = "\n".join(lines) + "\n" + buf.getvalue()
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write report to {path}: {exc}") from exc
    return text
