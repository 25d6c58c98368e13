"""CSV / JSON emission for benchmark records and reports."""

from __future__ import annotations

import csv
import json
import math
from typing import Iterable

from ..errors import FormatError
from ..space import genome_parse, genome_serialize

CSV_COLUMNS = ("genome", "params", "flops", "zico", "zico_mean_only", "zico_std_only",
               "grad_norm", "snip", "synflow", "accuracy", "seed")
_INT_COLUMNS = ("seed",)


def fmt(x) -> str:
    """17 significant digits, enough for an exact float64 round trip."""
    if isinstance(x, bool) or isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _open(path, mode):
    try:
        return open(path, mode, newline="")
    except OSError as exc:
        raise OSError(f"cannot open {path}: {exc.strerror}") from exc


def emit_csv(rows: Iterable[dict], path) -> None:
    """Rows are dicts keyed by CSV_COLUMNS (see BenchmarkRecord.csv_row)."""
    with _open(path, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            out = []
            for col in CSV_COLUMNS:
                v = row[col]
                out.append(genome_serialize(v) if col == "genome" else fmt(v))
            writer.writerow(out)


def read_csv(path) -> list:
    with _open(path, "r") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise FormatError(f"{path}: header {header} does not match {list(CSV_COLUMNS)}")
        rows = []
        for lineno, cells in enumerate(reader, start=2):
            if len(cells) != len(CSV_COLUMNS):
                raise FormatError(f"{path}:{lineno}: expected {len(CSV_COLUMNS)} fields, got {len(cells)}")
            row = {}
            for col, cell in zip(CSV_COLUMNS, cells):
                if col == "genome":
                    row[col] = genome_parse(cell)
                elif col in _INT_COLUMNS:
                    row[col] = int(cell)
                else:
                    row[col] = float(cell)
            rows.append(row)
    return rows


def _clean(obj):
    if isinstance(obj, float):
        return None if math.isnan(obj) else float(fmt(obj))
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, NaN as null."""
    return json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n"


def emit_json(obj, path) -> None:
    with _open(path, "w") as fh:
        fh.write(dumps(obj))


def emit_jsonl(rows: Iterable[dict], path) -> None:
    with _open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(_clean(row), sort_keys=True) + "\n")


def emit_rows_csv(rows: list, path) -> None:
    """Generic table of dicts sharing the first row's keys."""
    rows = list(rows)
    with _open(path, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if not rows:
            return
        keys = list(rows[0])
        writer.writerow(keys)
        for r in rows:
            writer.writerow([fmt(r[k]) if isinstance(r[k], (int, float)) else r[k] for k in keys])
