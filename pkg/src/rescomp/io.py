"""CSV / JSON serialization helpers.

All numeric text output is pinned to 17 significant digits ('%.17g'), which
round-trips doubles exactly, so identical inputs always produce
byte-identical files.  CSVs are comma-separated with a header row, UTF-8,
'.' decimal; matrices are written row-major.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .exceptions import FileIOError, ParseError

FLOAT_FMT = "%.17g"


def fmt(x) -> str:
    return FLOAT_FMT % float(x)


def write_matrix_csv(path, matrix, prefix: str = "c") -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    try:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow([f"{prefix}{j}" for j in range(matrix.shape[1])])
            for row in matrix:
                writer.writerow([fmt(v) for v in row])
    except OSError as exc:
        raise FileIOError(path, f"cannot write matrix ({exc})") from exc


def read_matrix_csv(path) -> np.ndarray:
    try:
        with open(path, "r", newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None:
                raise ParseError(f"empty CSV: {path}")
            rows = [[float(v) for v in row] for row in reader if row]
    except OSError as exc:
        raise FileIOError(path, f"cannot read matrix ({exc})") from exc
    except ValueError as exc:
        raise ParseError(f"malformed numeric CSV {path}: {exc}") from exc
    if not rows:
        return np.empty((0, len(header)))
    return np.asarray(rows, dtype=float)


def write_vector_csv(path, values, column: str) -> None:
    values = np.asarray(values, dtype=float).reshape(-1)
    try:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow([column])
            for v in values:
                writer.writerow([fmt(v)])
    except OSError as exc:
        raise FileIOError(path, f"cannot write vector ({exc})") from exc


def write_edges_csv(path, edges) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["i", "j"])
            for i, j in edges:
                writer.writerow([int(i), int(j)])
    except OSError as exc:
        raise FileIOError(path, f"cannot write edges ({exc})") from exc


def read_edges_csv(path) -> frozenset:
    try:
        with open(path, "r", newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            next(reader, None)
            edges = set()
            for row in reader:
                if not row:
                    continue
                i, j = int(row[0]), int(row[1])
                edges.add((min(i, j), max(i, j)))
    except OSError as exc:
        raise FileIOError(path, f"cannot read edges ({exc})") from exc
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed edges CSV {path}: {exc}") from exc
    return frozenset(edges)


def write_rows_csv(path, header, rows) -> None:
    """Write pre-formatted rows (callers format floats with ``fmt``)."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise FileIOError(path, f"cannot write CSV ({exc})") from exc


def write_json(path, payload) -> None:
    try:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, indent=2, sort_keys=True)
            handle.write("\n")
    except OSError as exc:
        raise FileIOError(path, f"cannot write JSON ({exc})") from exc


def read_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as exc:
        raise FileIOError(path, f"cannot read JSON ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON {path}: {exc}") from exc
