"""File I/O: CSV matrices and figure tables, JSON reports, JSON-lines traces.

Floats are written with 17 significant digits so binary64 values round-trip.
Every writer goes through a temp file in the target directory plus a rename.
"""

from __future__ import annotations

import contextlib
import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import DomainError
from .matrix import NonNegMatrix


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _clean(obj):
    """Convert numpy scalars/arrays and replace non-finite floats by None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, floats with 17 significant digits, NaN/inf as null."""
    return _encode(_clean(obj)) + "\n"


def _encode(o) -> str:
    if o is None:
        return "null"
    if o is True:
        return "true"
    if o is False:
        return "false"
    if isinstance(o, int):
        return str(o)
    if isinstance(o, float):
        s = format(o, ".17g")
        return s if ("." in s or "e" in s) else s + ".0"
    if isinstance(o, str):
        return json.dumps(o)
    if isinstance(o, list):
        return "[" + ", ".join(_encode(v) for v in o) + "]"
    if isinstance(o, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {_encode(o[k])}" for k in sorted(o)) + "}"
    raise TypeError(f"cannot serialize {type(o).__name__}")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write_text(path, dumps(obj))


def write_jsonl(path, records) -> None:
    atomic_write_text(path, "".join(_encode(_clean(r)) + "\n" for r in records))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def format_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    atomic_write_text(path, format_csv(header, rows))


def write_columns(path, columns: dict) -> None:
    names = list(columns)
    write_csv(path, names, zip(*(columns[k] for k in names)))


def save_matrix(path, W) -> None:
    a = np.asarray(W, dtype=np.float64)
    write_csv(path, None, a.tolist())


def load_matrix(path) -> NonNegMatrix:
    """Read a headerless CSV matrix and validate it as a :class:`NonNegMatrix`."""
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise DomainError(f"{path}:{lineno}: not a decimal literal") from None
    if not rows:
        raise DomainError(f"{path}: empty matrix file")
    if any(len(r) != len(rows) for r in rows):
        raise DomainError(f"{path}: matrix must be square")
    return NonNegMatrix(np.array(rows))
