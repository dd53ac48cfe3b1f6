"""JSON, CSV and binary snapshot I/O."""
from __future__ import annotations

import csv
import io
import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .fields import ScalarField
from .velocity import KINDS, EquationParams

MAGIC = b"ASCSNAP1"
_HEADER = struct.Struct("<8d")


def _clean(obj):
    """Make numpy scalars/arrays and non-finite floats JSON friendly."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=False)


def write_json(path, obj):
    Path(path).write_text(dumps_json(obj) + "\n")


def read_json(path_or_text):
    """Parse a JSON file path, or a literal JSON string starting with '{' or '['."""
    s = str(path_or_text)
    if s.lstrip().startswith(("{", "[")):
        return json.loads(s)
    return json.loads(Path(s).read_text())


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)  # RFC 4180: CRLF line ends, minimal quoting
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer, np.bool_)):
        return v.item()
    return v


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(header, rows))


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def records_csv(records, betas=()):
    rows = [r.row(betas) for r in records]
    if not rows:
        return csv_text(["t", "sup_norm", "energy", "max_gradient", "xi0", "margin"], [])
    header = list(rows[0])
    return csv_text(header, ([row.get(h, "") for h in header] for row in rows))


def write_snapshot(path, theta: ScalarField, eq: EquationParams | None = None):
    """8-byte magic, 8 little-endian doubles (d, N, t, kind, alpha, gamma, epsilon, A), row-major samples."""
    kind = -1.0 if eq is None else float(KINDS.index(eq.kind))
    alpha = gamma = epsilon = A = math.nan
    if eq is not None:
        alpha, gamma, epsilon, A = eq.alpha, eq.gamma, eq.epsilon, eq.A
    head = _HEADER.pack(float(theta.d), float(theta.N), float(theta.t), kind, alpha, gamma, epsilon, A)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(head)
        fh.write(np.ascontiguousarray(theta.values, dtype="<f8").tobytes(order="C"))


def read_snapshot(path):
    """Returns (ScalarField, EquationParams or None)."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValidationError(f"{path}: not a snapshot file")
    d, N, t, kind, alpha, gamma, epsilon, A = _HEADER.unpack_from(raw, 8)
    d, N = int(d), int(N)
    body = raw[8 + _HEADER.size:]
    if len(body) != 8 * N**d:
        raise ValidationError(f"{path}: expected {N**d} samples, found {len(body) // 8}")
    values = np.frombuffer(body, dtype="<f8").reshape((N,) * d)
    eq = None
    if kind >= 0:
        eq = EquationParams(KINDS[int(kind)], alpha, gamma, epsilon, A)
    return ScalarField(values.copy(), t), eq
