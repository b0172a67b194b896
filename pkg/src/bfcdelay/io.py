"""CSV and JSON file formats."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .noise import Interferogram, ScanKind, TimeTagHistogram


class ParseError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


def fmt(value) -> str:
    """Shortest round-trip decimal for floats; plain digits for integers."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if not math.isfinite(v):
        raise ValueError(f"cannot write non-finite value {v!r}")
    return repr(v)


def axis_column(kind: ScanKind) -> str:
    return f"{kind.value}_{kind.unit}"


_AXIS_COLUMNS = {axis_column(k): k for k in ScanKind}


def interferogram_csv(itf: Interferogram) -> str:
    cols = [axis_column(itf.scan_kind), "expected"]
    if itf.counts is not None:
        cols.append("counts")
    lines = [",".join(cols)]
    for i in range(len(itf)):
        row = [fmt(itf.axis[i]), fmt(itf.expected[i])]
        if itf.counts is not None:
            row.append(fmt(itf.counts[i]))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_interferogram(path, itf: Interferogram):
    Path(path).write_text(interferogram_csv(itf))


def _parse_rows(path, text: str, ncols_allowed):
    lines = text.splitlines()
    if not lines:
        raise ParseError(path, 1, "empty file")
    header = [c.strip() for c in lines[0].split(",")]
    if len(header) not in ncols_allowed:
        raise ParseError(path, 1, f"unexpected header {lines[0]!r}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise ParseError(path, lineno, f"expected {len(header)} fields, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise ParseError(path, lineno, f"non-numeric field in {line!r}") from None
        if not all(math.isfinite(v) for v in rows[-1]):
            raise ParseError(path, lineno, "non-finite value")
    if not rows:
        raise ParseError(path, len(lines), "no data rows")
    return header, np.array(rows)


def read_interferogram(path) -> Interferogram:
    text = Path(path).read_text()
    header, data = _parse_rows(path, text, (2, 3))
    kind = _AXIS_COLUMNS.get(header[0])
    if kind is None:
        raise ParseError(path, 1, f"unknown axis column {header[0]!r}")
    if header[1] != "expected" or (len(header) == 3 and header[2] != "counts"):
        raise ParseError(path, 1, f"unexpected header {','.join(header)!r}")
    counts = None
    if len(header) == 3:
        raw = data[:, 2]
        bad = np.flatnonzero((raw < 0) | (raw != np.round(raw)))
        if bad.size:
            raise ParseError(path, int(bad[0]) + 2, "counts must be non-negative integers")
        counts = raw.astype(np.int64)
    return Interferogram(data[:, 0], data[:, 1], kind, counts)


def histogram_csv(hist: TimeTagHistogram) -> str:
    lines = ["bin_center_ps,counts"]
    lines += [f"{fmt(c)},{fmt(n)}" for c, n in zip(hist.bin_centers, hist.counts)]
    return "\n".join(lines) + "\n"


def write_histogram(path, hist: TimeTagHistogram):
    Path(path).write_text(histogram_csv(hist))


def read_histogram(path) -> TimeTagHistogram:
    text = Path(path).read_text()
    header, data = _parse_rows(path, text, (2,))
    if header != ["bin_center_ps", "counts"]:
        raise ParseError(path, 1, f"unexpected header {','.join(header)!r}")
    centers, raw = data[:, 0], data[:, 1]
    bad = np.flatnonzero((raw < 0) | (raw != np.round(raw)))
    if bad.size:
        raise ParseError(path, int(bad[0]) + 2, "counts must be non-negative integers")
    if centers.size > 1:
        steps = np.diff(centers)
        if np.any(steps <= 0):
            raise ParseError(path, int(np.argmax(steps <= 0)) + 3, "bin centers must increase")
        width = float(np.median(steps))
    else:
        width = 1.0
    return TimeTagHistogram(width, centers, raw.astype(np.int64))


def write_json(path, payload: dict):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from None
