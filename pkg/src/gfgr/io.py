"""CSV / NDJSON writers shared by every exporter."""

from __future__ import annotations

import csv
import json
from typing import Iterable, Sequence

import numpy as np


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """RFC-4180 style CSV (CRLF line ends, minimal quoting) with a single header line."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_ndjson(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, default=_json_default) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")
