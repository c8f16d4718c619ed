"""Atomic file writes and the commented CSV format shared by all outputs."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence


class DataError(ValueError):
    """An input file is malformed; the message names the offending line."""


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def header_lines(meta: dict | None) -> list[str]:
    """``# key=value`` lines in key order; no timestamps, so reruns match byte for byte."""
    if not meta:
        return []
    return [f"# {k}={meta[k]}" for k in sorted(meta)]


def format_csv(header: Sequence[str], rows: Iterable[Sequence], meta: dict | None = None) -> str:
    buf = io.StringIO()
    for line in header_lines(meta):
        buf.write(line + "\n")
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(header)
    for row in rows:
        out.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v):
    if hasattr(v, "item"):  # numpy scalar
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], meta: dict | None = None) -> None:
    atomic_write_text(path, format_csv(header, rows, meta))


def read_csv(path) -> tuple[dict, list[dict]]:
    """Return (header metadata, rows as dicts of strings)."""
    meta, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        elif line.strip():
            body.append(line)
    return meta, list(csv.DictReader(body))


def write_histogram_csv(path, counts, edges, meta: dict | None = None) -> None:
    rows = [(float(edges[i]), float(edges[i + 1]), int(c)) for i, c in enumerate(counts)]
    write_csv(path, ("bin_left", "bin_right", "count"), rows, meta)


def dump_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def load_jsonl(path) -> list[dict]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: corrupted record ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise DataError(f"{path}:{lineno}: record is not a JSON object")
            out.append(rec)
    return out
