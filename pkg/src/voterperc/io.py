"""File formats: JSON documents, run-length coded fields, CSV tables.

Every JSON document carries a top-level "schema_version".  CSV files always
start with a header row; optional metadata (configuration echo, disclaimers)
goes into '#'-prefixed comment lines above the header.  Decimal separator is
always '.', independent of locale.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

SCHEMA_VERSION = 1


def _json_default(obj):
    # numpy scalars/arrays sneak into payloads; store them as plain values
    if hasattr(obj, "item") and not hasattr(obj, "__len__"):
        return obj.item()
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_json(path, payload):
    """Write a dict as UTF-8 JSON, stamping the schema version."""
    doc = dict(payload)
    doc.setdefault("schema_version", SCHEMA_VERSION)
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False, default=_json_default)
        fh.write("\n")
    return p


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def rle_encode(values):
    """Run lengths of a 0/1 sequence: (first_value, [len1, len2, ...])."""
    runs = []
    it = iter(values)
    try:
        prev = int(next(it))
    except StopIteration:
        return 0, []
    first = prev
    run = 1
    for v in it:
        v = int(v)
        if v == prev:
            run += 1
        else:
            runs.append(run)
            prev = v
            run = 1
    runs.append(run)
    return first, runs


def rle_decode(first, runs):
    out = []
    val = int(first)
    for run in runs:
        out.extend([val] * run)
        val = 1 - val
    return out


def write_csv(path, header, rows, comments=()):
    """Write a CSV table; comment lines (if any) precede the header row."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="") as fh:
        for line in comments:
            fh.write("# " + str(line).rstrip("\n") + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(list(row))
    return p


def read_csv(path):
    """Read a CSV written by write_csv: returns (comments, header, rows)."""
    comments = []
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        pending = []
        for line in fh:
            if line.startswith("#"):
                comments.append(line[1:].strip())
            else:
                pending.append(line)
        reader = csv.reader(pending)
        header = next(reader)
        for row in reader:
            rows.append(row)
    return comments, header, rows


def format_float(x):
    """Repr with '.' decimal and no locale surprises."""
    return repr(float(x))
