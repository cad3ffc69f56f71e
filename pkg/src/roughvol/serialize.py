"""Deterministic JSON and CSV writers.

JSON floats carry 17 significant digits (exact round trip), CSV floats 12.
Non-finite floats become null in JSON and nan/inf/-inf in CSV.
"""
import csv
import io
import json
import math

import numpy as np

JSON_DIGITS = 17
CSV_DIGITS = 12


def _plain(x):
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    return x


def _json_scalar(x):
    x = _plain(x)
    if x is None:
        return "null"
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            return "null"
        text = f"{x:.{JSON_DIGITS}g}"
        if not any(c in text for c in ".en"):
            text += ".0"
        return text
    if isinstance(x, str):
        return json.dumps(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")


def dumps_json(obj, indent=2, _level=0):
    obj = _plain(obj)
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_json_scalar(str(k))}: {dumps_json(v, indent, _level + 1)}"
                 for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + dumps_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    return _json_scalar(obj)


def csv_cell(x):
    x = _plain(x)
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.{CSV_DIGITS}g}"
    if x is None:
        return ""
    return str(x)


def dumps_csv(columns, rows, header=None):
    """CSV text; `header` entries become leading '# key=value' lines."""
    buf = io.StringIO()
    for key, value in sorted((header or {}).items()):
        if isinstance(value, (list, tuple)):
            value = ";".join(csv_cell(v) for v in value)
        buf.write(f"# {key}={csv_cell(value)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([csv_cell(row[c]) for c in columns])
    return buf.getvalue()


def read_csv(text):
    """(header dict of strings, list of row dicts of strings) from dumps_csv output."""
    header, body = {}, []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            header[key] = value
        else:
            body.append(line)
    return header, list(csv.DictReader(body))
