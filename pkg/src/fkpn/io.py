"""Field serialization and small artifact writers.

Both field formats carry the header ``(n, eps, lateral_halfwidth, height, time)``
followed by the values in storage order: the height index varies slowest, then
the lateral indices x_1, ..., x_{n-1}, each from -L to L.
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .lattice import LatticeField, make_domain

_MAGIC = b"FKPNFLD1"
_HEADER = struct.Struct("<8sqdqqd")   # magic, n, eps, L, H, time
FIELD_COLUMNS = ("n", "eps", "lateral_halfwidth", "height", "time")


def fmt(x: float) -> str:
    """17 significant digits: enough to round-trip any float64."""
    return "%.17g" % x


def write_field(path: str | Path, f: LatticeField) -> None:
    path = Path(path)
    d = f.domain
    if path.suffix == ".csv":
        with open(path, "w", newline="") as fh:
            fh.write(",".join(FIELD_COLUMNS) + "\n")
            fh.write(",".join([str(d.n), fmt(d.eps), str(d.lateral_halfwidth), str(d.height),
                               fmt(f.time)]) + "\n")
            fh.write("value\n")
            fh.writelines(fmt(v) + "\n" for v in f.values.reshape(-1))
    else:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, d.n, d.eps, d.lateral_halfwidth, d.height, f.time))
            fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_field(path: str | Path) -> LatticeField:
    path = Path(path)
    if path.suffix == ".csv":
        with open(path) as fh:
            head = fh.readline().strip().split(",")
            if tuple(head) != FIELD_COLUMNS:
                raise ValueError(f"{path}: not a field CSV (header {head})")
            n, eps, L, H, t = fh.readline().strip().split(",")
            if fh.readline().strip() != "value":
                raise ValueError(f"{path}: missing value column")
            vals = np.array([float(line) for line in fh if line.strip()])
        dom = make_domain(int(n), float(eps), int(L), int(H))
        return LatticeField(dom, vals.reshape(dom.shape), float(t))
    raw = path.read_bytes()
    magic, n, eps, L, H, t = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    dom = make_domain(n, eps, L, H)
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if vals.size != dom.size:
        raise ValueError(f"{path}: expected {dom.size} values, found {vals.size}")
    return LatticeField(dom, vals.reshape(dom.shape).copy(), t)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with floats printed at full precision; ints and strings verbatim."""
    def cell(v):
        if isinstance(v, (float, np.floating)):
            return fmt(float(v))
        return str(v)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([cell(v) for v in r])


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_json(path: str | Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")
