"""
File formats: CSV tables, raw little-endian float64 arrays with a text
sidecar, and decomposition manifests.

Floats are written with ``repr`` so that every value round-trips exactly.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import ConfigError, PreconditionError
from .grid import Cube, Field, GridSpec

RAW_DTYPE = "<f8"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, rows: Sequence[dict], columns: Sequence[str] | None = None) -> Path:
    """CSV with a header row; the column order is that of the first row."""
    path = Path(path)
    columns = list(columns if columns is not None else (rows[0].keys() if rows else []))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    return path


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_field_csv(path, field: Field) -> Path:
    rows = [{"index": i, "value": float(v)} for i, v in enumerate(field.values)]
    return write_rows(path, rows, ["index", "value"])


def read_field_csv(path, grid: GridSpec) -> Field:
    rows = read_rows(path)
    v = np.zeros(grid.size)
    for r in rows:
        v[int(r["index"])] = float(r["value"])
    return Field(grid, v)


def write_symbol_csv(path, symbol, x) -> Path:
    x = np.asarray(x, dtype=float)
    y = symbol(x)
    return write_rows(path, [{"x": a, "value": b} for a, b in zip(x, y)], ["x", "value"])


def write_eigenvalues_csv(path, op) -> Path:
    return write_rows(path, [{"index": i, "eigenvalue": float(v)}
                             for i, v in enumerate(op.eigenvalues)],
                      ["index", "eigenvalue"])


# -- raw arrays --------------------------------------------------------------

def write_sidecar(path, meta: dict) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        for k, v in meta.items():
            if isinstance(v, (tuple, list)):
                v = ",".join(_fmt(x) for x in v)
            fh.write(f"{k} = {_fmt(v)}\n")
    return path


def read_sidecar(path) -> dict:
    meta = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    return meta


def write_raw(path, array, meta: dict | None = None) -> Path:
    """``path`` gets the bytes, ``path + '.txt'`` the sidecar."""
    path = Path(path)
    a = np.ascontiguousarray(np.asarray(array, dtype=RAW_DTYPE))
    path.write_bytes(a.tobytes())
    side = {"dtype": "float64", "byteorder": "little",
            "shape": ",".join(str(s) for s in a.shape)}
    side.update(meta or {})
    write_sidecar(str(path) + ".txt", side)
    return path


def read_raw(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = read_sidecar(str(path) + ".txt")
    if meta.get("dtype") != "float64" or meta.get("byteorder") != "little":
        raise PreconditionError(f"{path}: unsupported raw layout")
    shape = tuple(int(s) for s in meta["shape"].split(",") if s)
    a = np.frombuffer(path.read_bytes(), dtype=RAW_DTYPE).reshape(shape)
    return a.astype(float), meta


def write_kernel(path, kernel) -> Path:
    """Kernel matrix as raw float64; complex kernels are stored as
    ``(2, P, P)`` real and imaginary planes."""
    e = kernel.entries
    if np.iscomplexobj(e):
        arr, layout = np.stack([e.real, e.imag]), "real,imag"
    else:
        arr, layout = e, "real"
    return write_raw(path, arr, {"layout": layout, "measure": kernel.measure_convention,
                                 "h": kernel.grid.h, "dim": kernel.grid.dim})


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    raise TypeError(f"not serializable: {type(o)}")


# -- decomposition dumps -----------------------------------------------------

MANIFEST_COLUMNS = ["atom", "i", "j", "lambda", "corner", "ell", "M", "p",
                    "identity_defect", "support_mass", "ratio_q2", "ratio_qinf"]


def write_decomposition(directory, decomposition) -> Path:
    """Manifest CSV plus ``atom_XXXX_{a,b}.f64`` raw arrays per term."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rows = []
    for n, t in enumerate(decomposition.terms):
        v = t.validation
        rows.append({
            "atom": n, "i": t.level, "j": t.index, "lambda": t.lam,
            "corner": " ".join(str(c) for c in t.cube.corner),
            "ell": t.cube.side, "M": t.M, "p": t.p,
            "identity_defect": v.identity_defect if v else math.nan,
            "support_mass": v.max_support_mass if v else math.nan,
            "ratio_q2": v.size_ratio.get(2, math.nan) if v else math.nan,
            "ratio_qinf": v.size_ratio.get(math.inf, math.nan) if v else math.nan,
        })
        for name, arr in (("a", t.a), ("b", t.b)):
            write_raw(d / f"atom_{n:04d}_{name}.f64", arr,
                      {"atom": n, "i": t.level, "j": t.index})
    write_rows(d / "manifest.csv", rows, MANIFEST_COLUMNS)
    write_raw(d / "residual.f64", decomposition.residual.values)
    return d / "manifest.csv"


def read_decomposition(directory) -> list[dict]:
    """Terms as dicts with ``lam`` (exact), ``a`` and ``b`` arrays."""
    d = Path(directory)
    out = []
    for r in read_rows(d / "manifest.csv"):
        n = int(r["atom"])
        a, _ = read_raw(d / f"atom_{n:04d}_a.f64")
        b, _ = read_raw(d / f"atom_{n:04d}_b.f64")
        out.append({"i": int(r["i"]), "j": int(r["j"]), "lam": float(r["lambda"]),
                    "a": a, "b": b})
    return out


def resynthesize(terms: Iterable[dict], grid: GridSpec) -> np.ndarray:
    """Same fixed-order sum as the decomposition itself."""
    acc = np.zeros(grid.size)
    for t in terms:
        acc = acc + t["lam"] * t["a"][: grid.size]
    return acc
