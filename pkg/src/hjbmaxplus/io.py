"""JSON and CSV formats, with atomic writes."""
from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ParseError
from .problem import ModeData, SwitchedLQInstance
from .propagation import MaxPlusValue

FLOAT_FMT = "%.17g"


def atomic_write_text(path, text: str) -> None:
    """Write `text` to a sibling temp file, fsync, then rename over `path`."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ParseError(f"{path}: cannot read ({exc.strerror})") from exc


def _matrix(obj, where: str, rows=None, cols=None) -> np.ndarray:
    if not isinstance(obj, list) or not obj or not all(isinstance(r, list) for r in obj):
        raise ParseError(f"{where}: expected a nonempty list of rows")
    width = len(obj[0])
    if width == 0 or any(len(r) != width for r in obj):
        raise ParseError(f"{where}: rows must be nonempty and of equal length")
    for i, r in enumerate(obj):
        for j, v in enumerate(r):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ParseError(f"{where}[{i}][{j}]: expected a finite number, got {v!r}")
    M = np.array(obj, dtype=float)
    if rows is not None and M.shape[0] != rows:
        raise ParseError(f"{where}: expected {rows} rows, got {M.shape[0]}")
    if cols is not None and M.shape[1] != cols:
        raise ParseError(f"{where}: expected {cols} columns, got {M.shape[1]}")
    return M


def instance_from_dict(obj, source: str = "<instance>") -> SwitchedLQInstance:
    if not isinstance(obj, dict):
        raise ParseError(f"{source}: top level must be an object")
    for key in ("gamma", "modes"):
        if key not in obj:
            raise ParseError(f"{source}: missing key {key!r}")
    gamma = obj["gamma"]
    if isinstance(gamma, bool) or not isinstance(gamma, (int, float)) or not gamma > 0 \
            or not math.isfinite(gamma):
        raise ParseError(f"{source}: key 'gamma' must be a positive number, got {gamma!r}")
    modes = obj["modes"]
    if not isinstance(modes, list) or not modes:
        raise ParseError(f"{source}: key 'modes' must be a nonempty list")
    out, n, k = [], None, None
    for i, m in enumerate(modes):
        where = f"{source}: modes[{i}]"
        if not isinstance(m, dict):
            raise ParseError(f"{where}: expected an object")
        for key in ("A", "sigma", "D"):
            if key not in m:
                raise ParseError(f"{where}: missing key {key!r}")
        A = _matrix(m["A"], f"{where}.A", n, n)
        n = A.shape[0]
        if A.shape[1] != n:
            raise ParseError(f"{where}.A: must be square, got {A.shape}")
        sigma = _matrix(m["sigma"], f"{where}.sigma", n, k)
        k = sigma.shape[1]
        D = _matrix(m["D"], f"{where}.D", n, n)
        out.append(ModeData(A, sigma, 0.5 * (D + D.T)))
    return SwitchedLQInstance(float(gamma), tuple(out))


def load_instance(path) -> SwitchedLQInstance:
    """Read an instance file; ``D`` is symmetrized on load."""
    return instance_from_dict(_read_json(path), str(path))


def bundled_instance(name: str) -> SwitchedLQInstance:
    """One of the instances shipped in ``hjbmaxplus/data``: ``scalar`` or ``standard_2d``."""
    res = resources.files("hjbmaxplus") / "data" / f"{name}.json"
    if not res.is_file():
        raise ParseError(f"no bundled instance named {name!r}")
    with resources.as_file(res) as path:
        return load_instance(path)


def save_instance(inst: SwitchedLQInstance, path) -> None:
    atomic_write_text(path, json.dumps(inst.to_dict(), indent=2) + "\n")


def value_to_dict(V: MaxPlusValue) -> dict:
    return {
        "dim": V.dim,
        "quadratics": [{"P": P.tolist(), "word": list(w)} for P, w in zip(V.P, V.words)],
    }


def value_from_dict(obj, source: str = "<value>") -> MaxPlusValue:
    if not isinstance(obj, dict) or "dim" not in obj or "quadratics" not in obj:
        raise ParseError(f"{source}: expected an object with keys 'dim' and 'quadratics'")
    n = obj["dim"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ParseError(f"{source}: 'dim' must be a positive integer")
    qs = obj["quadratics"]
    if not isinstance(qs, list) or not qs:
        raise ParseError(f"{source}: 'quadratics' must be a nonempty list")
    Ps, words = [], []
    for i, q in enumerate(qs):
        where = f"{source}: quadratics[{i}]"
        if not isinstance(q, dict) or "P" not in q:
            raise ParseError(f"{where}: missing key 'P'")
        P = _matrix(q["P"], f"{where}.P", n, n)
        word = q.get("word", [])
        if not isinstance(word, list) or not all(
                isinstance(m, int) and not isinstance(m, bool) and m >= 0 for m in word):
            raise ParseError(f"{where}.word: expected a list of mode indices")
        Ps.append(P)
        words.append(tuple(word))
    return MaxPlusValue(np.stack(Ps), words)


def load_value(path) -> MaxPlusValue:
    return value_from_dict(_read_json(path), str(path))


def save_value(V: MaxPlusValue, path) -> None:
    # json writes floats with repr, which round-trips doubles exactly
    atomic_write_text(path, json.dumps(value_to_dict(V)) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return "" if v is None else str(v)


def csv_text(header, rows, comments=()) -> str:
    buf = _io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path, header, rows, comments=()) -> None:
    atomic_write_text(path, csv_text(header, rows, comments))
