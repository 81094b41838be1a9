"""Versioned JSON documents for models, with reals written at 17 significant digits.

Python's own ``json`` writes floats with ``repr``; the writer here fixes the
digit count so files are stable across platforms and ``load(save(x))``
reproduces every value bit for bit.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ModelFormatError

FORMAT_VERSION = 1


def format_real(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ModelFormatError(f"cannot serialize non-finite value {x}")
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def array_doc(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": a.reshape(-1).tolist()}


def doc_array(d: dict) -> np.ndarray:
    try:
        return np.asarray(d["data"], dtype=np.float64).reshape(d["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed array entry: {exc}") from None


def _scalar(v: Any) -> str:
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_real(v)
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _is_flat(v: list) -> bool:
    return all(not isinstance(x, (dict, list, tuple)) for x in v)


def dumps(obj: Any, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(obj, np.ndarray):
        obj = array_doc(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(str(k), ensure_ascii=False)}: {dumps(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if _is_flat(obj):
            return "[" + ", ".join(_scalar(x) for x in obj) + "]"
        items = [f"{pad}  {dumps(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    return _scalar(obj)


def save_document(path: str | Path, kind: str, body: dict) -> None:
    doc = {"format": "radpipe", "version": FORMAT_VERSION, "kind": kind, **body}
    Path(path).write_text(dumps(doc) + "\n", encoding="utf-8")


def load_document(path: str | Path, kind: str | None = None) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not a valid model document ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != "radpipe":
        raise ModelFormatError(f"{path}: not a radpipe document")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported version {doc.get('version')}")
    if kind is not None and doc.get("kind") != kind:
        raise ModelFormatError(f"{path}: expected a {kind!r} document, found {doc.get('kind')!r}")
    return doc
