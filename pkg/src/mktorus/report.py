"""JSON-lines run reports and their Markdown rendering.

One record per measurement. Every record carries ``schema`` and ``kind``;
``seconds`` is the only timing field and is excluded from replay
comparisons.
"""

from __future__ import annotations

import json
import platform
from pathlib import Path

import numpy as np

SCHEMA = 1
TIMING_FIELDS = frozenset({"seconds"})

# kind -> (title, columns)
TABLES = {
    "distdec": ("Distributed decryption", ["parties", "bits", "groups", "accuracy", "messages", "seconds"]),
    "plain_accuracy": ("Plaintext training accuracy",
                       ["model", "dataset", "mode", "activation", "accuracy", "seconds"]),
    "cipher_accuracy": ("Encrypted training accuracy",
                        ["model", "dataset", "backend", "activation", "accuracy", "matches_int",
                         "bootstrapped", "seconds"]),
    "activation_cost": ("Activation cost in ciphertext",
                        ["function", "width", "backend", "bootstrapped", "free", "ratio_vs_g", "seconds"]),
    "keygen": ("Key generation", ["parties", "n", "alpha", "seed"]),
    "encrypt": ("Encryption", ["party", "bits", "parties", "out"]),
    "dataset": ("Generated data", ["samples", "features", "noise", "seed", "out"]),
}


def environment() -> dict:
    return {"python": platform.python_version(), "numpy": np.__version__,
            "machine": platform.machine()}


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def make_record(kind: str, **fields) -> dict:
    if kind not in TABLES:
        raise ValueError(f"unknown record kind {kind!r}")
    return {"schema": SCHEMA, "kind": kind, **_plain(fields)}


def append(path, records) -> None:
    with open(path, "a") as f:
        for r in records:
            f.write(json.dumps(r, sort_keys=True) + "\n")


def read(path) -> list[dict]:
    out = []
    for i, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec.get("schema") != SCHEMA:
            raise ValueError(f"{path}:{i}: unsupported schema {rec.get('schema')!r}")
        out.append(rec)
    return out


def payload(record: dict) -> dict:
    """Record without timing fields, for replay comparisons."""
    return {k: v for k, v in record.items() if k not in TIMING_FIELDS}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _with_ratios(records) -> list[dict]:
    """Fill ``ratio_vs_g`` for activation records that have a ``g`` peer."""
    base = {(r["width"], r.get("backend")): r["bootstrapped"] for r in records
            if r.get("kind") == "activation_cost" and r.get("function") == "g"}
    out = []
    for r in records:
        key = (r.get("width"), r.get("backend"))
        if r.get("kind") == "activation_cost" and base.get(key):
            r = {**r, "ratio_vs_g": r["bootstrapped"] / base[key]}
        out.append(r)
    return out


def render_markdown(records) -> str:
    """Group records by kind, one table per kind in a fixed order."""
    records = _with_ratios(records)
    parts = []
    for kind, (title, cols) in TABLES.items():
        rows = [r for r in records if r.get("kind") == kind]
        if not rows:
            continue
        parts.append(f"### {title}\n")
        parts.append("| " + " | ".join(cols) + " |")
        parts.append("|" + "---|" * len(cols))
        for r in rows:
            parts.append("| " + " | ".join(_fmt(r.get(c)) for c in cols) + " |")
        parts.append("")
    return "\n".join(parts)
