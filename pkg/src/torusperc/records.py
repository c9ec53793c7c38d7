"""Self-describing experiment records and JSON-Lines / CSV plumbing."""

from __future__ import annotations

import dataclasses
import json
from importlib import metadata
from typing import Any, Iterable

import numpy as np

from .lattice import TorusSpec

SCHEMA_VERSION = 1


def code_revision() -> str:
    try:
        return "torusperc-" + metadata.version("torusperc")
    except metadata.PackageNotFoundError:
        return "torusperc-unknown"


def serialize(obj: Any) -> Any:
    """Recursively convert results into JSON-encodable structures."""
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        return obj
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, TorusSpec):
        out = obj.to_dict()
        out["degree"] = obj.degree
        out["volume"] = obj.volume
        return out
    if hasattr(obj, "to_json"):
        return serialize(obj.to_json())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {
            f.name: serialize(getattr(obj, f.name))
            for f in dataclasses.fields(obj)
            if not f.name.startswith("_")
        }
    if isinstance(obj, dict):
        return {_key(k): serialize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [serialize(v) for v in items]
    if isinstance(obj, np.ndarray):
        return [serialize(v) for v in obj.tolist()]
    return str(obj)


def _key(k: Any) -> str:
    if isinstance(k, tuple):
        return ",".join(str(c) for c in k)
    return str(k)


def make_record(
    command: str,
    spec: Any,
    params: dict,
    results: dict,
    seed: int,
    n: int | None,
    wall_time_s: float,
    censored: dict | None = None,
) -> dict:
    """One output line: parameters, results, provenance. Replayable alone."""
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "spec": serialize(spec),
        "params": serialize(params),
        "results": serialize(results),
        "seed": seed,
        "n": n,
        "censored": serialize(censored) if censored else None,
        "wall_time_s": wall_time_s,
        "code_revision": code_revision(),
    }


def record_line(record: dict) -> str:
    """Canonical one-line encoding (sorted keys, no trailing spaces)."""
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=True)


def read_records(lines: Iterable[str]):
    """Parse JSON-Lines, collecting (line_number, message) for bad lines."""
    records, errors = [], []
    for i, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            errors.append((i, f"malformed JSON: {exc}"))
            continue
        if not isinstance(rec, dict) or "command" not in rec:
            errors.append((i, "not an experiment record (missing command)"))
            continue
        records.append(rec)
    return records, errors
