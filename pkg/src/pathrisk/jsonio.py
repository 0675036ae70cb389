"""Canonical report output: sorted keys, floats rounded to 12 decimal
places, non-finite floats serialized as strings, no timestamps. Two runs
with the same inputs and seed therefore produce byte-identical files.
"""

import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np


class OutputExistsError(FileExistsError):
    pass


def _canon(obj):
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if not math.isfinite(f):
            return "inf" if f > 0 else ("-inf" if f < 0 else "nan")
        r = round(f, 12)
        return r + 0.0   # normalize -0.0
    if isinstance(obj, np.ndarray):
        return _canon(obj.tolist())
    return obj


def canonical_dumps(obj):
    return json.dumps(_canon(obj), sort_keys=True, indent=1,
                      separators=(",", ": "))


def write_json(path, obj, force=False):
    path = Path(path)
    if path.exists() and not force:
        raise OutputExistsError(f"{path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_dumps(obj) + "\n", encoding="utf-8")


def _csv_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if not math.isfinite(f):
            return "inf" if f > 0 else "-inf"
        return f"{round(f, 12) + 0.0:.12g}"
    return str(v)


def write_csv(path, header, rows, force=False):
    path = Path(path)
    if path.exists() and not force:
        raise OutputExistsError(f"{path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines.extend(",".join(_csv_cell(c) for c in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_manifest(subcommand, seed, inputs, config):
    """Run provenance: tool version, seed, input digests, config hash.

    Deliberately timestamp-free so reruns are byte-identical.
    """
    from . import __version__
    manifest = {"tool": "pathrisk", "version": __version__,
                "subcommand": subcommand, "seed": seed,
                "inputs": {name: {"path": str(p),
                                  "sha256": file_sha256(p)}
                           for name, p in sorted(inputs.items())
                           if p is not None},
                "config_hash": hashlib.sha256(
                    canonical_dumps(config).encode()).hexdigest()}
    return manifest


def default_out_dir():
    return os.environ.get("PATHRISK_OUT", "out")
