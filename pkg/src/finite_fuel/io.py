"""Deterministic JSON output.

Keys are sorted, text is UTF-8 and floats use Python's shortest round-trip
``repr``, so the same numbers always give the same bytes. Non-finite floats
become ``null``. Wall-clock data goes to a separate metadata file.
"""

from __future__ import annotations

import json
import math
import os
import platform
import time
from pathlib import Path

import numpy as np


def plain(obj):
    """Recursively convert numpy scalars/arrays and tuples to JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(plain(obj), sort_keys=True, ensure_ascii=False, indent=2,
                      allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def write_metadata(out_dir, command: str, config_path: str, started: float, files) -> Path:
    """Timestamps and environment, kept apart from the reproducible outputs."""
    from . import __version__

    return write_json(Path(out_dir) / "metadata.json", {
        "command": command,
        "config": os.fspath(config_path),
        "started_unix": started,
        "elapsed_seconds": time.time() - started,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "version": __version__,
        "files": sorted(files),
    })
