"""Disk cache for expensive spectral computations.

Location: $GLT_CACHE_DIR if set, else ~/.cache/toepspec.  Keys embed a
hash of the generating symbol so stale entries cannot be confused with a
different operator.
"""
from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np

from .symbols import MatrixSymbol


def cache_dir() -> Path:
    root = os.environ.get("GLT_CACHE_DIR")
    path = Path(root) if root else Path.home() / ".cache" / "toepspec"
    path.mkdir(parents=True, exist_ok=True)
    return path


def symbol_hash(sym: MatrixSymbol) -> str:
    return hashlib.sha256(sym.to_json().encode()).hexdigest()[:16]


def load_array(key: str) -> np.ndarray | None:
    path = cache_dir() / f"{key}.npy"
    if path.exists():
        return np.load(path)
    return None


def store_array(key: str, arr: np.ndarray) -> None:
    path = cache_dir() / f"{key}.npy"
    tmp = path.with_suffix(".tmp.npy")
    np.save(tmp, arr)
    tmp.replace(path)
