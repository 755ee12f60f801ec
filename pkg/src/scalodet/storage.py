"""Atomic file output and the JSON + NPY persistence helpers.

Fitted artifacts (PCA maps, random matrices, memory banks) are stored as a
JSON metadata file plus a single NPY payload so reloads are bit-exact.
"""

from __future__ import annotations

import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .errors import DataError


@contextmanager
def atomic_write(path, mode="w"):
    """Yield a file handle for ``path`` written via a temp file + rename.

    The temporary file lives in the target directory so ``os.replace`` is
    atomic on POSIX. On error the temp file is removed and nothing is left
    at ``path``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as handle:
            yield handle
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_json(obj, path):
    """Write ``obj`` as sorted, indented JSON. Byte-stable across reruns."""
    with atomic_write(path) as handle:
        json.dump(obj, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_json(path):
    path = Path(path)
    try:
        with open(path) as handle:
            return json.load(handle)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc


def save_array_bundle(stem, meta, payload):
    """Persist ``meta`` to ``<stem>.json`` and ``payload`` to ``<stem>.npy``."""
    stem = Path(stem)
    payload = np.asarray(payload)
    with atomic_write(stem.with_suffix(".npy"), "wb") as handle:
        np.save(handle, payload)
    write_json(meta, stem.with_suffix(".json"))


def load_array_bundle(stem):
    stem = Path(stem)
    meta = read_json(stem.with_suffix(".json"))
    npy_path = stem.with_suffix(".npy")
    try:
        payload = np.load(npy_path)
    except OSError as exc:
        raise DataError(f"cannot read {npy_path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{npy_path} is not a valid NPY file: {exc}") from exc
    return meta, payload


def write_scores_csv(path, scores, freq_rows=None):
    """Write the per-time score series as ``t,score`` (plus optional row column).

    Floats are formatted with ``repr`` so identical runs produce identical
    bytes and values reload exactly.
    """
    scores = np.asarray(scores, dtype=np.float64)
    with atomic_write(path) as handle:
        if freq_rows is None:
            handle.write("t,score\n")
            for t, value in enumerate(scores):
                handle.write(f"{t},{float(value)!r}\n")
        else:
            freq_rows = np.asarray(freq_rows)
            if freq_rows.shape != scores.shape:
                raise DataError("freq_rows length does not match scores")
            handle.write("t,score,freq_row\n")
            for t, value in enumerate(scores):
                handle.write(f"{t},{float(value)!r},{int(freq_rows[t])}\n")


def read_scores_csv(path):
    """Read a scores CSV back into (scores, freq_rows-or-None)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    lines = [line for line in text.splitlines() if line]
    if not lines:
        raise DataError(f"{path} is empty")
    header = lines[0].split(",")
    if header[:2] != ["t", "score"]:
        raise DataError(f"{path}: unexpected header {lines[0]!r}")
    has_rows = len(header) == 3
    scores = np.empty(len(lines) - 1)
    rows = np.empty(len(lines) - 1, dtype=np.int64) if has_rows else None
    for k, line in enumerate(lines[1:]):
        parts = line.split(",")
        if len(parts) != len(header):
            raise DataError(f"{path}: malformed line {k + 2}")
        try:
            t = int(parts[0])
            scores[k] = float(parts[1])
            if has_rows:
                rows[k] = int(parts[2])
        except ValueError as exc:
            raise DataError(f"{path}: malformed line {k + 2}: {exc}") from exc
        if t != k:
            raise DataError(f"{path}: non-contiguous time index at line {k + 2}")
    return scores, rows
