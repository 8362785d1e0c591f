"""Atomic file writes, reproducible .npz archives and worker-count lookup."""

from __future__ import annotations

import io
import os
import tempfile
import zipfile
from pathlib import Path

import numpy as np


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_npz(path, arrays: dict) -> None:
    """Like ``np.savez`` but with fixed entry timestamps, so equal arrays give equal bytes."""
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        for name, value in arrays.items():
            member = io.BytesIO()
            np.lib.format.write_array(member, np.asarray(value), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0)),
                        member.getvalue())
    atomic_write_bytes(path, buf.getvalue())


def worker_count(default: int | None = None) -> int:
    """Worker cap from ``DTP_THREADS`` (falls back to the CPU count)."""
    raw = os.environ.get("DTP_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"DTP_THREADS must be a positive integer, got {raw!r}") from None
        if n < 1:
            raise ValueError(f"DTP_THREADS must be a positive integer, got {raw!r}")
        return n
    return default or os.cpu_count() or 1
