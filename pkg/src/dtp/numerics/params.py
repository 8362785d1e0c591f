"""Named parameter registry and the binary checkpoint format.

Checkpoint layout::

    DTPCKPT\\n
    <one line of JSON: format version, dtype, tensor names/shapes/flags, meta>\\n
    <little-endian raw arrays, concatenated in header order>
"""

from __future__ import annotations

import io
import json
from collections import OrderedDict
from pathlib import Path
from typing import Iterator

import numpy as np

from .tensor import Tensor

MAGIC = b"DTPCKPT\n"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class ParamStore:
    """Ordered mapping of parameter name -> Tensor, with a per-name learnable flag.

    Iteration order is insertion order, so it is stable across runs as long
    as models register parameters in a fixed sequence.
    """

    def __init__(self):
        self._tensors: OrderedDict[str, Tensor] = OrderedDict()

    def add(self, name: str, value, learnable: bool = True, dtype=None) -> Tensor:
        if name in self._tensors:
            raise KeyError(f"duplicate parameter name {name!r}")
        arr = np.array(value, dtype=dtype if dtype is not None else np.asarray(value).dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        t = Tensor(arr, requires_grad=learnable)
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def tensors(self) -> Iterator[Tensor]:
        return iter(self._tensors.values())

    def is_learnable(self, name: str) -> bool:
        return self._tensors[name].requires_grad

    def set_learnable(self, name: str, flag: bool) -> None:
        self._tensors[name].requires_grad = flag

    def learnable_names(self) -> list[str]:
        return [n for n, t in self._tensors.items() if t.requires_grad]

    def n_elements(self, learnable_only: bool = False) -> int:
        return sum(t.size for t in self._tensors.values() if t.requires_grad or not learnable_only)

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = np.zeros_like(t.data)

    def state(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._tensors.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        """Overwrite values in place (tensor objects are kept, so model views stay valid)."""
        missing = set(self._tensors) ^ set(state)
        if missing:
            raise KeyError(f"state names differ from store: {sorted(missing)}")
        for n, t in self._tensors.items():
            v = np.asarray(state[n])
            if v.shape != t.shape:
                raise ValueError(f"shape mismatch for {n}: store {t.shape}, state {v.shape}")
            t.data = v.astype(t.dtype, copy=True)

    def astype(self, dtype) -> None:
        for t in self._tensors.values():
            t.data = t.data.astype(dtype)
            t.grad = None

    # -- persistence -----------------------------------------------------
    def to_bytes(self, meta: dict | None = None) -> bytes:
        dtypes = {t.dtype for t in self._tensors.values()}
        if len(dtypes) > 1:
            raise CheckpointError(f"mixed parameter dtypes {sorted(map(str, dtypes))}")
        dtype = np.dtype(next(iter(dtypes))) if dtypes else np.dtype(np.float32)
        le = dtype.newbyteorder("<")
        header = {
            "format": "dtp-checkpoint",
            "version": FORMAT_VERSION,
            "dtype": le.str,
            "tensors": [{"name": n, "shape": list(t.shape), "learnable": t.requires_grad}
                        for n, t in self._tensors.items()],
            "meta": meta or {},
        }
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n")
        for t in self._tensors.values():
            buf.write(np.ascontiguousarray(t.data, dtype=le).tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, raw: bytes) -> tuple["ParamStore", dict]:
        if not raw.startswith(MAGIC):
            raise CheckpointError("not a DTP checkpoint (bad magic)")
        end = raw.index(b"\n", len(MAGIC))
        try:
            header = json.loads(raw[len(MAGIC):end])
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
        version = header.get("version")
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version!r} "
                                  f"(this build reads version {FORMAT_VERSION})")
        dtype = np.dtype(header["dtype"])
        store = cls()
        offset = end + 1
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            nbytes = count * dtype.itemsize
            chunk = raw[offset:offset + nbytes]
            if len(chunk) != nbytes:
                raise CheckpointError(f"truncated checkpoint while reading {entry['name']}")
            arr = np.frombuffer(chunk, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
            store.add(entry["name"], arr, learnable=entry["learnable"])
            offset += nbytes
        if offset != len(raw):
            raise CheckpointError(f"{len(raw) - offset} trailing bytes after last tensor")
        return store, header.get("meta", {})

    def save(self, path, meta: dict | None = None) -> None:
        from ..io_utils import atomic_write_bytes
        atomic_write_bytes(Path(path), self.to_bytes(meta))

    @classmethod
    def load(cls, path) -> tuple["ParamStore", dict]:
        return cls.from_bytes(Path(path).read_bytes())
