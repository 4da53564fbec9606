"""Named parameter arrays with gradient slots, and the checkpoint file format.

Checkpoint layout (text header, then raw values)::

    VIRLCKPT 1
    config_hash <hex>
    arch_hash <hex>
    count <n>
    param <name> <d0xd1x...> <size>      (one line per parameter, declaration order)
    data
    <little-endian float32 values of every parameter, declaration order>
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
from pydantic import BaseModel, Field

from ..errors import CheckpointError, ShapeMismatchError, VirlError
from .tensor import Tensor, current_dtype

MAGIC = "VIRLCKPT 1"
_LE_F32 = np.dtype("<f4")


class CheckpointHeader(BaseModel):
    """Metadata stored ahead of the parameter values."""

    config_hash: str = Field(default="", description="Hash of the RunConfig that produced the file")
    arch_hash: str = Field(description="Hash over ordered (name, shape) records")
    names: list[str] = Field(description="Parameter names in declaration order")
    shapes: list[list[int]] = Field(description="Parameter shapes in declaration order")


class ParameterStore:
    """Ordered map name -> (value, gradient accumulator)."""

    def __init__(self) -> None:
        self._values: dict[str, np.ndarray] = {}
        self._grads: dict[str, np.ndarray] = {}

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __len__(self) -> int:
        return len(self._values)

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def names(self) -> list[str]:
        return list(self._values)

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self._values:
            raise VirlError(f"duplicate parameter name {name!r}", {"name": name})
        array = np.array(value, dtype=np.float32)
        if array.size == 0:
            raise ShapeMismatchError("add_parameter", [array.shape], "empty parameter")
        self._values[name] = array
        self._grads[name] = np.zeros_like(array)

    def value(self, name: str) -> np.ndarray:
        return self._values[name]

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def set_value(self, name: str, value: np.ndarray) -> None:
        current = self._values[name]
        value = np.asarray(value)
        if value.shape != current.shape:
            raise ShapeMismatchError("set_value", [current.shape, value.shape], name)
        self._values[name] = value.astype(current.dtype)

    def tensor(self, name: str) -> Tensor:
        """A graph leaf reading ``name``; backward adds into its gradient slot."""
        value = self._values[name]
        if value.dtype != current_dtype():
            value = value.astype(current_dtype())
        return Tensor(value, requires_grad=True, op="param", param_name=name, store=self)

    def accumulate(self, name: str, grad: np.ndarray) -> None:
        self._grads[name] = self._grads[name] + grad.astype(self._grads[name].dtype)

    def zero_grad(self) -> None:
        for name, g in self._grads.items():
            self._grads[name] = np.zeros_like(g)

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in self._grads.values())))

    def grads_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(g))) for g in self._grads.values())

    def copy(self) -> "ParameterStore":
        """Deep copy of values; gradients start at zero."""
        return self.astype(None)

    def astype(self, dtype: Optional[type]) -> "ParameterStore":
        clone = ParameterStore()
        for name, value in self._values.items():
            clone._values[name] = value.copy() if dtype is None else value.astype(dtype)
            clone._grads[name] = np.zeros_like(clone._values[name])
        return clone

    def select(self, prefix: str) -> "ParameterStore":
        """Copy of the parameters whose names start with ``prefix``."""
        clone = ParameterStore()
        for name, value in self._values.items():
            if name.startswith(prefix):
                clone.add(name, value)
        return clone

    def load_values(self, other: "ParameterStore") -> None:
        """Overwrite every parameter of ``self`` from ``other`` (names and shapes must match)."""
        for name in self._values:
            if name not in other:
                raise CheckpointError(f"parameter {name!r} missing from source", {"name": name})
            self.set_value(name, other.value(name))

    @staticmethod
    def union(*stores: "ParameterStore") -> "ParameterStore":
        merged = ParameterStore()
        for store in stores:
            for name in store:
                merged.add(name, store.value(name))
        return merged

    def vector(self) -> np.ndarray:
        return np.concatenate([v.reshape(-1) for v in self._values.values()])

    def arch_hash(self) -> str:
        digest = hashlib.sha256()
        for name, value in self._values.items():
            digest.update(f"{name}:{'x'.join(map(str, value.shape))};".encode())
        return digest.hexdigest()[:16]

    # Serialization

    def to_bytes(self, config_hash: str = "") -> bytes:
        lines = [
            MAGIC,
            f"config_hash {config_hash or '-'}",
            f"arch_hash {self.arch_hash()}",
            f"count {len(self._values)}",
        ]
        for name, value in self._values.items():
            shape = "x".join(map(str, value.shape)) if value.ndim else "scalar"
            lines.append(f"param {name} {shape} {value.size}")
        lines.append("data")
        header = ("\n".join(lines) + "\n").encode("utf-8")
        payload = b"".join(v.astype(_LE_F32).tobytes(order="C") for v in self._values.values())
        return header + payload

    @classmethod
    def from_bytes(cls, blob: bytes) -> tuple["ParameterStore", CheckpointHeader]:
        marker = b"\ndata\n"
        cut = blob.find(marker)
        if not blob.startswith(MAGIC.encode()) or cut < 0:
            raise CheckpointError("not a VIRLCKPT 1 checkpoint")
        lines = blob[:cut].decode("utf-8").split("\n")
        payload = memoryview(blob)[cut + len(marker) :]
        try:
            fields = dict(line.split(" ", 1) for line in lines[1:4])
            count = int(fields["count"])
            records = [line.split(" ") for line in lines[4 : 4 + count]]
        except (KeyError, ValueError) as e:
            raise CheckpointError(f"malformed checkpoint header: {e}") from e

        store = cls()
        names: list[str] = []
        shapes: list[list[int]] = []
        offset = 0
        for record in records:
            if len(record) != 4 or record[0] != "param":
                raise CheckpointError(f"malformed parameter record {record}")
            _, name, shape_text, size_text = record
            shape = [] if shape_text == "scalar" else [int(d) for d in shape_text.split("x")]
            size = int(size_text)
            nbytes = size * _LE_F32.itemsize
            if offset + nbytes > len(payload):
                raise CheckpointError("checkpoint truncated", {"name": name})
            values = np.frombuffer(payload[offset : offset + nbytes], dtype=_LE_F32)
            store.add(name, values.astype(np.float32).reshape(shape))
            names.append(name)
            shapes.append(shape)
            offset += nbytes
        if offset != len(payload):
            raise CheckpointError("trailing bytes after parameter data")

        config_hash = fields["config_hash"]
        header = CheckpointHeader(
            config_hash="" if config_hash == "-" else config_hash,
            arch_hash=fields["arch_hash"],
            names=names,
            shapes=shapes,
        )
        if header.arch_hash != store.arch_hash():
            raise CheckpointError("architecture hash does not match parameter records")
        return store, header

    def save(self, path: Path | str, config_hash: str = "") -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes(config_hash))

    @classmethod
    def load(cls, path: Path | str) -> tuple["ParameterStore", CheckpointHeader]:
        try:
            blob = Path(path).read_bytes()
        except OSError as e:
            raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
        return cls.from_bytes(blob)
