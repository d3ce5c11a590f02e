"""Named parameter collections and the JSON checkpoint container."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import CorruptFile, NumericalError, ShapeError, UnsupportedVersion
from .tensor import Tensor

CHECKPOINT_FORMAT = "graphaugment-checkpoint"
CHECKPOINT_VERSION = 1


class ParameterSet:
    """Ordered ``name -> Tensor`` map with a seeded initializer.

    Parameters are created through :meth:`glorot`, :meth:`zeros` or
    :meth:`constant`; all draws come from one generator seeded at
    construction, so creation order plus seed fixes every value.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._rng = np.random.default_rng(self.seed)
        self._params: dict[str, Tensor] = {}

    def _add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(data, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def glorot(self, name: str, shape: tuple[int, ...]) -> Tensor:
        fan_in = shape[0]
        fan_out = shape[1] if len(shape) > 1 else shape[0]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return self._add(name, self._rng.uniform(-bound, bound, size=shape))

    def zeros(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self._add(name, np.zeros(shape))

    def constant(self, name: str, value) -> Tensor:
        return self._add(name, np.array(value, dtype=np.float64))

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in self._params.items()}

    def zero_all(self):
        """Set every value to 0 (handy for closed-form checks)."""
        for p in self._params.values():
            p.data[...] = 0.0

    def check_finite(self):
        for k, p in self._params.items():
            if not np.all(np.isfinite(p.data)):
                raise NumericalError(f"parameter {k!r} is not finite")

    def copy(self) -> "ParameterSet":
        other = ParameterSet(self.seed)
        for k, p in self._params.items():
            other._add(k, p.data.copy())
        return other

    def state(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]):
        for k, p in self._params.items():
            v = np.asarray(state[k], dtype=np.float64)
            if v.shape != p.shape:
                raise ShapeError(f"parameter {k!r}: stored shape {v.shape} != {p.shape}")
            p.data[...] = v

    def to_json(self) -> dict:
        return {
            k: {"shape": list(p.shape), "values": p.data.ravel().tolist()}
            for k, p in self._params.items()
        }

    @classmethod
    def from_json(cls, obj: dict, seed: int = 0) -> "ParameterSet":
        ps = cls(seed)
        for k, entry in obj.items():
            shape = tuple(entry["shape"])
            values = np.asarray(entry["values"], dtype=np.float64)
            if values.size != int(np.prod(shape)):
                raise CorruptFile(f"parameter {k!r}: {values.size} values for shape {shape}")
            ps._add(k, values.reshape(shape))
        return ps


def save_checkpoint(path, kind: str, seed: int, meta: dict, groups: dict[str, ParameterSet]):
    """Write a versioned JSON container. Floats are stored by ``repr`` so
    loading reproduces every value exactly."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "seed": int(seed),
        "meta": meta,
        "params": {name: ps.to_json() for name, ps in groups.items()},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_checkpoint(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"{path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CorruptFile(f"{path}: not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise UnsupportedVersion(f"{path}: checkpoint version {doc.get('version')!r}")
    doc["groups"] = {
        name: ParameterSet.from_json(obj, doc["seed"]) for name, obj in doc["params"].items()
    }
    return doc
