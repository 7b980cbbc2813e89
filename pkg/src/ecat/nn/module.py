"""Minimal parameter container with deterministic traversal order."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import Parameter

__all__ = ["Module"]


class Module:
    """Holds named Parameters, buffers and child modules.

    Registration order is the traversal order, so checkpoints and
    optimizer state are reproducible across runs.
    """

    def __init__(self):
        self._params: dict[str, Parameter] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, Module] = {}

    def param(self, name: str, data: np.ndarray) -> Parameter:
        p = Parameter(np.asarray(data, dtype=np.float32), name=name)
        self._params[name] = p
        return p

    def buffer(self, name: str, data: np.ndarray) -> np.ndarray:
        arr = np.ascontiguousarray(np.asarray(data, dtype=np.float32))
        self._buffers[name] = arr
        return arr

    def set_buffer(self, name: str, data: np.ndarray) -> None:
        if name not in self._buffers:
            raise KeyError(name)
        self._buffers[name] = np.ascontiguousarray(np.asarray(data, dtype=np.float32))

    def get_buffer(self, name: str) -> np.ndarray:
        return self._buffers[name]

    def child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    # -- traversal ------------------------------------------------------

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, p in self._params.items():
            yield (f"{prefix}{name}", p)
        for cname, child in self._children.items():
            yield from child.named_parameters(prefix=f"{prefix}{cname}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, b in self._buffers.items():
            yield (f"{prefix}{name}", b)
        for cname, child in self._children.items():
            yield from child.named_buffers(prefix=f"{prefix}{cname}.")

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    # -- state I/O -------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        for name, b in self.named_buffers():
            state[f"buffer:{name}"] = b
        return state

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        bufs = dict(self.named_buffers())
        expected = set(own) | {f"buffer:{n}" for n in bufs}
        if set(state) != expected:
            missing = expected - set(state)
            extra = set(state) - expected
            raise ValueError(f"state mismatch: missing={sorted(missing)}, unexpected={sorted(extra)}")
        for name, p in own.items():
            arr = state[name]
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
            p.data = np.ascontiguousarray(arr.astype(np.float32))
            p.zero_grad()
        for name in bufs:
            arr = state[f"buffer:{name}"]
            self._set_buffer_by_path(name, arr)

    def _set_buffer_by_path(self, path: str, arr: np.ndarray) -> None:
        parts = path.split(".")
        mod = self
        for part in parts[:-1]:
            mod = mod._children[part]
        mod.set_buffer(parts[-1], arr)

    def astype(self, dtype) -> "Module":
        """Cast all parameters/buffers in place (float64 for grad checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = np.zeros_like(p.data)
        for mod in self._iter_modules():
            for name in list(mod._buffers):
                mod._buffers[name] = mod._buffers[name].astype(dtype)
        return self

    def _iter_modules(self):
        yield self
        for child in self._children.values():
            yield from child._iter_modules()
