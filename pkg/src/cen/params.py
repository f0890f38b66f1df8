"""Named trainable parameters, the Adam optimizer, and checkpoint I/O.

Checkpoint layout (all integers little-endian):

    magic            7 bytes  b"CENCKPT"
    format version   uint32
    entry count      uint32
    per entry:
        name length  uint32
        name         utf-8 bytes
        rank         uint32
        dims         rank x uint64
        data         row-major float64, little-endian

Round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError
from .tensor import Tensor

CHECKPOINT_MAGIC = b"CENCKPT"
CHECKPOINT_VERSION = 1


class ParamStore:
    """Ordered map of name -> Tensor with a trainable/frozen flag per entry."""

    def __init__(self):
        self._entries: dict[str, Tensor] = {}
        self._trainable: dict[str, bool] = {}

    def add(self, name: str, data, trainable: bool = True) -> Tensor:
        if name in self._entries:
            raise ContractError(f"parameter {name!r} already exists")
        t = Tensor(data, requires_grad=trainable)
        self._entries[name] = t
        self._trainable[name] = trainable
        return t

    def remove(self, name: str) -> None:
        del self._entries[name]
        del self._trainable[name]

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def trainable_names(self) -> list[str]:
        return [n for n, f in self._trainable.items() if f]

    def is_trainable(self, name: str) -> bool:
        return self._trainable[name]

    def set_trainable(self, name: str, trainable: bool) -> None:
        self._trainable[name] = trainable
        self._entries[name].requires_grad = trainable

    def items(self):
        return self._entries.items()

    def copy_values(self) -> dict[str, np.ndarray]:
        """Deep copy of all entry arrays (checkpoint handle for restores)."""
        return {n: t.data.copy() for n, t in self._entries.items()}

    def load_values(self, values: dict[str, np.ndarray], strict: bool = True) -> None:
        """Write values back in place; with ``strict`` the key sets must match."""
        if strict and set(values) != set(self._entries):
            missing = set(self._entries) - set(values)
            extra = set(values) - set(self._entries)
            raise ContractError(
                f"parameter set mismatch (missing={sorted(missing)}, extra={sorted(extra)})"
            )
        for n, arr in values.items():
            t = self._entries[n]
            if t.data.shape != arr.shape:
                raise ContractError(
                    f"shape mismatch for {n!r}: {t.data.shape} vs {arr.shape}"
                )
            t.data = arr.copy()


class AdamState:
    """Per-parameter first/second moments plus the shared step counter."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adam_step(params: ParamStore, grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One Adam update with bias correction; frozen entries are untouched.

    ``grads`` must cover exactly the trainable entries.
    """
    trainable = params.trainable_names()
    missing = [n for n in trainable if n not in grads]
    if missing:
        raise ContractError(f"adam_step: missing gradients for {missing}")
    extra = [n for n in grads if n not in trainable]
    if extra:
        raise ContractError(f"adam_step: gradients for non-trainable entries {extra}")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name in trainable:
        g = grads[name]
        p = params[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so the global L2 norm is <= max_norm."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total


# ---------------------------------------------------------------------------
# checkpoint I/O

def save_checkpoint(params: ParamStore, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(params))]
    for name, t in params.items():
        nb = name.encode("utf-8")
        arr = np.asarray(t.data, dtype="<f8", order="C")
        chunks.append(struct.pack("<I", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes(order="C"))
    path.write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> ParamStore:
    """Read a checkpoint; all entries load as trainable (flags are not stored)."""
    raw = Path(path).read_bytes()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    off = len(CHECKPOINT_MAGIC)

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(raw):
            raise DataError(f"{path}: truncated checkpoint")
        out = raw[off : off + n]
        off += n
        return out

    version, count = struct.unpack("<II", take(8))
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    store = ParamStore()
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank)) if rank else ()
        n_items = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(take(8 * n_items), dtype="<f8").reshape(dims).copy()
        store.add(name, data, trainable=True)
    if off != len(raw):
        raise DataError(f"{path}: trailing bytes after last entry")
    return store
