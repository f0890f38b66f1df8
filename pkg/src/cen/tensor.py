"""Dense float64 tensors with reverse-mode automatic differentiation.

Arrays are numpy float64 throughout; the autodiff layer is an explicit tape.
Ops executed while a :class:`Tape` is active append their output to the tape
in execution order, which is a valid topological order of the graph, so
:func:`backward` is a single reverse sweep over the record. A tape is
single-use: ``backward`` consumes and clears it.

Tensors created while no tape is active carry no tape node and are plain
forward values (the evaluation path has zero autodiff overhead).
"""

from __future__ import annotations

import os
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, ContractError, ShapeError

_DEBUG = bool(int(os.environ.get("CEN_DEBUG", "0") or "0"))


def set_debug(on: bool) -> None:
    """Toggle per-op finiteness assertions (slow; for debugging only)."""
    global _DEBUG
    _DEBUG = bool(on)


class _Node:
    """Backward closure plus the tensors it feeds gradients into."""

    __slots__ = ("fn",)

    def __init__(self, fn: Callable[[np.ndarray], None]):
        self.fn = fn


class Tensor:
    """A dense float64 array, optionally registered on the active tape.

    ``node`` is set only for op outputs recorded on a tape; leaf tensors that
    should receive gradients must be created with ``requires_grad=True``
    (ParamStore does this for trainable entries).
    """

    __slots__ = ("data", "grad", "node", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        # order="C" (not ascontiguousarray) so 0-d scalars keep their shape
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self.grad: np.ndarray | None = None
        self.node: _Node | None = None
        self.requires_grad = requires_grad
        if _DEBUG and not np.all(np.isfinite(self.data)):
            raise ContractError("non-finite values in tensor")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Tensor(shape={self.shape}, tracked={self.node is not None})"


_ACTIVE_TAPE: "Tape | None" = None


class Tape:
    """Execution-ordered record of op outputs for one forward pass."""

    def __init__(self):
        self._record: list[Tensor] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise ContractError("a gradient tape is already active")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None

    def _clear(self) -> None:
        for t in self._record:
            t.grad = None
            t.node = None
        self._record.clear()
        self._consumed = True


def active_tape() -> Tape | None:
    return _ACTIVE_TAPE


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _needs_grad(t: Tensor) -> bool:
    return t.node is not None or t.requires_grad


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _register(out: Tensor, fn: Callable[[np.ndarray], None]) -> Tensor:
    tape = _ACTIVE_TAPE
    if tape is not None:
        out.node = _Node(fn)
        tape._record.append(out)
    if _DEBUG and not np.all(np.isfinite(out.data)):
        raise ContractError("non-finite values produced by op")
    return out


def backward(loss: Tensor, params=None) -> dict[str, np.ndarray]:
    """Reverse sweep from a scalar loss; returns gradients for ``params``.

    Gradients accumulate (+=) across fan-out. The tape is consumed: the
    record is cleared and intermediate grads dropped. When ``params`` (a
    ParamStore) is given, the returned map covers exactly its trainable
    entries, with zeros for parameters the loss does not reach.
    """
    if loss.node is None:
        raise ContractError("backward: loss is not registered on a tape")
    if loss.data.shape != ():
        raise ContractError(
            f"backward: loss must be scalar, got shape {loss.data.shape}"
        )
    tape = _ACTIVE_TAPE
    if tape is None or tape._consumed:
        raise ContractError("backward: no active tape (already consumed?)")

    loss.grad = np.ones((), dtype=np.float64)
    for t in reversed(tape._record):
        if t.grad is not None and t.node is not None:
            t.node.fn(t.grad)

    grads: dict[str, np.ndarray] = {}
    if params is not None:
        for name in params.trainable_names():
            p = params[name]
            grads[name] = p.grad if p.grad is not None else np.zeros_like(p.data)
            p.grad = None
    tape._clear()
    return grads


# ---------------------------------------------------------------------------
# broadcasting helper

def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# arithmetic ops

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data)

    def fn(g):
        if _needs_grad(a):
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if _needs_grad(b):
            _accumulate(b, _unbroadcast(g, b.data.shape))

    return _register(out, fn)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data)

    def fn(g):
        if _needs_grad(a):
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if _needs_grad(b):
            _accumulate(b, -_unbroadcast(g, b.data.shape))

    return _register(out, fn)


def mul(a, b) -> Tensor:
    """Elementwise product (with numpy broadcasting)."""
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data)

    def fn(g):
        if _needs_grad(a):
            _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        if _needs_grad(b):
            _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _register(out, fn)


def scale(x, c: float) -> Tensor:
    x = _as_tensor(x)
    c = float(c)
    out = Tensor(x.data * c)

    def fn(g):
        if _needs_grad(x):
            _accumulate(x, g * c)

    return _register(out, fn)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)

    def fn(g):
        if _needs_grad(a):
            _accumulate(a, g @ b.data.T)
        if _needs_grad(b):
            _accumulate(b, a.data.T @ g)

    return _register(out, fn)


def transpose(x) -> Tensor:
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"transpose: expected rank 2, got shape {x.shape}")
    out = Tensor(x.data.T)

    def fn(g):
        if _needs_grad(x):
            _accumulate(x, g.T)

    return _register(out, fn)


def sum_all(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data.sum())

    def fn(g):
        if _needs_grad(x):
            _accumulate(x, np.full(x.data.shape, float(g)))

    return _register(out, fn)


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data.reshape(shape))

    def fn(g):
        if _needs_grad(x):
            _accumulate(x, g.reshape(x.data.shape))

    return _register(out, fn)


def concat_rows(tensors: Iterable[Tensor]) -> Tensor:
    """Concatenate along axis 0."""
    ts = [_as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in ts], axis=0))
    sizes = [t.data.shape[0] for t in ts]

    def fn(g):
        off = 0
        for t, n in zip(ts, sizes):
            if _needs_grad(t):
                _accumulate(t, g[off : off + n])
            off += n

    return _register(out, fn)


def stack_pair(a, b) -> Tensor:
    """Stack two rows of equal width into a 2-row matrix [a; b]."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"stack_pair: shapes differ {a.shape} vs {b.shape}")
    out = Tensor(np.stack([a.data, b.data], axis=-2))

    def fn(g):
        if _needs_grad(a):
            _accumulate(a, g[..., 0, :])
        if _needs_grad(b):
            _accumulate(b, g[..., 1, :])

    return _register(out, fn)


def normalize_rows(x, eps: float = 1e-12) -> Tensor:
    """Scale each row to unit L2 norm (rows of all zeros pass through)."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"normalize_rows: expected rank 2, got {x.shape}")
    norms = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True))
    safe = np.maximum(norms, eps)
    y = x.data / safe
    out = Tensor(y)

    def fn(g):
        if _needs_grad(x):
            dot = (g * y).sum(axis=1, keepdims=True)
            _accumulate(x, (g - y * dot) / safe)

    return _register(out, fn)


# ---------------------------------------------------------------------------
# nonlinearities

def relu(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0))

    def fn(g):
        if _needs_grad(x):
            _accumulate(x, g * (x.data > 0.0))

    return _register(out, fn)


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    s = 1.0 / (1.0 + np.exp(-x.data))
    out = Tensor(s)

    def fn(g):
        if _needs_grad(x):
            _accumulate(x, g * s * (1.0 - s))

    return _register(out, fn)


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    th = np.tanh(x.data)
    out = Tensor(th)

    def fn(g):
        if _needs_grad(x):
            _accumulate(x, g * (1.0 - th * th))

    return _register(out, fn)


def identity(x) -> Tensor:
    return _as_tensor(x)


ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "relu": relu,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "identity": identity,
}


def activation(name: str) -> Callable[[Tensor], Tensor]:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ConfigError(
            f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}"
        ) from None


# ---------------------------------------------------------------------------
# regularization / lookup / aggregation

def dropout(x, rate: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout. Identity when rate is 0 or in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    x = _as_tensor(x)
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in train mode requires a seeded rng")
    mask = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    out = Tensor(x.data * mask)

    def fn(g):
        if _needs_grad(x):
            _accumulate(x, g * mask)

    return _register(out, fn)


def lookup_rows(x, indices) -> Tensor:
    """Row gather with sparse gradient accumulation on the source."""
    x = _as_tensor(x)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= x.data.shape[0]):
        raise IndexError(
            f"lookup_rows: index out of range for {x.data.shape[0]} rows"
        )
    out = Tensor(x.data[idx])

    def fn(g):
        if _needs_grad(x):
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            np.add.at(x.grad, idx, g)

    return _register(out, fn)


def segment_mean(values, segments, num_segments: int) -> Tensor:
    """Mean of value rows grouped by segment id; empty segments give zeros."""
    values = _as_tensor(values)
    seg = np.asarray(segments, dtype=np.int64)
    if seg.shape[0] != values.data.shape[0]:
        raise ShapeError(
            f"segment_mean: {values.data.shape[0]} rows but {seg.shape[0]} segment ids"
        )
    counts = np.bincount(seg, minlength=num_segments).astype(np.float64)
    acc = np.zeros((num_segments,) + values.data.shape[1:], dtype=np.float64)
    np.add.at(acc, seg, values.data)
    safe = np.maximum(counts, 1.0)
    out = Tensor(acc / safe.reshape((-1,) + (1,) * (values.data.ndim - 1)))

    def fn(g):
        if _needs_grad(values):
            _accumulate(values, g[seg] / safe[seg].reshape((-1,) + (1,) * (values.data.ndim - 1)))

    return _register(out, fn)


# ---------------------------------------------------------------------------
# convolution over a stacked [s; r] pair

def _check_kernels(kernels: Tensor, width_name: str = "M") -> int:
    if kernels.data.ndim != 3:
        raise ShapeError(f"kernels must be rank 3 (C x 2 x {width_name}), got {kernels.shape}")
    c, h, m = kernels.shape
    if h != 2:
        raise ShapeError(f"kernel height must be 2, got {h}")
    if m % 2 == 0:
        raise ConfigError(f"kernel width must be odd for same-padding, got {m}")
    return m


def conv_stack(pair, kernels) -> Tensor:
    """Slide C kernels of size 2 x M along a 2 x d pair with zero same-padding.

    Output row c is the width-d feature map of kernel c. Differentiable in
    both the pair and the kernels.
    """
    pair, kernels = _as_tensor(pair), _as_tensor(kernels)
    if pair.data.ndim != 2 or pair.data.shape[0] != 2:
        raise ShapeError(f"conv_stack: pair must be 2 x d, got {pair.shape}")
    m = _check_kernels(kernels)
    d = pair.data.shape[1]
    p = (m - 1) // 2
    padded = np.zeros((2, d + m - 1), dtype=np.float64)
    padded[:, p : p + d] = pair.data
    # windows[i, j, t] = padded[i, j + t]
    windows = np.stack([padded[:, t : t + d] for t in range(m)], axis=-1)
    out = Tensor(np.einsum("cit,ijt->cj", kernels.data, windows))

    def fn(g):
        if _needs_grad(kernels):
            _accumulate(kernels, np.einsum("cj,ijt->cit", g, windows))
        if _needs_grad(pair):
            gp = np.zeros_like(padded)
            for t in range(m):
                gp[:, t : t + d] += np.einsum("cj,ci->ij", g, kernels.data[:, :, t])
            _accumulate(pair, gp[:, p : p + d])

    return _register(out, fn)


def conv_stack_batch(pairs, kernels) -> Tensor:
    """Batched :func:`conv_stack`: (B x 2 x d, C x 2 x M) -> B x C x d."""
    pairs, kernels = _as_tensor(pairs), _as_tensor(kernels)
    if pairs.data.ndim != 3 or pairs.data.shape[1] != 2:
        raise ShapeError(f"conv_stack_batch: pairs must be B x 2 x d, got {pairs.shape}")
    m = _check_kernels(kernels)
    b, _, d = pairs.data.shape
    p = (m - 1) // 2
    padded = np.zeros((b, 2, d + m - 1), dtype=np.float64)
    padded[:, :, p : p + d] = pairs.data
    windows = np.stack([padded[:, :, t : t + d] for t in range(m)], axis=-1)
    out = Tensor(np.einsum("cit,bijt->bcj", kernels.data, windows))

    def fn(g):
        if _needs_grad(kernels):
            _accumulate(kernels, np.einsum("bcj,bijt->cit", g, windows))
        if _needs_grad(pairs):
            gp = np.zeros_like(padded)
            for t in range(m):
                gp[:, :, t : t + d] += np.einsum("bcj,ci->bij", g, kernels.data[:, :, t])
            _accumulate(pairs, gp[:, :, p : p + d])

    return _register(out, fn)


# ---------------------------------------------------------------------------
# losses

def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-stabilized softmax of a plain array (no tape)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits, targets) -> Tensor:
    """Mean negative log softmax probability of the targets (max-stabilized)."""
    logits = _as_tensor(logits)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be B x V, got {logits.shape}")
    tgt = np.asarray(targets, dtype=np.int64)
    b, v = logits.data.shape
    if tgt.shape != (b,):
        raise ShapeError(f"cross_entropy: expected {b} targets, got shape {tgt.shape}")
    if tgt.size and (tgt.min() < 0 or tgt.max() >= v):
        raise IndexError(f"cross_entropy: target id out of range [0, {v})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    nll = lse - z[np.arange(b), tgt]
    out = Tensor(nll.mean())

    def fn(g):
        if _needs_grad(logits):
            p = softmax(logits.data)
            p[np.arange(b), tgt] -= 1.0
            _accumulate(logits, (float(g) / b) * p)

    return _register(out, fn)


# ---------------------------------------------------------------------------
# initialization / checking

def xavier_init(shape: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform array; fan-in is the trailing dims, fan-out the first."""
    shape = tuple(int(s) for s in shape)
    fan_out = shape[0]
    fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def grad_check(f: Callable[[], Tensor], params, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must rebuild the scalar loss from the current parameter values on
    every call (it is invoked repeatedly with perturbed parameters). The
    relative error uses a small denominator floor so finite-difference noise
    on near-zero gradients does not register as disagreement.
    """
    with Tape():
        grads = backward(f(), params)

    worst = 0.0
    for name in params.trainable_names():
        theta = params[name].data
        analytic = grads[name].ravel()
        flat = theta.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f().data)
            flat[i] = orig - eps
            fm = float(f().data)
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * eps)
            a = analytic[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            if rel > worst:
                worst = rel
    return worst
