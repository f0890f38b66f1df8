"""Length-aware convolutional decoder.

Each history length k has its own channel of C kernels (size 2 x M) applied
to the stacked [subject; relation] pair built from that length's entity
representations. A single fully connected layer is shared across channels,
and a candidate's final score is the sum of its per-channel logits, so the
channels contribute additively and can be ablated independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError
from .params import ParamStore
from .tensor import Tensor


@dataclass
class DecoderConfig:
    dim: int
    num_kernels: int = 50        # C
    kernel_width: int = 3        # M, odd
    dropout: float = 0.2
    activation: str = "relu"     # applied between conv features and the output head
    single_channel: bool = False # share one kernel set across all lengths

    def __post_init__(self):
        if self.kernel_width % 2 == 0:
            raise ConfigError(f"kernel width must be odd, got {self.kernel_width}")


def kernel_name(k: int, cfg: DecoderConfig) -> str:
    """Parameter name of channel k's kernels (1-based length index)."""
    return "decoder.shared.kernels" if cfg.single_channel else f"decoder.ch{k}.kernels"


def init_decoder_params(
    store: ParamStore,
    cfg: DecoderConfig,
    channels: int,
    rng: np.random.Generator,
) -> None:
    shape = (cfg.num_kernels, 2, cfg.kernel_width)
    if cfg.single_channel:
        store.add("decoder.shared.kernels", T.xavier_init(shape, rng))
    else:
        for k in range(1, channels + 1):
            store.add(kernel_name(k, cfg), T.xavier_init(shape, rng))
    store.add("decoder.w_out", T.xavier_init((cfg.num_kernels * cfg.dim, cfg.dim), rng))
    store.add("decoder.b_out", np.zeros(cfg.dim))


def add_channel(store: ParamStore, cfg: DecoderConfig, k: int,
                rng: np.random.Generator, warm_start: bool = True) -> None:
    """Create channel k's kernels, copying channel k-1 unless ``warm_start``
    is off (then a fresh Xavier draw)."""
    if cfg.single_channel:
        return
    name = kernel_name(k, cfg)
    if name in store:
        raise ContractError(f"channel {k} already exists")
    if warm_start and kernel_name(k - 1, cfg) in store:
        store.add(name, store[kernel_name(k - 1, cfg)].data.copy())
    else:
        store.add(name, T.xavier_init((cfg.num_kernels, 2, cfg.kernel_width), rng))


def channel_features(s_vec: Tensor, r_vec: Tensor, kernels: Tensor) -> Tensor:
    """Conv feature vector of one (subject, relation) pair: the C width-d
    feature maps flattened row-major to length C*d."""
    fmap = T.conv_stack(T.stack_pair(s_vec, r_vec), kernels)
    c, d = fmap.shape
    return T.reshape(fmap, (c * d,))


def _channel_logits(
    queries: np.ndarray,
    reps_k: Tensor,
    rel_embed: Tensor,
    kernels: Tensor,
    params: ParamStore,
    cfg: DecoderConfig,
    train: bool,
    rng: np.random.Generator | None,
) -> Tensor:
    s_vecs = T.lookup_rows(reps_k, queries[:, 0])
    r_vecs = T.lookup_rows(rel_embed, queries[:, 1])
    pairs = T.stack_pair(s_vecs, r_vecs)                    # B x 2 x d
    fmaps = T.conv_stack_batch(pairs, kernels)              # B x C x d
    b = queries.shape[0]
    flat = T.reshape(fmaps, (b, cfg.num_kernels * cfg.dim))
    flat = T.dropout(flat, cfg.dropout, train, rng)
    act = T.activation(cfg.activation)
    head = act(T.add(T.matmul(flat, params["decoder.w_out"]), params["decoder.b_out"]))
    return T.matmul(head, T.transpose(reps_k))              # B x |V|


def score_batch(
    queries: np.ndarray,
    reps: list[Tensor],
    params: ParamStore,
    cfg: DecoderConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Logits over all entities for a batch of (subject, relation) queries,
    summed over the per-length channels."""
    queries = np.asarray(queries, dtype=np.int64).reshape(-1, queries.shape[-1])[:, :2]
    logits: Tensor | None = None
    for k, reps_k in enumerate(reps, start=1):
        part = _channel_logits(
            queries, reps_k, params["relation_embed"], params[kernel_name(k, cfg)],
            params, cfg, train, rng,
        )
        logits = part if logits is None else T.add(logits, part)
    if logits is None:
        raise ContractError("score_batch: no representation channels given")
    return logits


def score_all(
    query: tuple[int, int],
    reps: list[Tensor],
    params: ParamStore,
    cfg: DecoderConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Logits over all entities for a single (subject, relation) query."""
    q = np.asarray([[query[0], query[1]]], dtype=np.int64)
    flat = score_batch(q, reps, params, cfg, train=train, rng=rng)
    return T.reshape(flat, (flat.shape[1],))


def batch_loss(
    queries: np.ndarray,
    reps_by_t,
    params: ParamStore,
    cfg: DecoderConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Mean cross-entropy over (s, r, o_true[, t]) query rows.

    ``reps_by_t`` is either one representation list (all queries share a
    query time) or a dict mapping each distinct t in column 3 to its list.
    """
    queries = np.asarray(queries, dtype=np.int64)
    if queries.ndim != 2 or queries.shape[1] not in (3, 4):
        raise ContractError("batch_loss: queries must be rows of (s, r, o[, t])")
    if isinstance(reps_by_t, dict):
        if queries.shape[1] != 4:
            raise ContractError("batch_loss: per-time reps need a time column")
        chunks = []
        targets = []
        for t in sorted(set(queries[:, 3].tolist())):
            rows = queries[queries[:, 3] == t]
            chunks.append(score_batch(rows, reps_by_t[t], params, cfg, train, rng))
            targets.append(rows[:, 2])
        logits = T.concat_rows(chunks)
        target_ids = np.concatenate(targets)
    else:
        logits = score_batch(queries, reps_by_t, params, cfg, train, rng)
        target_ids = queries[:, 2]
    return T.cross_entropy(logits, target_ids)
