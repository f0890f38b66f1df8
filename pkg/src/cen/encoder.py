"""KG-sequence encoder: a shared relational GCN applied snapshot by snapshot,
with a sigmoid gate carrying entity state across timestamps.

One parameter set serves every history length: encoding length k restarts
from the trainable initial entity matrix and unrolls over the latest k
snapshots, so the outputs for k = 1..K are K views of the same query time
computed from increasingly long history windows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, ShapeError
from .params import ParamStore
from .tensor import Tensor


@dataclass
class EncoderConfig:
    num_entities: int
    num_relations_total: int     # post-augmentation (doubled) vocabulary
    dim: int
    layers: int = 2
    dropout: float = 0.2
    activation: str = "relu"
    normalize_embed: bool = True  # unit-normalize entity rows entering an unroll


def init_encoder_params(store: ParamStore, cfg: EncoderConfig, rng: np.random.Generator) -> None:
    store.add("entity_embed", T.xavier_init((cfg.num_entities, cfg.dim), rng))
    store.add("relation_embed", T.xavier_init((cfg.num_relations_total, cfg.dim), rng))
    for i in range(cfg.layers):
        store.add(f"rgcn.{i}.w_msg", T.xavier_init((cfg.dim, cfg.dim), rng))
        store.add(f"rgcn.{i}.w_self", T.xavier_init((cfg.dim, cfg.dim), rng))
    store.add("gate.weight", T.xavier_init((cfg.dim, cfg.dim), rng))
    store.add("gate.bias", np.zeros(cfg.dim))


def rgcn_layer(
    h: Tensor,
    rel_embed: Tensor,
    facts: np.ndarray,
    w_msg: Tensor,
    w_self: Tensor,
    act=T.relu,
) -> Tensor:
    """One propagation step over a snapshot's facts.

    Each entity receives the mean over its incoming facts (s, r, o) of
    W_msg (h_s + r) plus a self-loop W_self h_o; entities with no incoming
    facts keep only the self-loop term.
    """
    num_entities = h.data.shape[0]
    self_part = T.matmul(h, T.transpose(w_self))
    facts = np.asarray(facts, dtype=np.int64).reshape(-1, 3)
    if facts.size == 0:
        return act(self_part)
    src_h = T.lookup_rows(h, facts[:, 0])
    rel = T.lookup_rows(rel_embed, facts[:, 1])
    msgs = T.matmul(T.add(src_h, rel), T.transpose(w_msg))
    agg = T.segment_mean(msgs, facts[:, 2], num_entities)
    return act(T.add(agg, self_part))


def rgcn_stack(
    h: Tensor,
    params: ParamStore,
    facts: np.ndarray,
    cfg: EncoderConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """The full per-snapshot update: ``layers`` propagation steps with
    per-layer weights, dropout after each layer in train mode."""
    act = T.activation(cfg.activation)
    rel = params["relation_embed"]
    for i in range(cfg.layers):
        h = rgcn_layer(h, rel, facts, params[f"rgcn.{i}.w_msg"], params[f"rgcn.{i}.w_self"], act)
        h = T.dropout(h, cfg.dropout, train, rng)
    return h


def skip_connection(h_new: Tensor, h_prev: Tensor, w_gate: Tensor, b_gate: Tensor) -> Tensor:
    """Per-entity, per-dimension sigmoid gate between the fresh snapshot
    update and the carried state: u*h_new + (1-u)*h_prev."""
    if h_new.shape != h_prev.shape:
        raise ShapeError(f"skip_connection: shapes differ {h_new.shape} vs {h_prev.shape}")
    u = T.sigmoid(T.add(T.matmul(h_prev, T.transpose(w_gate)), b_gate))
    return T.add(T.mul(u, h_new), T.mul(T.sub(1.0, u), h_prev))


def encode_sequence(
    k: int,
    snapshots: list[np.ndarray],
    params: ParamStore,
    cfg: EncoderConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Unroll the encoder over exactly k snapshots (oldest first), starting
    from the initial entity matrix."""
    if k < 1:
        raise ContractError(f"encode_sequence: k must be >= 1, got {k}")
    if len(snapshots) != k:
        raise ContractError(
            f"encode_sequence: expected {k} snapshots, got {len(snapshots)}"
        )
    h = params["entity_embed"]
    if cfg.normalize_embed:
        h = T.normalize_rows(h)
    for facts in snapshots:
        h_hat = rgcn_stack(h, params, facts, cfg, train=train, rng=rng)
        h = skip_connection(h_hat, h, params["gate.weight"], params["gate.bias"])
    return h


def encode_all(
    max_len: int,
    history: list[np.ndarray],
    params: ParamStore,
    cfg: EncoderConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> list[Tensor]:
    """Entity representations for every history length 1..max_len.

    Histories shorter than a requested length truncate to what is available,
    so trailing entries alias the longest computable encoding.
    """
    if not history:
        raise ContractError("encode_all: history must be non-empty")
    reps: list[Tensor] = []
    for k in range(1, max_len + 1):
        avail = min(k, len(history))
        if reps and avail < k:
            reps.append(reps[-1])
        else:
            reps.append(encode_sequence(avail, history[-avail:], params, cfg, train=train, rng=rng))
    return reps
