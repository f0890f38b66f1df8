"""Model assembly: one parameter store shared by the encoder and decoder,
plus the bookkeeping for growing the decoder one history length at a time.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from . import decoder, encoder
from .data import TkgDataset
from .decoder import DecoderConfig
from .encoder import EncoderConfig
from .errors import ConfigError, ContractError
from .params import ParamStore, load_checkpoint, save_checkpoint
from .tensor import Tensor


@dataclass
class ModelConfig:
    num_entities: int
    num_relations: int              # pre-augmentation
    dim: int = 200
    max_len: int = 10               # K: hard upper bound on history length
    num_kernels: int = 50
    kernel_width: int = 3
    layers: int = 2
    dropout: float = 0.2
    rgcn_activation: str = "relu"
    fcn_activation: str = "relu"
    normalize_embed: bool = True
    single_channel: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("num_entities", "num_relations", "dim", "max_len",
                     "num_kernels", "kernel_width", "layers"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.kernel_width % 2 == 0:
            raise ConfigError("kernel_width must be odd")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            num_entities=self.num_entities,
            num_relations_total=2 * self.num_relations,
            dim=self.dim,
            layers=self.layers,
            dropout=self.dropout,
            activation=self.rgcn_activation,
            normalize_embed=self.normalize_embed,
        )

    def decoder_config(self) -> DecoderConfig:
        return DecoderConfig(
            dim=self.dim,
            num_kernels=self.num_kernels,
            kernel_width=self.kernel_width,
            dropout=self.dropout,
            activation=self.fcn_activation,
            single_channel=self.single_channel,
        )


class CenModel:
    """Encoder + length-aware decoder over one ParamStore.

    ``num_channels`` is the number of history lengths currently decoded
    (grows during the curriculum, up to ``cfg.max_len``).
    """

    def __init__(self, cfg: ModelConfig, params: ParamStore, num_channels: int,
                 rng: np.random.Generator):
        self.cfg = cfg
        self.params = params
        self.num_channels = num_channels
        self.rng = rng              # dropout stream; reseeded by build()

    # -- construction -------------------------------------------------------

    @classmethod
    def build(cls, cfg: ModelConfig, num_channels: int | None = None) -> "CenModel":
        k = num_channels if num_channels is not None else cfg.max_len
        if not 1 <= k <= cfg.max_len:
            raise ConfigError(f"channel count {k} outside 1..{cfg.max_len}")
        init_ss, drop_ss = np.random.SeedSequence(cfg.seed).spawn(2)
        init_rng = np.random.default_rng(init_ss)
        store = ParamStore()
        encoder.init_encoder_params(store, cfg.encoder_config(), init_rng)
        decoder.init_decoder_params(store, cfg.decoder_config(), k, init_rng)
        return cls(cfg, store, k, np.random.default_rng(drop_ss))

    def add_channel(self, warm_start: bool = True) -> None:
        if self.num_channels + 1 > self.cfg.max_len:
            raise ConfigError(
                f"cannot extend past max history length {self.cfg.max_len}"
            )
        decoder.add_channel(
            self.params, self.cfg.decoder_config(), self.num_channels + 1,
            self.rng, warm_start=warm_start,
        )
        self.num_channels += 1

    def state(self) -> tuple[dict[str, np.ndarray], int]:
        """Deep-copied (values, num_channels) restore point."""
        return self.params.copy_values(), self.num_channels

    def load_state(self, state: tuple[dict[str, np.ndarray], int]) -> None:
        values, k = state
        extra = [n for n in self.params.names() if n not in values]
        for n in extra:
            self.params.remove(n)
        missing = [n for n in values if n not in self.params]
        for n in missing:
            self.params.add(n, values[n])
        self.params.load_values(values)
        self.num_channels = k

    # -- forward paths ------------------------------------------------------

    def encode(self, history: list[np.ndarray], train: bool = False) -> list[Tensor]:
        return encoder.encode_all(
            self.num_channels, history, self.params, self.cfg.encoder_config(),
            train=train, rng=self.rng if train else None,
        )

    def score(self, queries: np.ndarray, reps: list[Tensor], train: bool = False) -> Tensor:
        return decoder.score_batch(
            queries, reps, self.params, self.cfg.decoder_config(),
            train=train, rng=self.rng if train else None,
        )

    def loss(self, queries: np.ndarray, reps, train: bool = True) -> Tensor:
        return decoder.batch_loss(
            queries, reps, self.params, self.cfg.decoder_config(),
            train=train, rng=self.rng if train else None,
        )

    def score_queries_at(self, queries: np.ndarray, t: int, data: TkgDataset) -> np.ndarray:
        """Frozen-parameter logits for queries at time t (evaluation path)."""
        if t < 1:
            raise ContractError("cannot score at t=0: no history exists")
        history = data.history_before(t, self.num_channels)
        reps = self.encode(history, train=False)
        return self.score(queries, reps, train=False).data

    # -- persistence --------------------------------------------------------

    def save(self, path) -> None:
        save_checkpoint(self.params, path)

    @classmethod
    def load(cls, path, cfg: ModelConfig, num_channels: int | None = None) -> "CenModel":
        """Rebuild a model from a checkpoint; the channel count is inferred
        from the decoder parameter names unless given (single-channel
        checkpoints cannot record it)."""
        store = load_checkpoint(path)
        k = num_channels if num_channels is not None else infer_channels(store, cfg.single_channel)
        model = cls(cfg, store, k,
                    np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[1]))
        expected_dim = store["entity_embed"].data.shape[1]
        if expected_dim != cfg.dim:
            raise ConfigError(
                f"checkpoint dim {expected_dim} does not match config dim {cfg.dim}"
            )
        return model


def infer_channels(store: ParamStore, single_channel: bool) -> int:
    """Recover the channel count from decoder parameter names."""
    if single_channel:
        if "decoder.shared.kernels" not in store:
            raise ConfigError("checkpoint lacks the shared decoder channel")
        return 1
    ids = [
        int(m.group(1))
        for name in store.names()
        if (m := re.fullmatch(r"decoder\.ch(\d+)\.kernels", name))
    ]
    if not ids or sorted(ids) != list(range(1, max(ids) + 1)):
        raise ConfigError("checkpoint decoder channels are missing or non-contiguous")
    return max(ids)
