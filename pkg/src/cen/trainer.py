"""Offline training with the easy-to-difficult history-length curriculum.

Training starts at the minimum history length and grows one snapshot at a
time; each stage trains until its validation MRR stops improving, and the
curriculum stops at the first stage whose best MRR is strictly worse than the
previous stage's (ties continue) or when the hard maximum is reached. The
result is the model trained at the adaptively chosen maximum length.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import TkgDataset
from .errors import ConfigError, DataError
from .evaluator import evaluate
from .model import CenModel, ModelConfig
from .params import AdamState, adam_step, clip_gradients
from .tensor import Tape, backward

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    dim: int = 200
    max_len: int = 10               # K
    min_len: int = 3                # starting curriculum length
    num_kernels: int = 50
    kernel_width: int = 3
    layers: int = 2
    dropout: float = 0.2
    lr: float = 0.001
    epochs_per_stage: int = 30
    patience: int = 3
    grad_clip: float = 1.0
    seed: int = 0
    rgcn_activation: str = "relu"
    fcn_activation: str = "relu"
    normalize_embed: bool = True
    no_curriculum: bool = False     # train directly at max_len
    single_channel: bool = False    # one shared kernel set for every length
    warm_start_channels: bool = True

    def __post_init__(self):
        if not 1 <= self.min_len <= self.max_len:
            raise ConfigError(
                f"need 1 <= min_len <= max_len, got {self.min_len}, {self.max_len}"
            )
        if self.epochs_per_stage < 1 or self.patience < 1:
            raise ConfigError("epochs_per_stage and patience must be >= 1")
        if self.lr < 0:
            raise ConfigError("learning rate must be >= 0")

    def model_config(self, data: TkgDataset) -> ModelConfig:
        return ModelConfig(
            num_entities=data.num_entities,
            num_relations=data.num_relations,
            dim=self.dim,
            max_len=self.max_len,
            num_kernels=self.num_kernels,
            kernel_width=self.kernel_width,
            layers=self.layers,
            dropout=self.dropout,
            rgcn_activation=self.rgcn_activation,
            fcn_activation=self.fcn_activation,
            normalize_embed=self.normalize_embed,
            single_channel=self.single_channel,
            seed=self.seed,
        )


@dataclass
class CurriculumState:
    current_len: int
    best_mrr: float = float("-inf")
    best_state: tuple | None = None
    stage_history: dict[int, float] = field(default_factory=dict)
    chosen_len: int | None = None


def train_stage(
    k: int,
    model: CenModel,
    data: TkgDataset,
    cfg: TrainConfig,
    optimizer: AdamState | None = None,
    log_rows: list[dict] | None = None,
    stage_id: int | None = None,
) -> float:
    """Train at history length k until the validation MRR stalls.

    One optimization step per training snapshot (all of its queries, both
    directions, form the batch). Returns the best within-stage validation
    MRR and leaves the model at the parameters that achieved it.
    """
    if k > cfg.max_len:
        raise ConfigError(f"stage length {k} exceeds max length {cfg.max_len}")
    if model.num_channels != k:
        raise ConfigError(
            f"model decodes {model.num_channels} lengths but stage wants {k}"
        )
    train_ts = [t for t in data.split_times("train")
                if t >= 1 and data.snapshots[t].num_facts]
    if not train_ts:
        raise DataError("empty split: no usable training snapshots")
    optimizer = optimizer or AdamState(lr=cfg.lr)
    optimizer.lr = cfg.lr

    best_mrr = float("-inf")
    best_state = model.state()
    stale = 0
    for epoch in range(1, cfg.epochs_per_stage + 1):
        losses = []
        for t in train_ts:
            history = data.history_before(t, k)
            queries = data.snapshots[t].facts
            with Tape():
                reps = model.encode(history, train=True)
                loss = model.loss(queries, reps, train=True)
                grads = backward(loss, model.params)
            clip_gradients(grads, cfg.grad_clip)
            adam_step(model.params, grads, optimizer)
            losses.append(loss.item())
        valid_mrr = evaluate(model, data, "valid").mrr
        mean_loss = float(np.mean(losses))
        if log_rows is not None:
            log_rows.append({
                "stage": stage_id if stage_id is not None else k,
                "k": k, "epoch": epoch,
                "train_loss": mean_loss, "valid_mrr": valid_mrr,
            })
        log.info("stage k=%d epoch %d: loss %.4f valid mrr %.4f",
                 k, epoch, mean_loss, valid_mrr)
        if valid_mrr > best_mrr:
            best_mrr = valid_mrr
            best_state = model.state()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.load_state(best_state)
    return best_mrr


def extend_length(model: CenModel, cfg: TrainConfig) -> CenModel:
    """Grow the decoder by one history-length channel (warm-started from the
    previous channel's kernels unless configured otherwise)."""
    if model.num_channels + 1 > cfg.max_len:
        raise ConfigError(f"cannot extend past max length {cfg.max_len}")
    model.add_channel(warm_start=cfg.warm_start_channels)
    return model


def run_curriculum(
    data: TkgDataset,
    cfg: TrainConfig,
    stage_fn=None,
    log_rows: list[dict] | None = None,
) -> tuple[CenModel, CurriculumState]:
    """Drive the curriculum: grow k from min_len, stop at the first strict
    MRR decrease (restoring the previous stage) or at max_len.

    ``stage_fn(k, model) -> mrr`` replaces the real stage trainer in tests.
    With ``no_curriculum`` the model trains once, directly at max_len.
    """
    if not data.augmented:
        raise ConfigError("run_curriculum needs the inverse-augmented dataset")
    start_len = cfg.max_len if cfg.no_curriculum else cfg.min_len
    model = CenModel.build(cfg.model_config(data), num_channels=start_len)
    optimizer = AdamState(lr=cfg.lr)
    stage_id = 0

    def default_stage(k: int, m: CenModel) -> float:
        return train_stage(k, m, data, cfg, optimizer, log_rows, stage_id)

    stage = stage_fn or default_stage
    state = CurriculumState(current_len=start_len)

    k = start_len
    prev_mrr = float("-inf")
    while True:
        stage_id += 1
        state.current_len = k
        mrr = stage(k, model)
        state.stage_history[k] = mrr
        if mrr < prev_mrr:
            state.chosen_len = k - 1
            model.load_state(state.best_state)
            break
        state.best_mrr = mrr
        state.best_state = model.state()
        prev_mrr = mrr
        if k == cfg.max_len or cfg.no_curriculum:
            state.chosen_len = k
            break
        extend_length(model, cfg)
        k += 1

    log.info("curriculum done: chosen length %d (stages: %s)",
             state.chosen_len, state.stage_history)
    return model, state
