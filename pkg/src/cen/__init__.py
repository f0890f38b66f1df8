"""Temporal knowledge-graph reasoning with length-aware history encoding,
curriculum training, and online fine-tuning."""

from .data import Quadruple, Snapshot, TkgDataset, add_inverse_relations, load_quadruples
from .errors import CenError, ConfigError, ContractError, DataError, ShapeError
from .evaluator import MetricsReport, aggregate, evaluate, rank, time_aware_filter
from .model import CenModel, ModelConfig
from .online import OnlineConfig, run_online, tr_penalty
from .params import AdamState, ParamStore, adam_step, load_checkpoint, save_checkpoint
from .synth import PatternTemplate, SynthConfig, synth_generate
from .tensor import Tape, Tensor, backward, grad_check
from .trainer import CurriculumState, TrainConfig, run_curriculum, train_stage

__version__ = "0.1.0"

__all__ = [
    "AdamState", "CenError", "CenModel", "ConfigError", "ContractError",
    "CurriculumState", "DataError", "MetricsReport", "ModelConfig",
    "OnlineConfig", "ParamStore", "PatternTemplate", "Quadruple", "ShapeError",
    "Snapshot", "SynthConfig", "Tape", "Tensor", "TkgDataset", "TrainConfig",
    "add_inverse_relations", "adam_step", "aggregate", "backward", "evaluate",
    "grad_check", "load_checkpoint", "load_quadruples", "rank", "run_curriculum",
    "run_online", "save_checkpoint", "synth_generate", "time_aware_filter",
    "tr_penalty", "train_stage",
]
