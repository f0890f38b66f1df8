"""Online fine-tuning over the post-training timestamp range.

At each step the current model first predicts the incoming snapshot's facts
(metrics are recorded before any parameter sees them), then fine-tunes on
that snapshot for a bounded number of epochs. An L2 penalty anchored at the
previous timestamp's parameters damps drastic parameter drift between
temporally adjacent models; the fine-tuned checkpoint kept per timestamp is
the epoch that maximizes validation MRR on a snapshot two steps back.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import TkgDataset
from .errors import ConfigError, ContractError
from .evaluator import MetricsReport, aggregate, evaluate, rank_snapshot
from .model import CenModel
from .params import AdamState, ParamStore, adam_step, clip_gradients
from .tensor import Tape, Tensor, backward

log = logging.getLogger(__name__)


@dataclass
class OnlineConfig:
    epochs: int = 30                # max fine-tune epochs per timestamp
    tr_weight: float = 1e-2        # lambda of the anchor penalty
    lr: float = 0.001
    valid_offset: int = 2           # validate on the snapshot this far back
    grad_clip: float = 1.0
    no_tr: bool = False             # drop the anchor penalty entirely

    def __post_init__(self):
        if self.tr_weight < 0:
            raise ConfigError("tr_weight must be >= 0")
        if self.valid_offset < 1:
            raise ConfigError("valid_offset must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")


@dataclass
class OnlineStepReport:
    t: int
    epochs_used: int
    valid_mrr: float


def tr_penalty(live: ParamStore, anchor: dict[str, np.ndarray], weight: float) -> Tensor:
    """weight * sum of squared differences between the live trainable
    parameters and their frozen previous-timestamp copies."""
    total: Tensor | None = None
    for name in live.trainable_names():
        ref = anchor[name]
        if live[name].data.shape != ref.shape:
            raise ContractError(
                f"tr_penalty: shape mismatch for {name!r}: "
                f"{live[name].data.shape} vs {ref.shape}"
            )
        diff = T.sub(live[name], Tensor(ref))
        sq = T.sum_all(T.mul(diff, diff))
        total = sq if total is None else T.add(total, sq)
    if total is None:
        return Tensor(0.0)
    return T.scale(total, weight)


def online_step(
    model: CenModel,
    t: int,
    data: TkgDataset,
    cfg: OnlineConfig,
) -> OnlineStepReport:
    """Fine-tune the model on the snapshot at t, anchored at its own
    pre-step parameters, keeping the epoch that validates best."""
    if t <= data.t1:
        raise ContractError(f"online_step expects t > t1={data.t1}, got {t}")
    anchor = {n: model.params[n].data.copy() for n in model.params.trainable_names()}
    use_tr = not cfg.no_tr and cfg.tr_weight != 0.0

    v_t = t - cfg.valid_offset
    if v_t < 1:
        fallback = min(data.t1, t - 1)
        log.info("online t=%d: validation snapshot would precede history; "
                 "falling back to t=%d", t, fallback)
        v_t = fallback
    validate = v_t >= 1 and data.snapshots[v_t].num_facts > 0

    def valid_mrr() -> float:
        facts = data.snapshots[v_t].facts
        scores = model.score_queries_at(facts, v_t, data)
        return aggregate(
            r.filtered_rank for r in rank_snapshot(scores, facts, v_t)
        ).mrr

    best_mrr = valid_mrr() if validate else float("-inf")
    best_state = model.state()
    best_epoch = 0

    optimizer = AdamState(lr=cfg.lr)
    queries = data.snapshots[t].facts
    k = model.num_channels
    for epoch in range(1, cfg.epochs + 1):
        history = data.history_before(t, k)
        with Tape():
            reps = model.encode(history, train=True)
            loss = model.loss(queries, reps, train=True)
            if use_tr:
                loss = T.add(loss, tr_penalty(model.params, anchor, cfg.tr_weight))
            grads = backward(loss, model.params)
        clip_gradients(grads, cfg.grad_clip)
        adam_step(model.params, grads, optimizer)
        if validate:
            mrr = valid_mrr()
            if mrr > best_mrr:
                best_mrr = mrr
                best_state = model.state()
                best_epoch = epoch
        else:
            best_state = model.state()
            best_epoch = epoch

    model.load_state(best_state)
    return OnlineStepReport(t=t, epochs_used=best_epoch,
                            valid_mrr=best_mrr if validate else float("nan"))


def run_online(
    model: CenModel,
    data: TkgDataset,
    cfg: OnlineConfig,
    rows: list[dict] | None = None,
) -> MetricsReport:
    """Walk timestamps t1+1..t3: at test-range timestamps predict the
    snapshot first, then fine-tune on it; aggregate metrics over the test
    range. With no online range at all this reduces to offline evaluation.
    """
    if not data.augmented:
        raise ContractError("run_online needs the inverse-augmented dataset")
    if data.t1 >= data.t3:
        return evaluate(model, data, "test")

    all_results = []
    for t in range(data.t1 + 1, data.t3 + 1):
        facts = data.snapshots[t].facts
        if t > data.t2 and facts.size:
            scores = model.score_queries_at(facts, t, data)
            results = rank_snapshot(scores, facts, t)
            all_results.extend(results)
            step_metrics = aggregate(r.filtered_rank for r in results)
        else:
            step_metrics = None
        if t < data.t3 and facts.size:
            report = online_step(model, t, data, cfg)
            epochs_used = report.epochs_used
        else:
            epochs_used = 0
        if rows is not None and step_metrics is not None:
            rows.append({
                "t": t,
                "mrr": step_metrics.mrr, "h1": step_metrics.hits1,
                "h3": step_metrics.hits3, "h10": step_metrics.hits10,
                "epochs_used": epochs_used,
            })

    report = aggregate(r.filtered_rank for r in all_results)
    report.directions = {
        "object": aggregate(r.filtered_rank for r in all_results
                            if r.relation < data.num_relations),
        "subject": aggregate(r.filtered_rank for r in all_results
                             if r.relation >= data.num_relations),
    }
    return report
