"""Randomized end-to-end gradient checking of the full model loss.

Builds a toy model and history, forms the training loss (cross-entropy over
one snapshot's queries plus the online anchor penalty), and compares every
trainable parameter's analytic gradient against central finite differences.
Smooth activations are used so the finite-difference comparison is not
polluted by kink crossings; the piecewise-linear ops have their own targeted
unit tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .model import CenModel, ModelConfig
from .online import tr_penalty


@dataclass
class ToyCheckResult:
    seed: int
    max_rel_error: float
    num_params: int


def random_toy_instance(seed: int):
    """A tiny model plus a random history window and query batch."""
    rng = np.random.default_rng(seed)
    num_entities = int(rng.integers(5, 9))
    num_relations = int(rng.integers(2, 4))
    dim = int(rng.integers(4, 7))
    max_len = int(rng.integers(1, 4))
    cfg = ModelConfig(
        num_entities=num_entities,
        num_relations=num_relations,
        dim=dim,
        max_len=max_len,
        num_kernels=int(rng.integers(2, 4)),
        kernel_width=3,
        layers=int(rng.integers(1, 3)),
        dropout=0.0,
        rgcn_activation="tanh",
        fcn_activation="sigmoid",
        seed=int(rng.integers(1 << 31)),
    )
    model = CenModel.build(cfg, num_channels=max_len)

    def random_facts(n):
        rels = 2 * num_relations
        return np.stack([
            rng.integers(num_entities, size=n),
            rng.integers(rels, size=n),
            rng.integers(num_entities, size=n),
        ], axis=1).astype(np.int64)

    history = [random_facts(int(rng.integers(2, 7))) for _ in range(int(rng.integers(1, 4)))]
    queries = random_facts(int(rng.integers(2, 6)))
    anchor = {
        n: model.params[n].data + rng.normal(scale=0.05, size=model.params[n].data.shape)
        for n in model.params.trainable_names()
    }
    return model, history, queries, anchor


def check_instance(seed: int, tr_weight: float = 0.1, eps: float = 1e-5) -> ToyCheckResult:
    model, history, queries, anchor = random_toy_instance(seed)

    def loss_fn():
        reps = model.encode(history, train=False)
        loss = model.loss(queries, reps, train=False)
        return T.add(loss, tr_penalty(model.params, anchor, tr_weight))

    err = T.grad_check(loss_fn, model.params, eps=eps)
    n = sum(model.params[name].data.size for name in model.params.trainable_names())
    return ToyCheckResult(seed=seed, max_rel_error=err, num_params=n)


def run_checks(base_seed: int = 0, trials: int = 10, tr_weight: float = 0.1) -> float:
    """Max relative error across ``trials`` random toy instances."""
    worst = 0.0
    for i in range(trials):
        worst = max(worst, check_instance(base_seed + i, tr_weight).max_rel_error)
    return worst
