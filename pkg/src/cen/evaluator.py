"""Ranking evaluation: MRR and Hits@{1,3,10} under raw and time-aware
filtered settings.

The time-aware filter removes, for a query (s, r, ?, t) with target o, every
other entity o' that is also a true answer *at the same timestamp t*; true
answers at other timestamps stay in the candidate list. Ranks use the
optimistic tie rule by default: only strictly greater scores push the target
down (ties never worsen the rank). A mean/pessimistic rule is available
because published numbers are known to be sensitive to this choice.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import TkgDataset
from .errors import ConfigError, ContractError

TIE_RULES = ("optimistic", "mean", "pessimistic")


@dataclass(frozen=True)
class RankingResult:
    subject: int
    relation: int
    target: int
    time: int
    filtered_rank: int
    raw_rank: int


@dataclass
class MetricsReport:
    mrr: float = 0.0
    hits1: float = 0.0
    hits3: float = 0.0
    hits10: float = 0.0
    count: int = 0
    directions: dict[str, "MetricsReport"] = field(default_factory=dict)

    def row(self) -> dict[str, float]:
        return {
            "mrr": self.mrr, "h1": self.hits1, "h3": self.hits3,
            "h10": self.hits10, "count": self.count,
        }

    def table(self) -> str:
        header = f"{'':10s} {'MRR':>8s} {'H@1':>8s} {'H@3':>8s} {'H@10':>8s} {'queries':>8s}"
        lines = [header, _table_line("all", self)]
        for name, sub in self.directions.items():
            lines.append(_table_line(name, sub))
        return "\n".join(lines)


def _table_line(name: str, r: MetricsReport) -> str:
    return (
        f"{name:10s} {r.mrr:8.4f} {r.hits1:8.4f} {r.hits3:8.4f} "
        f"{r.hits10:8.4f} {r.count:8d}"
    )


def time_aware_filter(
    query: tuple[int, int],
    facts_at_t: np.ndarray,
    target: int,
) -> set[int]:
    """Entity ids to drop from the candidate list: the other true objects of
    (s, r, ?, t) among the facts at the query's own timestamp."""
    s, r = query
    facts = np.asarray(facts_at_t, dtype=np.int64).reshape(-1, 3)
    hit = (facts[:, 0] == s) & (facts[:, 1] == r)
    return {int(o) for o in facts[hit, 2] if o != target}


def rank(scores: np.ndarray, target: int, excluded: set[int] | None = None,
         tie_rule: str = "optimistic") -> int:
    """1-based rank of the target among the non-excluded candidates."""
    if tie_rule not in TIE_RULES:
        raise ConfigError(f"tie rule must be one of {TIE_RULES}")
    excluded = excluded or set()
    if target in excluded:
        raise ContractError("rank: target is in the excluded set")
    scores = np.asarray(scores, dtype=np.float64)
    keep = np.ones(scores.shape[0], dtype=bool)
    if excluded:
        keep[list(excluded)] = False
    keep[target] = False
    ts = scores[target]
    greater = int(np.count_nonzero(scores[keep] > ts))
    if tie_rule == "optimistic":
        return 1 + greater
    ties = int(np.count_nonzero(scores[keep] == ts))
    if tie_rule == "pessimistic":
        return 1 + greater + ties
    return 1 + greater + ties // 2


def aggregate(ranks) -> MetricsReport:
    """MRR and Hits@{1,3,10} of a rank list."""
    arr = np.asarray(list(ranks), dtype=np.float64)
    if arr.size == 0:
        return MetricsReport()
    return MetricsReport(
        mrr=float(np.mean(1.0 / arr)),
        hits1=float(np.mean(arr <= 1)),
        hits3=float(np.mean(arr <= 3)),
        hits10=float(np.mean(arr <= 10)),
        count=int(arr.size),
    )


def _truth_index(facts: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    index: dict[tuple[int, int], list[int]] = {}
    for s, r, o in facts:
        index.setdefault((int(s), int(r)), []).append(int(o))
    return {k: np.asarray(v) for k, v in index.items()}


def rank_snapshot(
    scores: np.ndarray,
    facts: np.ndarray,
    t: int,
    mode: str = "time-filtered",
    tie_rule: str = "optimistic",
) -> list[RankingResult]:
    """Rank every fact row (s, r, o) of one snapshot given its score matrix."""
    if mode not in ("raw", "time-filtered"):
        raise ConfigError(f"mode must be 'raw' or 'time-filtered', got {mode!r}")
    index = _truth_index(facts)
    results = []
    for i, (s, r, o) in enumerate(facts):
        s, r, o = int(s), int(r), int(o)
        raw = rank(scores[i], o, None, tie_rule)
        if mode == "time-filtered":
            others = index[(s, r)]
            excluded = {int(x) for x in others if x != o}
            filt = rank(scores[i], o, excluded, tie_rule) if excluded else raw
        else:
            filt = raw
        results.append(RankingResult(s, r, o, t, filt, raw))
    return results


def _metrics_from_results(results: list[RankingResult], num_relations: int) -> MetricsReport:
    report = aggregate(r.filtered_rank for r in results)
    report.directions = {
        "object": aggregate(r.filtered_rank for r in results if r.relation < num_relations),
        "subject": aggregate(r.filtered_rank for r in results if r.relation >= num_relations),
    }
    return report


def evaluation_threads() -> int:
    try:
        return max(1, int(os.environ.get("CEN_THREADS", "1")))
    except ValueError:
        return 1


def evaluate(
    model,
    data: TkgDataset,
    split: str = "test",
    mode: str = "time-filtered",
    tie_rule: str = "optimistic",
    threads: int | None = None,
) -> MetricsReport:
    """Rank both query directions of every fact in a split.

    The dataset must be augmented: the mirrored facts are the subject-side
    queries, so iterating the augmented snapshots covers 2N queries. ``model``
    is anything with ``score_queries_at(queries, t, data) -> (n, |V|)``.
    Timestamps are scored independently (fanned out across threads when
    CEN_THREADS or ``threads`` is > 1) and merged in time order.
    """
    if not data.augmented:
        raise ContractError("evaluate needs the inverse-augmented dataset")
    per_t = data.split_facts(split)
    n_threads = threads if threads is not None else evaluation_threads()

    def one(item):
        t, facts = item
        scores = model.score_queries_at(facts, t, data)
        return rank_snapshot(scores, facts, t, mode, tie_rule)

    if n_threads > 1 and len(per_t) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            chunks = list(pool.map(one, per_t))
    else:
        chunks = [one(item) for item in per_t]

    results = [r for chunk in chunks for r in chunk]
    return _metrics_from_results(results, data.num_relations)


def evaluate_facts(
    model,
    data: TkgDataset,
    facts_with_time: list[tuple[int, int, int, int]],
    mode: str = "time-filtered",
    tie_rule: str = "optimistic",
) -> MetricsReport:
    """Rank an explicit (s, r, o, t) query list (e.g. planted consequences).

    Filtering still uses the full snapshot at each t, so alternative true
    answers are excluded exactly as in split-level evaluation.
    """
    if not data.augmented:
        raise ContractError("evaluate_facts needs the inverse-augmented dataset")
    by_t: dict[int, list[tuple[int, int, int]]] = {}
    for s, r, o, t in facts_with_time:
        by_t.setdefault(int(t), []).append((int(s), int(r), int(o)))
    results = []
    for t in sorted(by_t):
        rows = np.asarray(by_t[t], dtype=np.int64)
        scores = model.score_queries_at(rows, t, data)
        snapshot_facts = data.snapshots[t].facts
        index = _truth_index(snapshot_facts)
        for i, (s, r, o) in enumerate(rows):
            raw = rank(scores[i], int(o), None, tie_rule)
            if mode == "time-filtered":
                others = index.get((int(s), int(r)), np.empty(0, dtype=np.int64))
                excluded = {int(x) for x in others if x != o}
                filt = rank(scores[i], int(o), excluded, tie_rule) if excluded else raw
            else:
                filt = raw
            results.append(RankingResult(int(s), int(r), int(o), t, filt, raw))
    return _metrics_from_results(results, data.num_relations)
