"""Quadruple dataset loading, snapshot bucketing, and inverse-relation augmentation.

Input files are line-oriented integer columns ``subject relation object time``
(tab- or whitespace-separated; extra trailing columns are ignored). Raw
timestamps are densely re-indexed to 0..max_t preserving order, so the model
only ever sees adjacent snapshot indices regardless of the source granularity
(days, years, ...).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Quadruple:
    subject: int
    relation: int
    object: int
    time: int


@dataclass
class Snapshot:
    """All facts sharing one (re-indexed) time step, as an (n, 3) int array."""

    time: int
    facts: np.ndarray  # columns: subject, relation, object; no duplicate rows

    def __post_init__(self):
        self.facts = np.asarray(self.facts, dtype=np.int64).reshape(-1, 3)

    @property
    def num_facts(self) -> int:
        return self.facts.shape[0]


@dataclass
class TkgDataset:
    """Ordered snapshot sequence with vocabulary sizes and split boundaries.

    Train times are <= t1, validation in (t1, t2], test in (t2, t3]. The
    relation vocabulary doubles once :func:`add_inverse_relations` runs.
    """

    num_entities: int
    num_relations: int
    snapshots: list[Snapshot]
    t1: int
    t2: int
    t3: int
    granularity: str = "unknown"
    augmented: bool = False

    def __post_init__(self):
        if not (0 <= self.t1 <= self.t2 <= self.t3):
            raise DataError(
                f"split boundaries must satisfy 0 <= t1 <= t2 <= t3, "
                f"got {self.t1}, {self.t2}, {self.t3}"
            )
        times = [s.time for s in self.snapshots]
        if times != list(range(len(times))):
            raise DataError("snapshot times must be exactly 0..max_t")

    @property
    def num_relations_total(self) -> int:
        return 2 * self.num_relations if self.augmented else self.num_relations

    def split_times(self, split: str) -> range:
        if split == "train":
            return range(0, self.t1 + 1)
        if split == "valid":
            return range(self.t1 + 1, self.t2 + 1)
        if split == "test":
            return range(self.t2 + 1, self.t3 + 1)
        raise DataError(f"unknown split {split!r}")

    def split_facts(self, split: str) -> list[tuple[int, np.ndarray]]:
        """(time, facts) pairs for non-empty snapshots of a split."""
        return [
            (t, self.snapshots[t].facts)
            for t in self.split_times(split)
            if self.snapshots[t].num_facts
        ]

    def num_split_facts(self, split: str) -> int:
        return sum(self.snapshots[t].num_facts for t in self.split_times(split))

    def history_before(self, t: int, length: int) -> list[np.ndarray]:
        """Fact arrays of the last ``length`` snapshots strictly before ``t``."""
        lo = max(0, t - length)
        return [self.snapshots[i].facts for i in range(lo, t)]


def _dedup_facts(rows: np.ndarray) -> tuple[np.ndarray, int]:
    uniq = np.unique(rows, axis=0)
    return uniq, rows.shape[0] - uniq.shape[0]


def _read_quadruple_file(path: str | Path, split: str) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 4:
                raise DataError(f"{path}:{lineno}: expected 4 integer columns")
            try:
                s, r, o, t = (int(p) for p in parts[:4])
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: non-integer field in {parts[:4]}"
                ) from None
            if s < 0 or r < 0 or o < 0 or t < 0:
                raise DataError(f"{path}:{lineno}: negative id or time")
            rows.append((s, r, o, t))
    if not rows:
        raise DataError(f"empty split: {split} ({path})")
    return np.asarray(rows, dtype=np.int64)


def load_quadruples(
    train_path: str | Path,
    valid_path: str | Path,
    test_path: str | Path,
    stat_path: str | Path | None = None,
    granularity: str = "unknown",
) -> TkgDataset:
    """Load the three split files into a densely time-indexed dataset."""
    raw = {
        "train": _read_quadruple_file(train_path, "train"),
        "valid": _read_quadruple_file(valid_path, "valid"),
        "test": _read_quadruple_file(test_path, "test"),
    }

    all_times = np.unique(np.concatenate([q[:, 3] for q in raw.values()]))
    remap = {int(t): i for i, t in enumerate(all_times)}
    for q in raw.values():
        q[:, 3] = [remap[int(t)] for t in q[:, 3]]

    t1 = int(raw["train"][:, 3].max())
    t2 = int(raw["valid"][:, 3].max())
    t3 = int(raw["test"][:, 3].max())
    if int(raw["valid"][:, 3].min()) <= t1:
        raise DataError(
            f"split violation: validation contains a time <= t1={t1}"
        )
    if int(raw["test"][:, 3].min()) <= t2:
        raise DataError(f"split violation: test contains a time <= t2={t2}")

    quads = np.concatenate(list(raw.values()), axis=0)
    num_entities = int(max(quads[:, 0].max(), quads[:, 2].max())) + 1
    num_relations = int(quads[:, 1].max()) + 1

    if stat_path is not None:
        stat = Path(stat_path).read_text().split()
        if len(stat) >= 2:
            se, sr = int(stat[0]), int(stat[1])
            if se < num_entities or sr < num_relations:
                log.warning(
                    "stat file %s declares |V|=%d |R|=%d but data needs >= %d/%d; ignoring",
                    stat_path, se, sr, num_entities, num_relations,
                )
            else:
                num_entities, num_relations = se, sr

    snapshots = []
    dup_total = 0
    for t in range(t3 + 1):
        rows = quads[quads[:, 3] == t][:, :3]
        rows, dups = _dedup_facts(rows)
        dup_total += dups
        snapshots.append(Snapshot(time=t, facts=rows))
    if dup_total:
        log.info("dropped %d duplicate quadruples", dup_total)

    return TkgDataset(
        num_entities=num_entities,
        num_relations=num_relations,
        snapshots=snapshots,
        t1=t1,
        t2=t2,
        t3=t3,
        granularity=granularity,
    )


def add_inverse_relations(d: TkgDataset) -> TkgDataset:
    """Mirror every (s, r, o) as (o, r + |R|, s) so subject queries become
    object queries against the doubled relation vocabulary."""
    if d.augmented:
        raise ContractError("dataset already augmented with inverse relations")
    snapshots = []
    for snap in d.snapshots:
        f = snap.facts
        if f.size:
            inv = np.stack([f[:, 2], f[:, 1] + d.num_relations, f[:, 0]], axis=1)
            merged, _ = _dedup_facts(np.concatenate([f, inv], axis=0))
        else:
            merged = f
        snapshots.append(Snapshot(time=snap.time, facts=merged))
    return TkgDataset(
        num_entities=d.num_entities,
        num_relations=d.num_relations,
        snapshots=snapshots,
        t1=d.t1,
        t2=d.t2,
        t3=d.t3,
        granularity=d.granularity,
        augmented=True,
    )


def save_dataset(d: TkgDataset, out_dir: str | Path) -> None:
    """Write train/valid/test/stat files in the integer-column input format.

    Augmented datasets are not saved (the mirrored facts are derived data).
    """
    if d.augmented:
        raise ContractError("save the pre-augmentation dataset, not the augmented one")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for split, fname in (("train", "train.txt"), ("valid", "valid.txt"), ("test", "test.txt")):
        with open(out / fname, "w") as fh:
            for t in d.split_times(split):
                for s, r, o in d.snapshots[t].facts:
                    fh.write(f"{s}\t{r}\t{o}\t{t}\n")
    (out / "stat.txt").write_text(f"{d.num_entities}\t{d.num_relations}\n")


def summarize(d: TkgDataset) -> str:
    """One-line dataset statistics in the style used by dataset tables."""
    return (
        f"entities={d.num_entities} relations={d.num_relations} "
        f"train={d.num_split_facts('train')} valid={d.num_split_facts('valid')} "
        f"test={d.num_split_facts('test')} timestamps={d.t3 + 1} "
        f"granularity={d.granularity}"
    )


# Published statistics used by `cen prepare --expect` to sanity-check local
# copies of the public benchmark files: |V|, |R|, train/valid/test fact counts.
KNOWN_DATASETS = {
    "icews14": (6869, 230, 74845, 8514, 7371),
    "icews18": (23033, 256, 373018, 45995, 49545),
    "wiki": (12554, 24, 539286, 67538, 63110),
}


def check_against_known(d: TkgDataset, name: str) -> list[str]:
    """Return human-readable mismatch warnings against a known dataset."""
    if name not in KNOWN_DATASETS:
        raise DataError(f"unknown dataset name {name!r}; choose from {sorted(KNOWN_DATASETS)}")
    ev, er, etr, eva, ete = KNOWN_DATASETS[name]
    actual = {
        "entities": (d.num_entities, ev),
        "relations": (d.num_relations, er),
        "train facts": (d.num_split_facts("train"), etr),
        "valid facts": (d.num_split_facts("valid"), eva),
        "test facts": (d.num_split_facts("test"), ete),
    }
    return [
        f"{key}: got {got}, expected {want} for {name}"
        for key, (got, want) in actual.items()
        if got != want
    ]
