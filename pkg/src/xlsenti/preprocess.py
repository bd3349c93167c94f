"""Cleaning, stratified splitting and task-pool assembly."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import LABELS, LabeledInstance, SentimentLabel
from .errors import ConfigurationError, DomainError, StratificationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.20
    dev_fraction_of_train: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise DomainError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if not 0.0 <= self.dev_fraction_of_train < 1.0:
            raise DomainError(f"dev_fraction_of_train must lie in [0, 1), got {self.dev_fraction_of_train}")


@dataclass
class DatasetSplit:
    train: list[LabeledInstance]
    dev: list[LabeledInstance]
    test: list[LabeledInstance]

    def parts(self):
        return (("train", self.train), ("dev", self.dev), ("test", self.test))


@dataclass
class TaskCollection:
    pools: dict[str, list[LabeledInstance]]
    sizes: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.sizes = {key: len(pool) for key, pool in self.pools.items()}

    @property
    def total(self) -> int:
        return sum(self.sizes.values())


@dataclass(frozen=True)
class Removal:
    instance: LabeledInstance
    kept_id: str
    reason: str = "duplicate content; prevents leakage into dev/test"


def _normalize(text: str, casefold: bool = False) -> str:
    text = text.strip()
    return text.casefold() if casefold else text


def drop_empty(instances: Iterable[LabeledInstance]) -> list[LabeledInstance]:
    # str.strip() with no argument trims all Unicode whitespace.
    return [inst for inst in instances if inst.text.strip()]


def deduplicate(instances: Iterable[LabeledInstance], casefold: bool = False, removals: list | None = None) -> list[LabeledInstance]:
    """Keep the first instance of every distinct trimmed text.

    If ``removals`` is given, one :class:`Removal` is appended per dropped
    instance, naming the id it duplicated.
    """
    first_seen: dict[str, str] = {}
    kept = []
    for inst in instances:
        key = _normalize(inst.text, casefold)
        if key in first_seen:
            if removals is not None:
                removals.append(Removal(inst, first_seen[key]))
            continue
        first_seen[key] = inst.id
        kept.append(inst)
    return kept


def clean(instances: Sequence[LabeledInstance], casefold: bool = False, removals: list | None = None) -> list[LabeledInstance]:
    """Empty-drop followed by dedup, applied to one (language, level) pool."""
    return deduplicate(drop_empty(instances), casefold=casefold, removals=removals)


def allocate(counts: Sequence[int], fraction: float) -> list[int]:
    """Largest-remainder apportionment of ``round(sum * fraction)`` across counts.

    Ties in the fractional part go to the earlier entry.
    """
    total = sum(counts)
    target = math.floor(total * fraction + 0.5)
    exact = [c * fraction for c in counts]
    alloc = [math.floor(x) for x in exact]
    short = target - sum(alloc)
    order = sorted(range(len(counts)), key=lambda i: (-(exact[i] - alloc[i]), i))
    for i in order[:short]:
        alloc[i] += 1
    return [min(a, c) for a, c in zip(alloc, counts)]


def _carve(instances: list[LabeledInstance], fraction: float, rng: np.random.Generator):
    by_label = {label: [i for i, inst in enumerate(instances) if inst.label is label] for label in LABELS}
    quotas = allocate([len(by_label[label]) for label in LABELS], fraction)
    chosen: set[int] = set()
    for label, quota in zip(LABELS, quotas):
        idx = np.asarray(by_label[label], dtype=np.int64)
        rng.shuffle(idx)
        chosen.update(int(i) for i in idx[:quota])
    taken = [inst for i, inst in enumerate(instances) if i in chosen]
    rest = [inst for i, inst in enumerate(instances) if i not in chosen]
    return rest, taken


def stratified_split(instances: Sequence[LabeledInstance], spec: SplitSpec) -> DatasetSplit:
    instances = list(instances)
    present = {inst.label for inst in instances}
    for label in LABELS:
        if label not in present:
            raise StratificationError(f"no instances with label {label.value!r}; cannot stratify")
    ids = [inst.id for inst in instances]
    if len(set(ids)) != len(ids):
        raise StratificationError("instance ids are not unique within the pool")
    rng = np.random.default_rng(spec.seed)
    train_dev, test = _carve(instances, spec.test_fraction, rng)
    train, dev = _carve(train_dev, spec.dev_fraction_of_train, rng)
    return DatasetSplit(train=train, dev=dev, test=test)


def build_collection(splits: Mapping[str, DatasetSplit] | Iterable[tuple[str, DatasetSplit]]) -> TaskCollection:
    items = list(splits.items()) if isinstance(splits, Mapping) else list(splits)
    if not items:
        raise ConfigurationError("task collection needs at least one task")
    pools: dict[str, list[LabeledInstance]] = {}
    for key, split in items:
        if key in pools:
            raise ConfigurationError(f"duplicate task key {key!r}")
        pools[key] = list(split.train)
    return TaskCollection(pools)


def label_counts(instances: Iterable[LabeledInstance]) -> dict[SentimentLabel, int]:
    counts = {label: 0 for label in LABELS}
    for inst in instances:
        counts[inst.label] += 1
    return counts


def write_split_manifest(splits: Mapping[str, DatasetSplit], path: str | Path) -> Path:
    """One ``id, pool, part`` record per instance, pools in sorted order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["id", "pool", "part"])
        for pool in sorted(splits):
            for part, members in splits[pool].parts():
                for inst in members:
                    writer.writerow([inst.id, pool, part])
    return path


def read_split_manifest(path: str | Path) -> dict[str, dict[str, str]]:
    """pool -> {id: part}."""
    out: dict[str, dict[str, str]] = {}
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh, delimiter="\t"):
            out.setdefault(row["pool"], {})[row["id"]] = row["part"]
    return out


def apply_manifest(instances: Sequence[LabeledInstance], assignment: Mapping[str, str]) -> DatasetSplit:
    parts: dict[str, list[LabeledInstance]] = {"train": [], "dev": [], "test": []}
    for inst in instances:
        part = assignment.get(inst.id)
        if part is not None:
            parts[part].append(inst)
    return DatasetSplit(**parts)
