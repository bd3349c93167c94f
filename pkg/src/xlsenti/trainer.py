"""Scenario registry, size-proportional task sampling and the training loop."""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import torch

from .corpus import LABELS, Granularity, LabeledInstance, Language
from .errors import ConfigurationError, DivergenceError, DomainError, ExhaustionError, StateError
from .evaluate import MetricsReport, evaluate
from .model import EncoderSpec, ModelBundle, build_model, compute_loss, predict, save_checkpoint
from .preprocess import DatasetSplit, TaskCollection

log = logging.getLogger(__name__)

SL_DOC = (Language.SL, Granularity.DOCUMENT)
SL_PARA = (Language.SL, Granularity.PARAGRAPH)
SL_SENT = (Language.SL, Granularity.SENTENCE)
HR_DOC = (Language.HR, Granularity.DOCUMENT)


def source_key(language: Language | str, level: Granularity | str) -> str:
    """Name of one cleaned (language, level) pool, e.g. ``sl_document``."""
    return f"{Language(language).value}_{Granularity(level).value}"


class Scenario(str, Enum):
    SL_STL_ZERO_HR = "SL_STL_ZERO_HR"
    SL_MTL_ZERO_HR = "SL_MTL_ZERO_HR"
    HR_STL = "HR_STL"
    SLHR_MTL = "SLHR_MTL"
    SLHR_STL = "SLHR_STL"

    @property
    def multitask(self) -> bool:
        return "_MTL" in self.value

    @property
    def zero_shot(self) -> bool:
        return self.value.endswith("ZERO_HR")

    @property
    def label(self) -> str:
        return SCENARIO_LABELS[self]

    @property
    def tasks(self) -> list[Granularity]:
        return list(SCENARIO_SOURCES[self])

    def sources(self) -> dict[Granularity, tuple[tuple[Language, Granularity], ...]]:
        return SCENARIO_SOURCES[self]

    @classmethod
    def parse(cls, name: str) -> "Scenario":
        try:
            return cls(name)
        except ValueError:
            valid = ", ".join(s.value for s in cls)
            raise ConfigurationError(f"unknown scenario {name!r}; valid names: {valid}") from None


SCENARIO_SOURCES: dict[Scenario, dict[Granularity, tuple[tuple[Language, Granularity], ...]]] = {
    Scenario.SL_STL_ZERO_HR: {Granularity.DOCUMENT: (SL_DOC,)},
    Scenario.SL_MTL_ZERO_HR: {
        Granularity.DOCUMENT: (SL_DOC,),
        Granularity.PARAGRAPH: (SL_PARA,),
        Granularity.SENTENCE: (SL_SENT,),
    },
    Scenario.HR_STL: {Granularity.DOCUMENT: (HR_DOC,)},
    Scenario.SLHR_MTL: {
        Granularity.DOCUMENT: (SL_DOC, HR_DOC),
        Granularity.PARAGRAPH: (SL_PARA,),
        Granularity.SENTENCE: (SL_SENT,),
    },
    Scenario.SLHR_STL: {Granularity.DOCUMENT: (SL_DOC, HR_DOC)},
}

# Row names used in rendered result tables.
SCENARIO_LABELS = {
    Scenario.SL_STL_ZERO_HR: "SL STL",
    Scenario.SL_MTL_ZERO_HR: "SL MTL",
    Scenario.HR_STL: "HR STL",
    Scenario.SLHR_STL: "SL+HR STL",
    Scenario.SLHR_MTL: "SL+HR MTL",
}

STL_EPOCHS = 5
MTL_EPOCHS = 3


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-5
    batch_size: int = 32
    epochs: int | None = None
    seed: int = 0
    dropout_rate: float = 0.3
    selection_task: str = "document"
    eval_batch_size: int = 64

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DomainError("learning_rate must be positive")
        if self.batch_size < 1:
            raise DomainError("batch_size must be at least 1")
        if self.epochs is not None and self.epochs < 1:
            raise DomainError("epochs must be at least 1")

    def epochs_for(self, scenario: Scenario) -> int:
        if self.epochs is not None:
            return self.epochs
        return MTL_EPOCHS if scenario.multitask else STL_EPOCHS


@dataclass
class StepRecord:
    step: int
    epoch: int
    task: str
    loss: float
    size: int
    languages: dict[str, int]


@dataclass
class EpochRecord:
    epoch: int
    checkpoint: str
    mean_train_loss: float
    dev: dict[str, MetricsReport]


@dataclass
class RunHistory:
    steps: list[StepRecord] = field(default_factory=list)
    epochs: list[EpochRecord] = field(default_factory=list)
    selected: str | None = None

    def language_count(self, language: Language | str) -> int:
        lang = Language(language).value
        return sum(s.languages.get(lang, 0) for s in self.steps)

    def epoch_losses(self) -> list[float]:
        return [e.mean_train_loss for e in self.epochs]

    def records(self) -> list[dict]:
        out = [{"type": "step", **asdict(s)} for s in self.steps]
        for e in self.epochs:
            out.append({
                "type": "epoch", "epoch": e.epoch, "checkpoint": e.checkpoint,
                "mean_train_loss": e.mean_train_loss,
                "dev": {k: rep.to_dict() for k, rep in e.dev.items()},
            })
        out.append({"type": "selection", "checkpoint": self.selected})
        return out

    def write_jsonl(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return path


def read_history_records(path: str | Path) -> list[dict]:
    with Path(path).open("r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def sample_task(collection: TaskCollection | Mapping[str, int], rng: np.random.Generator) -> str:
    """Draw a task key with probability proportional to its pool size."""
    sizes = collection.sizes if isinstance(collection, TaskCollection) else collection
    keys = [k for k, n in sizes.items() if n > 0]
    if not keys:
        raise ExhaustionError("every task pool is empty")
    weights = np.array([sizes[k] for k in keys], dtype=np.float64)
    cumulative = np.cumsum(weights)
    u = rng.random() * cumulative[-1]
    return keys[int(np.searchsorted(cumulative, u, side="right"))]


def select_best(history: RunHistory, metric: str | Callable[[EpochRecord], float] = "document") -> str:
    """Checkpoint of the epoch with the highest dev macro-F1; ties go to the earlier epoch."""
    if not history.epochs:
        raise StateError("run history has no epoch records")
    if isinstance(metric, str):
        key = metric

        def metric(rec: EpochRecord) -> float:
            if key not in rec.dev:
                raise StateError(f"epoch {rec.epoch} has no dev report for {key!r}")
            return rec.dev[key].macro_f1

    best = history.epochs[0]
    best_value = metric(best)
    for rec in history.epochs[1:]:
        value = metric(rec)
        if value > best_value:
            best, best_value = rec, value
    return best.checkpoint


def scenario_pools(scenario: Scenario, data: Mapping[str, DatasetSplit], part: str) -> dict[str, list[LabeledInstance]]:
    """Concatenate the source pools feeding each task of ``scenario``."""
    pools = {}
    for task, sources in scenario.sources().items():
        members: list[LabeledInstance] = []
        for language, level in sources:
            key = source_key(language, level)
            if key not in data:
                raise ConfigurationError(f"scenario {scenario.value} needs pool {key!r}, which is missing")
            members.extend(getattr(data[key], part))
        pools[task.value] = members
    return pools


def check_scenario_data(scenario: Scenario, data: Mapping[str, DatasetSplit]):
    for task, sources in scenario.sources().items():
        for language, level in sources:
            key = source_key(language, level)
            if key not in data or not data[key].train:
                raise ConfigurationError(
                    f"scenario {scenario.value} needs non-empty training data for {key!r} ({task.value} head)"
                )


def build_model_for(scenario: Scenario, spec: EncoderSpec, config: TrainConfig, encoder=None) -> ModelBundle:
    return build_model(spec, scenario.tasks, seed=config.seed, dropout_rate=config.dropout_rate, encoder=encoder)


def dev_reports(model: ModelBundle, scenario: Scenario, data: Mapping[str, DatasetSplit], batch_size: int = 64) -> dict[str, MetricsReport]:
    """Dev macro metrics per task (union of sources) and per source pool."""
    out = {}
    for task, sources in scenario.sources().items():
        union_gold, union_pred = [], []
        for language, level in sources:
            dev = data[source_key(language, level)].dev
            if not dev:
                continue
            probs = predict(model, [i.text for i in dev], task, batch_size=batch_size)
            pred = [LABELS[j] for j in probs.argmax(dim=1).tolist()]
            gold = [i.label for i in dev]
            if len(sources) > 1:
                out[f"{task.value}:{language.value}"] = evaluate(gold, pred)
            union_gold += gold
            union_pred += pred
        if union_gold:
            out[task.value] = evaluate(union_gold, union_pred)
    return out


def train_step(model: ModelBundle, optimizer: torch.optim.Optimizer, task: str, batch: Sequence[LabeledInstance],
               generator: torch.Generator | None = None, step: int = 0) -> float:
    """One update through the shared encoder and ``task``'s head; returns the batch loss.

    Gradients are reset to ``None`` first, so parameters of the other heads
    receive no update (Adam skips parameters without a gradient).
    """
    optimizer.zero_grad(set_to_none=True)
    out = model([b.text for b in batch], task, mode="train", generator=generator)
    loss = compute_loss(out, [b.label for b in batch])
    value = float(loss.detach())
    if not math.isfinite(value):
        raise DivergenceError(step, task, value)
    loss.backward()
    optimizer.step()
    return value


def train_scenario(
    scenario: Scenario | str,
    data: Mapping[str, DatasetSplit],
    model: ModelBundle,
    config: TrainConfig,
    checkpoint_dir: str | Path | None = None,
) -> tuple[ModelBundle, RunHistory]:
    """Train ``model`` under ``scenario`` and return it loaded with the dev-selected epoch.

    Every step draws one task (weighted by the instances that task still has
    left this epoch), takes the next batch from that task's shuffled cursor
    and applies one optimizer update through the shared encoder and that
    task's head.  Each epoch therefore visits every training instance once.
    """
    scenario = Scenario(scenario) if not isinstance(scenario, Scenario) else scenario
    check_scenario_data(scenario, data)
    expected = [t.value for t in scenario.tasks]
    if sorted(model.tasks) != sorted(expected):
        raise ConfigurationError(f"scenario {scenario.value} needs heads {expected}, model has {model.tasks}")
    pools = scenario_pools(scenario, data, "train")
    selection = config.selection_task
    if not scenario_pools(scenario, data, "dev").get(selection):
        raise ConfigurationError(f"no dev data for selection task {selection!r}")

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    dropout_gen = torch.Generator().manual_seed(config.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    history = RunHistory()
    best_state, best_value = None, -math.inf
    step = 0

    for epoch in range(1, config.epochs_for(scenario) + 1):
        order = {k: rng.permutation(len(pool)) for k, pool in pools.items()}
        cursor = {k: 0 for k in pools}
        remaining = {k: len(pool) for k, pool in pools.items()}
        losses = []
        while any(remaining.values()):
            task = sample_task(remaining, rng)
            start = cursor[task]
            idx = order[task][start:start + config.batch_size]
            cursor[task] += len(idx)
            remaining[task] -= len(idx)
            batch = [pools[task][int(i)] for i in idx]

            step += 1
            value = train_step(model, optimizer, task, batch, dropout_gen, step=step)

            langs: dict[str, int] = {}
            for b in batch:
                langs[b.language.value] = langs.get(b.language.value, 0) + 1
            history.steps.append(StepRecord(step, epoch, task, value, len(batch), langs))
            losses.append(value)

        reports = dev_reports(model, scenario, data, config.eval_batch_size)
        ckpt = f"epoch-{epoch}"
        mean_loss = float(np.mean(losses)) if losses else float("nan")
        history.epochs.append(EpochRecord(epoch, ckpt, mean_loss, reports))
        value = reports[selection].macro_f1
        log.info("%s epoch %d: train loss %.4f, dev %s macro-F1 %.4f", scenario.value, epoch, mean_loss, selection, value)
        if checkpoint_dir is not None:
            save_checkpoint(model, Path(checkpoint_dir) / f"{ckpt}.ckpt", extra={"scenario": scenario.value, "epoch": epoch})
        if value > best_value:
            best_value = value
            best_state = copy.deepcopy(model.state_dict())

    history.selected = select_best(history, selection)
    model.load_state_dict(best_state)
    model.eval()
    return model, history
