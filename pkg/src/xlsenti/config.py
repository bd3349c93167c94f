"""YAML run configuration.  One file fully determines a run."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .corpus import ColumnMapping, Granularity, Language
from .errors import ConfigurationError, DomainError
from .model import EncoderSpec
from .preprocess import SplitSpec
from .trainer import Scenario, TrainConfig, source_key


class ConfigError(ConfigurationError):
    def __init__(self, field_path: str, message: str):
        super().__init__(f"config field {field_path}: {message}")
        self.field_path = field_path


@dataclass(frozen=True)
class CorpusEntry:
    language: Language
    level: Granularity
    path: Path
    columns: ColumnMapping

    @property
    def key(self) -> str:
        return source_key(self.language, self.level)


@dataclass
class RunConfig:
    corpora: list[CorpusEntry]
    split: SplitSpec = field(default_factory=SplitSpec)
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    scenario: Scenario | None = None
    output_dir: Path = Path("work")
    likert_low: float = 2.4
    likert_high: float = 3.6
    likert_audit: bool = False
    casefold: bool = False
    expected: dict[str, dict[str, int]] | None = None
    source_path: Path | None = None
    raw: dict = field(default_factory=dict)

    def corpus(self, key: str) -> CorpusEntry:
        for c in self.corpora:
            if c.key == key:
                return c
        raise KeyError(key)


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigError(name, "expected a mapping")
    return value


def _build(cls, values: dict, path: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(values) - allowed
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown field")
    try:
        return cls(**values)
    except (TypeError, DomainError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def parse_config(raw: Any, base_dir: Path = Path(".")) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a mapping at the top level")
    entries = raw.get("corpora")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("corpora", "expected a non-empty list of corpus entries")
    corpora = []
    seen = set()
    for i, entry in enumerate(entries):
        where = f"corpora[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(where, "expected a mapping")
        for required in ("language", "level", "path", "columns"):
            if required not in entry:
                raise ConfigError(f"{where}.{required}", "missing")
        try:
            language = Language(entry["language"])
        except ValueError:
            raise ConfigError(f"{where}.language", f"expected one of sl, hr, got {entry['language']!r}") from None
        try:
            level = Granularity(entry["level"])
        except ValueError:
            raise ConfigError(f"{where}.level", f"expected document/paragraph/sentence, got {entry['level']!r}") from None
        if language is Language.HR and level is not Granularity.DOCUMENT:
            raise ConfigError(f"{where}.level", "Croatian corpora are document-level only")
        cols = entry["columns"]
        for required in ("content", "label", "id"):
            if not isinstance(cols, dict) or required not in cols:
                raise ConfigError(f"{where}.columns.{required}", "missing")
        path = Path(entry["path"])
        if not path.is_absolute():
            path = base_dir / path
        c = CorpusEntry(language, level, path, ColumnMapping.from_dict(cols))
        if c.key in seen:
            raise ConfigError(where, f"duplicate corpus {c.key}")
        seen.add(c.key)
        corpora.append(c)

    likert = _section(raw, "likert")
    preprocess = _section(raw, "preprocess")
    scenario = raw.get("scenario")
    if scenario is not None:
        try:
            scenario = Scenario.parse(scenario)
        except ConfigurationError as exc:
            raise ConfigError("scenario", str(exc)) from None
    expected = raw.get("expected")
    if expected is not None and not isinstance(expected, dict):
        raise ConfigError("expected", "expected a mapping of pool -> counts")
    output_dir = Path(raw.get("output_dir", "work"))
    if not output_dir.is_absolute():
        output_dir = base_dir / output_dir
    low, high = float(likert.get("low", 2.4)), float(likert.get("high", 3.6))
    if not low < high:
        raise ConfigError("likert", "low must be below high")
    return RunConfig(
        corpora=corpora,
        split=_build(SplitSpec, _section(raw, "split"), "split"),
        encoder=_build(EncoderSpec, _section(raw, "encoder"), "encoder"),
        train=_build(TrainConfig, _section(raw, "train"), "train"),
        scenario=scenario,
        output_dir=output_dir,
        likert_low=low,
        likert_high=high,
        likert_audit=bool(likert.get("audit", False)),
        casefold=bool(preprocess.get("casefold", False)),
        expected=expected,
        raw=raw,
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML: {exc}") from None
    cfg = parse_config(raw, base_dir=path.resolve().parent)
    cfg.source_path = path
    return cfg
