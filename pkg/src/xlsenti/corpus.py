"""Corpus ingestion: delimited files -> uniform labeled instances."""

from __future__ import annotations

import csv
import sys
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from .errors import CorpusFormatError, DomainError, RowError

csv.field_size_limit(sys.maxsize)


class SentimentLabel(str, Enum):
    # Declaration order fixes the head output index: 0=positive, 1=negative, 2=neutral.
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NEUTRAL = "neutral"

    @property
    def index(self) -> int:
        return LABELS.index(self)

    @classmethod
    def parse(cls, token: str) -> "SentimentLabel":
        return cls(token.strip().lower())


LABELS: tuple[SentimentLabel, ...] = tuple(SentimentLabel)

# Ordinal order used for monotonicity and majority tie-breaks.
POLARITY_ORDER: tuple[SentimentLabel, ...] = (
    SentimentLabel.NEGATIVE,
    SentimentLabel.NEUTRAL,
    SentimentLabel.POSITIVE,
)


class Granularity(str, Enum):
    DOCUMENT = "document"
    PARAGRAPH = "paragraph"
    SENTENCE = "sentence"


class Language(str, Enum):
    SL = "sl"
    HR = "hr"


@dataclass(frozen=True)
class LabeledInstance:
    id: str
    text: str
    language: Language
    level: Granularity
    label: SentimentLabel
    mean_score: float | None = None

    def __post_init__(self):
        if self.language is Language.HR and self.level is not Granularity.DOCUMENT:
            raise DomainError(f"instance {self.id}: Croatian data is document-level only")
        if self.mean_score is not None and not 1.0 <= self.mean_score <= 5.0:
            raise DomainError(f"instance {self.id}: mean score {self.mean_score} outside [1, 5]")


@dataclass(frozen=True)
class LevelStats:
    examples: int
    positive: int
    negative: int
    neutral: int

    def as_dict(self) -> dict[str, int]:
        return {
            "examples": self.examples,
            "positive": self.positive,
            "negative": self.negative,
            "neutral": self.neutral,
        }


@dataclass(frozen=True)
class ColumnMapping:
    """Which columns of a delimited file hold what.

    ``id`` may name several columns; their values are joined with ``-`` so
    paragraph and sentence rows can be keyed by (document, paragraph, ...).
    """

    content: str
    label: str
    id: tuple[str, ...]
    mean_score: str | None = None
    delimiter: str | None = None
    quoting: str | None = None
    label_aliases: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: Mapping) -> "ColumnMapping":
        ids = raw["id"]
        if isinstance(ids, str):
            ids = [ids]
        return cls(
            content=raw["content"],
            label=raw["label"],
            id=tuple(ids),
            mean_score=raw.get("mean_score"),
            delimiter=raw.get("delimiter"),
            quoting=raw.get("quoting"),
            label_aliases={str(k).lower(): str(v).lower() for k, v in (raw.get("label_aliases") or {}).items()},
        )

    def to_dict(self) -> dict:
        out = {"content": self.content, "label": self.label, "id": list(self.id)}
        for key in ("mean_score", "delimiter", "quoting"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        if self.label_aliases:
            out["label_aliases"] = dict(self.label_aliases)
        return out

    def dialect_for(self, path: Path) -> tuple[str, int]:
        delimiter = self.delimiter
        if delimiter is None:
            delimiter = "," if path.suffix.lower() == ".csv" else "\t"
        quoting = self.quoting
        if quoting is None:
            quoting = "minimal" if delimiter == "," else "none"
        if quoting not in ("minimal", "none"):
            raise CorpusFormatError(f"unknown quoting mode {quoting!r}")
        return delimiter, csv.QUOTE_MINIMAL if quoting == "minimal" else csv.QUOTE_NONE


# Default export layout; load_corpus(path, ..., EXPORT_MAPPING) reads it back.
EXPORT_MAPPING = ColumnMapping(
    content="text", label="label", id=("id",), mean_score="mean_score",
    delimiter=",", quoting="minimal",
)


def load_corpus(
    path: str | Path,
    language: Language | str,
    level: Granularity | str,
    format_spec: ColumnMapping,
) -> list[LabeledInstance]:
    path = Path(path)
    language = Language(language)
    level = Granularity(level)
    delimiter, quoting = format_spec.dialect_for(path)
    try:
        fh = path.open("r", encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot read corpus file {path}: {exc}") from exc

    instances: list[LabeledInstance] = []
    with fh:
        reader = csv.reader(fh, delimiter=delimiter, quoting=quoting)
        try:
            header = next(reader)
        except StopIteration:
            raise CorpusFormatError(f"{path}: missing header row") from None
        header = [h.strip().lstrip("﻿") for h in header]
        wanted = [format_spec.content, format_spec.label, *format_spec.id]
        if format_spec.mean_score:
            wanted.append(format_spec.mean_score)
        for column in wanted:
            if column not in header:
                raise CorpusFormatError(f"{path}: column {column!r} not found in header")
        pos = {name: header.index(name) for name in wanted}

        # Row numbers count the header as row 1, matching a spreadsheet view.
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < len(header):
                row = row + [""] * (len(header) - len(row))
            token = row[pos[format_spec.label]].strip().lower()
            token = format_spec.label_aliases.get(token, token)
            try:
                label = SentimentLabel(token)
            except ValueError:
                raise RowError(path, row_number, f"unparseable label {row[pos[format_spec.label]]!r}") from None
            mean_score = None
            if format_spec.mean_score:
                raw_score = row[pos[format_spec.mean_score]].strip()
                if raw_score:
                    try:
                        mean_score = float(raw_score.replace(",", "."))
                    except ValueError:
                        raise RowError(path, row_number, f"unparseable mean score {raw_score!r}") from None
            try:
                instances.append(LabeledInstance(
                    id="-".join(row[pos[c]].strip() for c in format_spec.id),
                    text=row[pos[format_spec.content]],
                    language=language,
                    level=level,
                    label=label,
                    mean_score=mean_score,
                ))
            except DomainError as exc:
                raise RowError(path, row_number, str(exc)) from None
    return instances


def write_corpus(instances: Iterable[LabeledInstance], path: str | Path) -> Path:
    """Export instances in the EXPORT_MAPPING layout."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=",", quoting=csv.QUOTE_ALL, lineterminator="\n")
        writer.writerow(["id", "text", "label", "mean_score"])
        for inst in instances:
            score = "" if inst.mean_score is None else repr(inst.mean_score)
            writer.writerow([inst.id, inst.text, inst.label.value, score])
    return path


def map_likert(mean_score: float, low_threshold: float = 2.4, high_threshold: float = 3.6) -> SentimentLabel:
    if not 1.0 <= mean_score <= 5.0:
        raise DomainError(f"mean score {mean_score} outside [1, 5]")
    if not low_threshold < high_threshold:
        raise DomainError(f"thresholds must satisfy low < high, got ({low_threshold}, {high_threshold})")
    if mean_score < low_threshold:
        return SentimentLabel.NEGATIVE
    if mean_score > high_threshold:
        return SentimentLabel.POSITIVE
    return SentimentLabel.NEUTRAL


def audit_likert(instances: Iterable[LabeledInstance], low_threshold: float = 2.4, high_threshold: float = 3.6):
    """Instances whose source label disagrees with the re-derived Likert label.

    Source labels stay authoritative; this only reports disagreements.
    """
    out = []
    for inst in instances:
        if inst.mean_score is None:
            continue
        derived = map_likert(inst.mean_score, low_threshold, high_threshold)
        if derived is not inst.label:
            out.append((inst, derived))
    return out


def dataset_stats(instances: Iterable[LabeledInstance]) -> LevelStats:
    counts = Counter(inst.label for inst in instances)
    return LevelStats(
        examples=sum(counts.values()),
        positive=counts[SentimentLabel.POSITIVE],
        negative=counts[SentimentLabel.NEGATIVE],
        neutral=counts[SentimentLabel.NEUTRAL],
    )
