"""Synthetic trilevel corpus for offline tests and demos.

Texts are built from small sentiment-marker vocabularies plus shared filler
words, so classes are (near) linearly separable in hashed n-gram space.  The
files mimic the public corpora's layouts: tab-separated Slovene files with
``nr``/``pid``/``sid`` keys and a comma-separated Croatian file with quoting.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import yaml

from .corpus import Granularity, LabeledInstance, Language, SentimentLabel

MARKERS = {
    Language.SL: {
        SentimentLabel.POSITIVE: ["uspeh", "rast", "odlično", "zmaga", "napredek", "dobiček", "veselje", "pohvala"],
        SentimentLabel.NEGATIVE: ["kriza", "izguba", "padec", "slabo", "škandal", "dolg", "stečaj", "napaka"],
        SentimentLabel.NEUTRAL: ["seja", "poročilo", "odbor", "sestanek", "predlog", "zakon", "občina", "urad"],
    },
    Language.HR: {
        SentimentLabel.POSITIVE: ["uspjeh", "rast", "odlično", "pobjeda", "napredak", "dobit", "radost", "pohvala"],
        SentimentLabel.NEGATIVE: ["kriza", "gubitak", "pad", "loše", "skandal", "dug", "stečaj", "greška"],
        SentimentLabel.NEUTRAL: ["sjednica", "izvješće", "odbor", "sastanak", "prijedlog", "zakon", "općina", "ured"],
    },
}
FILLER = {
    Language.SL: ["danes", "vlada", "podjetje", "leto", "ministrstvo", "banka", "trg", "ljudje", "mesto", "država", "teden", "svet"],
    Language.HR: ["danas", "vlada", "tvrtka", "godina", "ministarstvo", "banka", "tržište", "ljudi", "grad", "država", "tjedan", "svijet"],
}
LABEL_WEIGHTS = {SentimentLabel.POSITIVE: 0.2, SentimentLabel.NEGATIVE: 0.3, SentimentLabel.NEUTRAL: 0.5}
SENTENCES_PER_LEVEL = {Granularity.DOCUMENT: 3, Granularity.PARAGRAPH: 2, Granularity.SENTENCE: 1}
SCORE_BANDS = {
    SentimentLabel.NEGATIVE: (1.0, 2.3),
    SentimentLabel.NEUTRAL: (2.5, 3.5),
    SentimentLabel.POSITIVE: (3.7, 5.0),
}


def _sentence(rng: np.random.Generator, language: Language, label: SentimentLabel) -> str:
    words = list(rng.choice(FILLER[language], size=int(rng.integers(4, 8))))
    for marker in rng.choice(MARKERS[language][label], size=2, replace=False):
        words.insert(int(rng.integers(0, len(words) + 1)), marker)
    text = " ".join(words)
    return text[0].upper() + text[1:] + "."


def synthetic_instances(n: int, language: Language | str, level: Granularity | str, seed: int = 0, id_prefix: str = "") -> list[LabeledInstance]:
    """``n`` distinct labeled instances, label mix 20/30/50 (pos/neg/neu)."""
    language, level = Language(language), Granularity(level)
    rng = np.random.default_rng(seed)
    labels = list(LABEL_WEIGHTS)
    probs = np.array(list(LABEL_WEIGHTS.values()))
    out, seen = [], set()
    while len(out) < n:
        label = labels[int(rng.choice(3, p=probs))]
        text = " ".join(_sentence(rng, language, label) for _ in range(SENTENCES_PER_LEVEL[level]))
        if text in seen:
            continue
        seen.add(text)
        lo, hi = SCORE_BANDS[label]
        score = round(float(rng.uniform(lo, hi)), 2)
        out.append(LabeledInstance(f"{id_prefix}{len(out) + 1}", text, language, level, label, score))
    # Guarantee every label is present, whatever the draw.
    for i, label in enumerate(labels):
        if not any(inst.label is label for inst in out):
            old = out[i]
            text = " ".join(_sentence(rng, language, label) for _ in range(SENTENCES_PER_LEVEL[level]))
            out[i] = LabeledInstance(old.id, text, language, level, label, sum(SCORE_BANDS[label]) / 2)
    return out


FIXTURE_FILES = {
    "sl_document": ("sl_documents.tsv", ["nr", "title", "content", "avg_sentiment", "sentiment"]),
    "sl_paragraph": ("sl_paragraphs.tsv", ["nr", "pid", "content", "avg_sentiment", "sentiment"]),
    "sl_sentence": ("sl_sentences.tsv", ["nr", "pid", "sid", "content", "sentiment"]),
    "hr_document": ("hr_documents.csv", ["ID", "Text", "Sentiment"]),
}

FIXTURE_COLUMNS = {
    "sl_document": {"content": "content", "label": "sentiment", "id": "nr", "mean_score": "avg_sentiment"},
    "sl_paragraph": {"content": "content", "label": "sentiment", "id": ["nr", "pid"], "mean_score": "avg_sentiment"},
    "sl_sentence": {"content": "content", "label": "sentiment", "id": ["nr", "pid", "sid"]},
    "hr_document": {"content": "Text", "label": "Sentiment", "id": "ID"},
}


def _rows(key: str, instances: list[LabeledInstance]):
    for k, inst in enumerate(instances, start=1):
        label = inst.label.value
        if key == "sl_document":
            yield [str(k), f"Naslov {k}", inst.text, f"{inst.mean_score:.2f}", label]
        elif key == "sl_paragraph":
            yield [str((k - 1) // 4 + 1), str((k - 1) % 4 + 1), inst.text, f"{inst.mean_score:.2f}", label]
        elif key == "sl_sentence":
            yield [str((k - 1) // 8 + 1), str((k - 1) // 3 % 3 + 1), str((k - 1) % 3 + 1), inst.text, label]
        else:
            # Croatian file spells labels in title case; load_corpus is case-insensitive.
            yield [f"hr{k:04d}", inst.text, label.capitalize()]


def write_fixture_corpus(out_dir: str | Path, per_file: int = 75, seed: int = 7) -> dict[str, dict[str, int]]:
    """Write the four fixture files plus ``config.yaml``.

    Each file holds ``per_file`` rows: ``per_file - 3`` distinct instances,
    one whitespace-only neutral row and two exact duplicates, so cleaning
    removes exactly three rows per file.  Returns the post-cleaning counts.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    expected = {}
    levels = {"sl_document": (Language.SL, Granularity.DOCUMENT), "sl_paragraph": (Language.SL, Granularity.PARAGRAPH),
              "sl_sentence": (Language.SL, Granularity.SENTENCE), "hr_document": (Language.HR, Granularity.DOCUMENT)}
    for n, (key, (language, level)) in enumerate(levels.items()):
        distinct = synthetic_instances(per_file - 3, language, level, seed=seed * 100 + n)
        rng = np.random.default_rng(seed * 100 + n + 50)
        rows = list(distinct)
        blank = LabeledInstance("blank", "   ", language, level, SentimentLabel.NEUTRAL, 3.0)
        rows.insert(int(rng.integers(0, len(rows))), blank)
        for j in rng.choice(len(distinct), size=2, replace=False):
            src = distinct[int(j)]
            dup = LabeledInstance("dup", "  " + src.text, language, level, src.label, src.mean_score)
            pos = rows.index(src) + 1 + int(rng.integers(0, len(rows) - rows.index(src)))
            rows.insert(pos, dup)
        fname, header = FIXTURE_FILES[key]
        delimiter = "," if fname.endswith(".csv") else "\t"
        quoting = csv.QUOTE_ALL if delimiter == "," else csv.QUOTE_NONE
        with (out_dir / fname).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, delimiter=delimiter, quoting=quoting, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(_rows(key, rows))
        counts = {"examples": len(distinct)}
        for label in SentimentLabel:
            counts[label.value] = sum(1 for d in distinct if d.label is label)
        expected[key] = counts

    config = {
        "corpora": [
            {"language": key.split("_")[0], "level": key.split("_")[1], "path": FIXTURE_FILES[key][0], "columns": FIXTURE_COLUMNS[key]}
            for key in levels
        ],
        "likert": {"low": 2.4, "high": 3.6},
        "preprocess": {"casefold": False},
        "split": {"test_fraction": 0.2, "dev_fraction_of_train": 0.1, "seed": 13},
        "encoder": {"kind": "toy_deterministic", "hidden_dim": 64, "max_tokens": 512},
        "train": {"learning_rate": 0.01, "batch_size": 8, "seed": 13, "dropout_rate": 0.3},
        "scenario": "SLHR_MTL",
        "output_dir": "work",
        "expected": expected,
    }
    (out_dir / "config.yaml").write_text(
        "# Synthetic fixture corpus; regenerate with `xlsenti fixture <dir>`.\n"
        + yaml.safe_dump(config, sort_keys=False, allow_unicode=True),
        encoding="utf-8",
    )
    return expected


def fixture_dir() -> Path:
    """Location of the fixture corpus shipped inside the package."""
    return Path(__file__).parent / "data" / "fixture"
