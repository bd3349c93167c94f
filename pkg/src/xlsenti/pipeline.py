"""Pipeline stages (ingest, preprocess, train, evaluate) over a run config.

Each stage reads the previous stage's artifacts from ``cfg.output_dir``, so
the CLI verbs can run as separate processes.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import logging
import os
import shutil
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import yaml

from . import __version__
from .config import ConfigError, RunConfig
from .corpus import EXPORT_MAPPING, LABELS, LabeledInstance, SentimentLabel, LevelStats, audit_likert, dataset_stats, load_corpus, write_corpus
from .errors import ConfigurationError, ReconciliationError, StateError
from .evaluate import ClassScores, MetricsReport, evaluate, majority_baseline, write_predictions, write_report
from .model import load_checkpoint, predict, save_checkpoint
from .preprocess import DatasetSplit, Removal, apply_manifest, clean, read_split_manifest, stratified_split, write_split_manifest
from .trainer import SCENARIO_LABELS, RunHistory, Scenario, TrainConfig, build_model_for, train_scenario

log = logging.getLogger(__name__)

STAT_FIELDS = ("examples", "positive", "negative", "neutral")
TEST_SET_ORDER = ("sl_document", "sl_paragraph", "sl_sentence", "hr_document")
BASELINE_ROW = "Majority class"


def sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(obj, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def stats_table(stats: dict[str, LevelStats]) -> str:
    lines = ["pool\texamples\tpositive\tnegative\tneutral"]
    for key, s in stats.items():
        lines.append(f"{key}\t{s.examples}\t{s.positive}\t{s.negative}\t{s.neutral}")
    return "\n".join(lines) + "\n"


# -- ingest -----------------------------------------------------------------

def ingest(cfg: RunConfig) -> dict[str, list[LabeledInstance]]:
    """Load every configured corpus, in config order."""
    out = {}
    for i, entry in enumerate(cfg.corpora):
        if not entry.path.is_file():
            raise ConfigError(f"corpora[{i}].path", f"file not found: {entry.path}")
        instances = load_corpus(entry.path, entry.language, entry.level, entry.columns)
        if cfg.likert_audit:
            mismatches = audit_likert(instances, cfg.likert_low, cfg.likert_high)
            if mismatches:
                log.warning("%s: %d source labels disagree with the Likert mapping", entry.key, len(mismatches))
        out[entry.key] = instances
    return out


def run_ingest(cfg: RunConfig) -> dict[str, LevelStats]:
    corpora = ingest(cfg)
    stats = {key: dataset_stats(instances) for key, instances in corpora.items()}
    out = cfg.output_dir / "ingest"
    _dump_json({k: s.as_dict() for k, s in stats.items()}, out / "stats.json")
    (out / "stats.tsv").write_text(stats_table(stats), encoding="utf-8")
    return stats


# -- preprocess --------------------------------------------------------------

@dataclass
class PreprocessResult:
    stats: dict[str, LevelStats]
    splits: dict[str, DatasetSplit]
    removals: dict[str, list[Removal]]
    deltas: dict[str, int] | None
    manifest_path: Path


def reconcile(stats: dict[str, LevelStats], expected: dict[str, dict[str, int]]) -> dict[str, int]:
    """``pool.field -> observed - expected`` for every expected count."""
    deltas = {}
    for pool, counts in expected.items():
        observed = stats.get(pool)
        for name in STAT_FIELDS:
            if name not in counts:
                continue
            value = getattr(observed, name) if observed is not None else 0
            deltas[f"{pool}.{name}"] = value - int(counts[name])
    return deltas


def reconciliation_table(stats, expected, deltas) -> str:
    lines = ["pool\tfield\texpected\tobserved\tdelta"]
    for key, delta in deltas.items():
        pool, name = key.rsplit(".", 1)
        lines.append(f"{pool}\t{name}\t{expected[pool][name]}\t{int(expected[pool][name]) + delta}\t{delta:+d}")
    return "\n".join(lines) + "\n"


def preprocess_dir(cfg: RunConfig) -> Path:
    return cfg.output_dir / "preprocess"


def run_preprocess(cfg: RunConfig, strict: bool = False) -> PreprocessResult:
    corpora = ingest(cfg)
    out = preprocess_dir(cfg)
    stats, splits, removals = {}, {}, {}
    for key, instances in corpora.items():
        dropped: list[Removal] = []
        cleaned = clean(instances, casefold=cfg.casefold, removals=dropped)
        stats[key] = dataset_stats(cleaned)
        removals[key] = dropped
        write_corpus(cleaned, out / "pools" / f"{key}.csv")
        splits[key] = stratified_split(cleaned, cfg.split)

    manifest_path = write_split_manifest(splits, out / "split_manifest.tsv")
    _dump_json({k: s.as_dict() for k, s in stats.items()}, out / "stats.json")
    (out / "stats.tsv").write_text(stats_table(stats), encoding="utf-8")
    with (out / "removals.tsv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["pool", "id", "duplicate_of", "reason"])
        for key in sorted(removals):
            for r in removals[key]:
                writer.writerow([key, r.instance.id, r.kept_id, r.reason])

    deltas = None
    if cfg.expected:
        deltas = reconcile(stats, cfg.expected)
        (out / "reconciliation.tsv").write_text(reconciliation_table(stats, cfg.expected, deltas), encoding="utf-8")
        if strict and any(deltas.values()):
            raise ReconciliationError({k: v for k, v in deltas.items() if v})
    return PreprocessResult(stats, splits, removals, deltas, manifest_path)


def load_prepared(work_dir: str | Path) -> dict[str, DatasetSplit]:
    """Rebuild the splits written by :func:`run_preprocess`."""
    pre = Path(work_dir) / "preprocess"
    manifest = pre / "split_manifest.tsv"
    if not manifest.is_file():
        raise StateError(f"no split manifest at {manifest}; run the preprocess step first")
    assignment = read_split_manifest(manifest)
    data = {}
    for pool, ids in assignment.items():
        language, level = pool.split("_", 1)
        instances = load_corpus(pre / "pools" / f"{pool}.csv", language, level, EXPORT_MAPPING)
        data[pool] = apply_manifest(instances, ids)
    return data


# -- train -------------------------------------------------------------------

@dataclass
class RunManifest:
    config: dict
    corpus_digests: dict[str, str]
    seed: int
    scenario: str
    toolkit_version: str = __version__
    started: str = ""
    finished: str = ""
    artifacts: dict[str, str] = field(default_factory=dict)
    training_instances_by_language: dict[str, int] = field(default_factory=dict)
    preprocess_dir: str = ""

    def add_artifact(self, run_dir: Path, path: Path):
        self.artifacts[os.path.relpath(path, run_dir)] = sha256(path)

    def write(self, path: Path) -> Path:
        return _dump_json(asdict(self), path)

    @classmethod
    def read(cls, path: str | Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def verify_manifest(run_dir: str | Path) -> list[str]:
    """Problems found: missing artifacts or digest mismatches (empty list = complete)."""
    run_dir = Path(run_dir)
    manifest = RunManifest.read(run_dir / "manifest.json")
    problems = []
    for rel, digest in manifest.artifacts.items():
        p = run_dir / rel
        if not p.is_file():
            problems.append(f"missing {rel}")
        elif sha256(p) != digest:
            problems.append(f"digest mismatch {rel}")
    return problems


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def default_run_dir(cfg: RunConfig, scenario: Scenario, seed: int) -> Path:
    return cfg.output_dir / "runs" / f"{scenario.value}-seed{seed}"


def run_training(cfg: RunConfig, scenario: Scenario, seed: int | None = None, run_dir: Path | None = None, encoder_kind: str | None = None) -> tuple[Path, RunHistory]:
    train_cfg = cfg.train if seed is None else TrainConfig(**{**asdict(cfg.train), "seed": seed})
    spec = cfg.encoder
    if encoder_kind is not None and encoder_kind != spec.kind:
        spec = type(spec)(**{**asdict(spec), "kind": encoder_kind})
    run_dir = Path(run_dir) if run_dir is not None else default_run_dir(cfg, scenario, train_cfg.seed)
    if run_dir.exists():
        shutil.rmtree(run_dir)
    run_dir.mkdir(parents=True)

    data = load_prepared(cfg.output_dir)
    manifest = RunManifest(
        config={**cfg.raw, "scenario": scenario.value, "train": asdict(train_cfg), "encoder": asdict(spec)},
        corpus_digests={c.key: sha256(c.path) for c in cfg.corpora if c.path.is_file()},
        seed=train_cfg.seed,
        scenario=scenario.value,
        started=_now(),
        preprocess_dir=str(preprocess_dir(cfg).resolve()),
    )
    model = build_model_for(scenario, spec, train_cfg)
    model, history = train_scenario(scenario, data, model, train_cfg, checkpoint_dir=run_dir / "checkpoints")

    best = save_checkpoint(model, run_dir / "best.ckpt", extra={"scenario": scenario.value, "selected": history.selected})
    hist = history.write_jsonl(run_dir / "history.jsonl")
    snapshot = run_dir / "config.yaml"
    snapshot.write_text(yaml.safe_dump(manifest.config, sort_keys=True, allow_unicode=True), encoding="utf-8")
    split_manifest = preprocess_dir(cfg) / "split_manifest.tsv"
    for p in [best, hist, snapshot, split_manifest, *sorted((run_dir / "checkpoints").glob("*.ckpt"))]:
        manifest.add_artifact(run_dir, p)
    manifest.training_instances_by_language = {
        lang: history.language_count(lang) for lang in ("sl", "hr")
    }
    manifest.finished = _now()
    manifest.write(run_dir / "manifest.json")
    return run_dir, history


# -- evaluate ----------------------------------------------------------------

def evaluate_run(run_dir: str | Path, test_sets: Sequence[str] | None = None) -> dict[tuple[str, str], MetricsReport]:
    run_dir = Path(run_dir)
    ckpt = run_dir / "best.ckpt"
    if not ckpt.is_file():
        raise StateError(f"no selected checkpoint in {run_dir}")
    manifest = RunManifest.read(run_dir / "manifest.json")
    data = load_prepared(Path(manifest.preprocess_dir).parent)
    if test_sets is None:
        test_sets = [ts for ts in TEST_SET_ORDER if ts in data]
    for ts in test_sets:
        if ts not in data:
            raise ConfigurationError(f"unknown test set {ts!r}; available: {', '.join(sorted(data))}")
    model = load_checkpoint(ckpt)
    scenario = Scenario(manifest.scenario)
    row = SCENARIO_LABELS[scenario]

    reports = {}
    for ts in test_sets:
        split = data[ts]
        if not split.test:
            continue
        gold = [i.label for i in split.test]
        reports[(BASELINE_ROW, ts)] = majority_baseline([i.label for i in split.train], gold)
        level = ts.split("_", 1)[1]
        if level not in model.heads:
            log.info("%s has no %s head; leaving %s blank", scenario.value, level, ts)
            continue
        probs = predict(model, [i.text for i in split.test], level)
        write_predictions(run_dir / "eval" / "predictions" / f"{ts}.tsv", [i.id for i in split.test], gold, probs.numpy())
        pred = [LABELS[j] for j in probs.argmax(dim=1).tolist()]
        reports[(row, ts)] = evaluate(gold, pred)

    ordered = [ts for ts in TEST_SET_ORDER if ts in test_sets] + [ts for ts in test_sets if ts not in TEST_SET_ORDER]
    table, structured = write_report(reports, run_dir / "eval", test_sets=ordered, row_order=[BASELINE_ROW, row])
    for p in [table, structured, *sorted((run_dir / "eval" / "predictions").glob("*.tsv"))]:
        manifest.add_artifact(run_dir, p)
    manifest.write(run_dir / "manifest.json")
    return reports


def collect_reports(run_dirs: Sequence[str | Path]) -> dict[tuple[str, str], MetricsReport]:
    """Merge the ``eval/report.json`` files of several runs into one mapping."""
    merged = {}
    for rd in run_dirs:
        path = Path(rd) / "eval" / "report.json"
        if not path.is_file():
            raise StateError(f"{rd} has not been evaluated yet")
        for rec in json.loads(path.read_text(encoding="utf-8")):
            per_class = {SentimentLabel(k): ClassScores(v["precision"], v["recall"], v["f1"]) for k, v in rec["per_class"].items()}
            support = {SentimentLabel(k): v["support"] for k, v in rec["per_class"].items()}
            merged[(rec["scenario"], rec["test_set"])] = MetricsReport(
                per_class, support, rec["macro"]["precision"], rec["macro"]["recall"], rec["macro"]["f1"],
            )
    return merged


def report_rows() -> list[str]:
    return [BASELINE_ROW] + [SCENARIO_LABELS[s] for s in (
        Scenario.SL_STL_ZERO_HR, Scenario.SL_MTL_ZERO_HR, Scenario.HR_STL, Scenario.SLHR_STL, Scenario.SLHR_MTL,
    )]
