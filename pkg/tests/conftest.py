import shutil

import pytest

from xlsenti.corpus import Granularity, LabeledInstance, Language, SentimentLabel
from xlsenti.fixtures import fixture_dir

POS, NEG, NEU = SentimentLabel.POSITIVE, SentimentLabel.NEGATIVE, SentimentLabel.NEUTRAL


def make(labels, language="sl", level="document", prefix="i", texts=None):
    """Instances with the given labels and distinct texts."""
    out = []
    for k, label in enumerate(labels):
        text = texts[k] if texts is not None else f"text number {k}"
        out.append(LabeledInstance(f"{prefix}{k}", text, Language(language), Granularity(level), SentimentLabel(label)))
    return out


@pytest.fixture
def fixture_copy(tmp_path):
    """A writable copy of the shipped fixture corpus; returns its config path."""
    dst = tmp_path / "fixture"
    shutil.copytree(fixture_dir(), dst, ignore=shutil.ignore_patterns("work"))
    return dst / "config.yaml"


# -- acceptance summary ------------------------------------------------------
# Tests record a "criterion" user property; one PASS/FAIL/SKIP line per
# criterion is printed at the end of the run.

_criteria: dict[str, str] = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    name = props.get("criterion")
    if name is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        if _criteria.get(name) in (None, "PASS") or outcome == "FAIL":
            _criteria[name] = outcome


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _criteria.items():
        terminalreporter.write_line(f"{outcome:4}  {name}")
