from __future__ import annotations

import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import pytest

from hanf.errors import BudgetExceeded
from hanf.formulas import Formula, free_variables, parse_formulas, quantifier_rank
from hanf.hnf import HnfFormula, NormalizationConfig, NormalizationStats, normalize
from hanf.structure import Signature, Structure, parse_signature

DATA = Path(__file__).parent / "data"
sys.path.insert(0, str(Path(__file__).parent))

EU = Signature.of(E=2, U=1)
U_ONLY = Signature.of(U=1)
E_ONLY = Signature.of(E=2)


def build(sig: Signature, size: int, **facts) -> Structure:
    return Structure.build(sig, size, {k: list(v) for k, v in facts.items()})


@dataclass
class CorpusEntry:
    label: str
    formula: Formula

    @property
    def free(self) -> list[str]:
        return free_variables(self.formula)

    @property
    def rank(self) -> int:
        return quantifier_rank(self.formula)


def load_corpus() -> list[CorpusEntry]:
    text = (DATA / "corpus.fo").read_text()
    labels = re.findall(r"^# label: (\S+)", text, flags=re.M)
    sig = parse_signature((DATA / "EU.sig").read_text())
    formulas = parse_formulas(text, sig)
    assert len(labels) == len(formulas)
    return [CorpusEntry(lab, F) for lab, F in zip(labels, formulas)]


@dataclass
class Normalized:
    """Outcome of normalizing one corpus formula at one degree bound."""

    entry: CorpusEntry
    f: int
    hnf: HnfFormula | None
    error: BudgetExceeded | None
    stats: NormalizationStats
    seconds: float


@dataclass
class CorpusRuns:
    entries: list[CorpusEntry]
    _done: dict = field(default_factory=dict)

    def get(self, entry: CorpusEntry, f: int) -> Normalized:
        key = (entry.label, f)
        if key not in self._done:
            stats = NormalizationStats()
            t0 = time.perf_counter()
            try:
                hnf, err = normalize(entry.formula, NormalizationConfig(EU, f), stats), None
            except BudgetExceeded as exc:
                hnf, err = None, exc
            self._done[key] = Normalized(entry, f, hnf, err, stats, time.perf_counter() - t0)
        return self._done[key]


@pytest.fixture(scope="session")
def corpus_runs() -> CorpusRuns:
    return CorpusRuns(load_corpus())


# one pass/fail line per acceptance criterion, printed after the test summary
CRITERIA: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    CRITERIA[number] = (ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
