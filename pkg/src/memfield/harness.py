"""JSONL corpus ingestion and benchmark evaluation.

Corpus rows: {"session": str, "turn": int, "role": str, "text": str,
"time": number, "importance": optional number}.  Question rows:
{"question": str, "answer": str, "evidence_turns": [int], "type": str}.
Evidence turns point at corpus turn ids; the ingest report carries the
turn-id -> memory-id mapping that grading needs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field as dc_field
from typing import Iterable, Iterator

from .errors import IoFailure, MemfieldError, ParseError
from .memory_store import MemoryStore
from .retrieval import RetrievalWeights, evaluate, retrieve

DEFAULT_IMPORTANCE = 0.5


def _read_lines(path: str | os.PathLike) -> Iterator[tuple[int, str]]:
    """Yield (1-based line number, raw line) for every non-blank line."""
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {os.fspath(path)}: {exc}") from exc
    with fh:
        for n, line in enumerate(fh, start=1):
            if line.strip():
                yield n, line


def parse_json_line(n: int, raw: str) -> dict:
    try:
        obj = json.loads(raw)
    except ValueError as exc:
        raise ParseError(f"line {n}: invalid JSON ({exc})", n) from exc
    if not isinstance(obj, dict):
        raise ParseError(f"line {n}: expected an object, got {type(obj).__name__}", n)
    return obj


def iter_jsonl(path: str | os.PathLike) -> Iterator[tuple[int, dict]]:
    for n, raw in _read_lines(path):
        yield n, parse_json_line(n, raw)


def _parse_turn(n: int, row: dict) -> tuple[str, int, str, str, float, float]:
    try:
        session = row["session"]
        turn = row["turn"]
        role = row["role"]
        text = row["text"]
        when = row["time"]
    except KeyError as exc:
        raise ParseError(f"line {n}: missing key {exc.args[0]!r}", n) from exc
    if not isinstance(turn, int) or isinstance(turn, bool):
        raise ParseError(f"line {n}: 'turn' must be an integer", n)
    if not isinstance(text, str) or not isinstance(session, str) or not isinstance(role, str):
        raise ParseError(f"line {n}: 'session', 'role' and 'text' must be strings", n)
    if not isinstance(when, (int, float)) or isinstance(when, bool):
        raise ParseError(f"line {n}: 'time' must be a number", n)
    importance = row.get("importance", DEFAULT_IMPORTANCE)
    if not isinstance(importance, (int, float)) or isinstance(importance, bool):
        raise ParseError(f"line {n}: 'importance' must be a number", n)
    return session, turn, role, text, float(when), float(importance)


@dataclass
class IngestReport:
    ingested: int = 0
    skipped: list[tuple[int, str]] = dc_field(default_factory=list)
    id_by_turn: dict[int, int] = dc_field(default_factory=dict)


def ingest_turns(store: MemoryStore, source: str | os.PathLike | Iterable[tuple[int, dict]],
                 skip_errors: bool = False, sort_by_time: bool = True) -> IngestReport:
    """Inject corpus turns in timestamp order; maps turn ids to memory ids.

    With skip_errors, lines that fail to parse or inject (including
    per-line provider failures) are collected in the report instead of
    aborting the run.  Equal timestamps keep file order.
    """
    report = IngestReport()

    def fail(n: int, exc: MemfieldError) -> None:
        if not skip_errors:
            raise exc
        report.skipped.append((n, str(exc)))

    rows: list[tuple[int, dict]] = []
    if isinstance(source, (str, os.PathLike)):
        for n, raw in _read_lines(source):
            try:
                rows.append((n, parse_json_line(n, raw)))
            except ParseError as exc:
                fail(n, exc)
    else:
        rows = list(source)

    parsed = []
    for n, row in rows:
        try:
            parsed.append((n, _parse_turn(n, row)))
        except ParseError as exc:
            fail(n, exc)
    if sort_by_time:
        parsed.sort(key=lambda item: item[1][4])

    for n, (session, turn, _, text, when, importance) in parsed:
        try:
            if turn in report.id_by_turn:
                raise ParseError(f"line {n}: duplicate turn id {turn}", n)
            record = store.inject(text, importance=importance, when=when,
                                  session_id=session)
        except MemfieldError as exc:
            fail(n, exc)
            continue
        report.id_by_turn[turn] = record.id
        report.ingested += 1
    return report


def _parse_question(n: int, row: dict) -> dict:
    try:
        question = row["question"]
        answer = row["answer"]
        evidence = row["evidence_turns"]
        qtype = row["type"]
    except KeyError as exc:
        raise ParseError(f"line {n}: missing key {exc.args[0]!r}", n) from exc
    if not isinstance(question, str) or not isinstance(answer, str) or not isinstance(qtype, str):
        raise ParseError(f"line {n}: 'question', 'answer' and 'type' must be strings", n)
    if (not isinstance(evidence, list)
            or any(not isinstance(t, int) or isinstance(t, bool) for t in evidence)):
        raise ParseError(f"line {n}: 'evidence_turns' must be a list of integers", n)
    return {"question": question, "answer": answer,
            "evidence_turns": evidence, "type": qtype}


def load_questions(path: str | os.PathLike) -> list[dict]:
    return [_parse_question(n, row) for n, row in iter_jsonl(path)]


@dataclass(frozen=True)
class QuestionResult:
    question: str
    qtype: str
    retrieved_ids: tuple[int, ...]
    recall: float | None
    precision: float | None
    token_f1: float | None
    exact_match: bool | None
    missing_evidence: tuple[int, ...]


@dataclass
class BenchReport:
    mode: str
    k: int
    results: list[QuestionResult] = dc_field(default_factory=list)

    def aggregate(self) -> dict:
        def mean(values):
            vals = [v for v in values if v is not None]
            return sum(vals) / len(vals) if vals else None
        return {
            "mode": self.mode,
            "k": self.k,
            "n_questions": len(self.results),
            "mean_recall": mean(r.recall for r in self.results),
            "mean_precision": mean(r.precision for r in self.results),
            "mean_token_f1": mean(r.token_f1 for r in self.results),
            "exact_match_rate": mean(
                None if r.exact_match is None else float(r.exact_match)
                for r in self.results),
            "questions_with_missing_evidence": sum(
                1 for r in self.results if r.missing_evidence),
        }


def run_bench(store: MemoryStore, questions: list[dict], id_by_turn: dict[int, int],
              k: int = 5, weights: RetrievalWeights | None = None,
              mode: str = "field") -> BenchReport:
    """Grade every question against the store without mutating it.

    Evidence turns absent from the ingested corpus are reported per
    question rather than failing the run.  Access bookkeeping is left off
    so field and baseline modes see identical state.
    """
    if weights is None:
        weights = (RetrievalWeights.baseline() if mode == "baseline"
                   else getattr(store, "default_weights", None) or RetrievalWeights())
    report = BenchReport(mode=mode, k=k)
    for q in questions:
        missing = tuple(t for t in q["evidence_turns"] if t not in id_by_turn)
        evidence_ids = [id_by_turn[t] for t in q["evidence_turns"] if t in id_by_turn]
        results = retrieve(store, q["question"], k=k, weights=weights,
                           update_access=False)
        metrics = evaluate(results, evidence_ids, answer=q["answer"], store=store)
        report.results.append(QuestionResult(
            question=q["question"], qtype=q["type"],
            retrieved_ids=tuple(r.memory_id for r in results),
            recall=metrics.recall, precision=metrics.precision,
            token_f1=metrics.token_f1, exact_match=metrics.exact_match,
            missing_evidence=missing))
    return report
