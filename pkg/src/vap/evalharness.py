"""Dataset loading, grading, run reports, latency measurement, comparisons.

Two accuracy conventions coexist: paper mode drops blocked/unparseable
responses from the denominator; strict mode counts them as wrong. Reports
carry both, plus the denominators, so numbers stay auditable.
"""

from __future__ import annotations

import json
import re
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    ItemMismatch,
    OptionOutOfRange,
    SchemaViolation,
    TaskFailed,
)
from .vlmclient import ParsedAnswer


@dataclass(frozen=True)
class QAItem:
    item_id: str
    video_id: str
    question: str
    options: tuple[str, ...]
    answer: int | frozenset[int] | str
    qtype: str | None = None


@dataclass(frozen=True)
class DatasetSchema:
    schema_id: str
    option_arity: int  # exact count; -1 variable (>=1); 0 none
    answer_kind: str   # "choice" | "choice_set" | "text"
    protocol: str      # parse protocol for model output
    template_id: str


SCHEMAS: dict[str, DatasetSchema] = {
    s.schema_id: s for s in (
        DatasetSchema("egoschema", 5, "choice", "egoschema", "egoschema"),
        DatasetSchema("nextqa", 5, "choice", "nextqa", "nextqa_frames"),
        DatasetSchema("intentqa", 5, "choice", "nextqa", "nextqa_frames"),
        DatasetSchema("synthetic", 5, "choice", "egoschema", "egoschema"),
        DatasetSchema("anet", 0, "text", "word", "anet_word"),
        DatasetSchema("clevrer_mcq", -1, "choice_set", "clevrer_mcq", "clevrer_mcq"),
        DatasetSchema("clevrer_binary", 0, "text", "word", "clevrer_binary"),
    )
}


def _parse_item(obj: dict, schema: DatasetSchema, line_no: int) -> QAItem:
    def need(fieldname, types):
        if fieldname not in obj:
            raise SchemaViolation("missing field", line_no, fieldname)
        v = obj[fieldname]
        if not isinstance(v, types):
            raise SchemaViolation(
                f"wrong type {type(v).__name__}", line_no, fieldname)
        return v

    item_id = need("item_id", str)
    video_id = need("video_id", str)
    question = need("question", str)

    raw_options = obj.get("options", [])
    if not isinstance(raw_options, list) or not all(isinstance(o, str) for o in raw_options):
        raise SchemaViolation("options must be a list of strings", line_no, "options")
    if schema.option_arity >= 0 and len(raw_options) != schema.option_arity:
        raise SchemaViolation(
            f"expected {schema.option_arity} options, got {len(raw_options)}",
            line_no, "options")
    if schema.option_arity == -1 and len(raw_options) < 1:
        raise SchemaViolation("expected at least one option", line_no, "options")

    raw_answer = obj.get("answer")
    if schema.answer_kind == "choice":
        if not isinstance(raw_answer, int) or isinstance(raw_answer, bool):
            raise SchemaViolation("answer must be an integer", line_no, "answer")
        if not 0 <= raw_answer < len(raw_options):
            raise SchemaViolation(
                f"answer {raw_answer} outside option range", line_no, "answer")
        answer: int | frozenset[int] | str = raw_answer
    elif schema.answer_kind == "choice_set":
        if (not isinstance(raw_answer, list)
                or not all(isinstance(a, int) and not isinstance(a, bool)
                           for a in raw_answer)):
            raise SchemaViolation("answer must be a list of integers", line_no, "answer")
        if any(not 0 <= a < len(raw_options) for a in raw_answer):
            raise SchemaViolation("answer indices outside option range", line_no, "answer")
        answer = frozenset(raw_answer)
    else:
        if not isinstance(raw_answer, str) or not raw_answer:
            raise SchemaViolation("answer must be a non-empty string", line_no, "answer")
        answer = raw_answer

    qtype = obj.get("qtype")
    if qtype is not None and not isinstance(qtype, str):
        raise SchemaViolation("qtype must be a string when present", line_no, "qtype")

    return QAItem(item_id=item_id, video_id=video_id, question=question,
                  options=tuple(raw_options), answer=answer, qtype=qtype)


def load_dataset(path: str | Path, schema_id: str) -> list[QAItem]:
    """Read a JSONL dataset, validating every line against the schema."""
    if schema_id not in SCHEMAS:
        raise SchemaViolation(f"unknown schema {schema_id!r}")
    schema = SCHEMAS[schema_id]
    items: list[QAItem] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaViolation(f"invalid JSON: {e.msg}", line_no) from e
            if not isinstance(obj, dict):
                raise SchemaViolation("line is not an object", line_no)
            item = _parse_item(obj, schema, line_no)
            if item.item_id in seen:
                raise SchemaViolation(
                    f"duplicate item_id {item.item_id!r}", line_no, "item_id")
            seen.add(item.item_id)
            items.append(item)
    return items


def item_to_json(item: QAItem) -> dict:
    answer = item.answer
    if isinstance(answer, frozenset):
        answer = sorted(answer)
    return {
        "item_id": item.item_id,
        "video_id": item.video_id,
        "question": item.question,
        "options": list(item.options),
        "answer": answer,
        "qtype": item.qtype,
    }


# --- grading --------------------------------------------------------------------


_ARTICLES = ("a ", "an ", "the ")


def _normalize_word(text: str) -> str:
    t = re.sub(r"[^a-z0-9' ]", " ", text.lower())
    t = " ".join(t.split())
    for art in _ARTICLES:
        if t.startswith(art):
            t = t[len(art):]
    return t


def score_multi_select(predicted: frozenset[int] | set[int],
                       truth: frozenset[int] | set[int],
                       option_count: int) -> tuple[int, bool]:
    """Per-option agreement count and whole-question correctness.

    Every option is graded on membership: predicted and truth agreeing that
    an option is in (or out of) the answer set scores one point. Selecting
    nothing still earns the true-negative points.
    """
    predicted = frozenset(predicted)
    truth = frozenset(truth)
    for s in predicted | truth:
        if not 0 <= s < option_count:
            raise OptionOutOfRange(f"option {s} outside [0, {option_count})")
    per_option = sum(1 for o in range(option_count)
                     if (o in predicted) == (o in truth))
    return per_option, predicted == truth


def grade(parsed: ParsedAnswer, item: QAItem) -> dict:
    """Compare one parsed answer with the item's ground truth."""
    out = {"correct": False, "per_option": None, "option_count": None,
           "no_answer": False}
    if parsed.kind == "single_choice":
        if not isinstance(item.answer, int):
            raise ItemMismatch(f"item {item.item_id} does not take a choice answer")
        out["correct"] = parsed.choice == item.answer
    elif parsed.kind == "multi_choice":
        if not isinstance(item.answer, frozenset):
            raise ItemMismatch(f"item {item.item_id} does not take a choice-set answer")
        per_option, q_correct = score_multi_select(
            parsed.choices, item.answer, len(item.options))
        out["correct"] = q_correct
        out["per_option"] = per_option
        out["option_count"] = len(item.options)
        out["no_answer"] = len(parsed.choices) == 0
    elif parsed.kind == "word":
        if not isinstance(item.answer, str):
            raise ItemMismatch(f"item {item.item_id} does not take a text answer")
        out["correct"] = _normalize_word(parsed.word or "") == _normalize_word(item.answer)
    else:
        raise ItemMismatch(f"unknown parsed answer kind {parsed.kind!r}")
    return out


# --- run records and reports -------------------------------------------------------


@dataclass(eq=False)
class ResultRecord:
    item_id: str
    parsed: ParsedAnswer | None
    drop_reason: str | None = None  # "blocked" | "unparseable" | None
    frames_used: int = 0
    wall_clock_s: float = 0.0

    def to_json(self) -> dict:
        parsed = None
        if self.parsed is not None:
            parsed = {
                "kind": self.parsed.kind,
                "choice": self.parsed.choice,
                "choices": sorted(self.parsed.choices),
                "word": self.parsed.word,
                "raw": self.parsed.raw,
            }
        return {
            "item_id": self.item_id,
            "parsed": parsed,
            "drop_reason": self.drop_reason,
            "frames_used": self.frames_used,
            "wall_clock_s": self.wall_clock_s,
        }

    @staticmethod
    def from_json(obj: dict) -> "ResultRecord":
        parsed = None
        if obj.get("parsed") is not None:
            p = obj["parsed"]
            parsed = ParsedAnswer(kind=p["kind"], choice=p.get("choice"),
                                  choices=frozenset(p.get("choices", [])),
                                  word=p.get("word"), raw=p.get("raw", ""))
        return ResultRecord(item_id=obj["item_id"], parsed=parsed,
                            drop_reason=obj.get("drop_reason"),
                            frames_used=int(obj.get("frames_used", 0)),
                            wall_clock_s=float(obj.get("wall_clock_s", 0.0)))


@dataclass(eq=False)
class RunReport:
    label: str
    total: int
    graded: int
    correct: int
    blocked: int
    unparseable: int
    accuracy: float          # paper mode: correct / graded
    accuracy_strict: float   # correct / total
    drop_rate: float
    accuracy_by_qtype: dict
    per_option_accuracy: float | None
    per_question_accuracy: float | None
    no_answer_rate: float | None
    mean_frames_per_question: float
    mean_latency_s: float
    denominators: dict

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "total": self.total,
            "graded": self.graded,
            "correct": self.correct,
            "blocked": self.blocked,
            "unparseable": self.unparseable,
            "accuracy": self.accuracy,
            "accuracy_strict": self.accuracy_strict,
            "drop_rate": self.drop_rate,
            "accuracy_by_qtype": self.accuracy_by_qtype,
            "per_option_accuracy": self.per_option_accuracy,
            "per_question_accuracy": self.per_question_accuracy,
            "no_answer_rate": self.no_answer_rate,
            "mean_frames_per_question": self.mean_frames_per_question,
            "mean_latency_s": self.mean_latency_s,
            "denominators": self.denominators,
        }

    @staticmethod
    def from_dict(obj: dict) -> "RunReport":
        return RunReport(**obj)

    def render_text(self) -> str:
        lines = [
            f"run: {self.label}",
            f"items: {self.total}  graded: {self.graded}  correct: {self.correct}",
            f"accuracy: {self.accuracy:.4f}  strict: {self.accuracy_strict:.4f}  "
            f"drop_rate: {self.drop_rate:.4f}",
            f"blocked: {self.blocked}  unparseable: {self.unparseable}",
            f"mean_frames_per_question: {self.mean_frames_per_question:.2f}  "
            f"mean_latency_s: {self.mean_latency_s:.3f}",
        ]
        if self.per_option_accuracy is not None:
            lines.append(
                f"per_option: {self.per_option_accuracy:.4f}  "
                f"per_question: {self.per_question_accuracy:.4f}  "
                f"no_answer_rate: {self.no_answer_rate:.4f}")
        for qtype in sorted(self.accuracy_by_qtype):
            acc = self.accuracy_by_qtype[qtype]
            lines.append(f"  [{qtype}] accuracy: {acc:.4f}")
        return "\n".join(lines)


def evaluate_run(records: list[ResultRecord], items: list[QAItem],
                 label: str = "run") -> RunReport:
    """Aggregate one record per item into a report.

    Records must map one-to-one onto items; aggregation order is
    deterministic regardless of input order.
    """
    by_id = {it.item_id: it for it in items}
    if len(by_id) != len(items):
        raise ItemMismatch("duplicate item_ids in dataset")
    seen: set[str] = set()
    for r in records:
        if r.item_id not in by_id:
            raise ItemMismatch(f"record for unknown item {r.item_id!r}")
        if r.item_id in seen:
            raise ItemMismatch(f"duplicate record for item {r.item_id!r}")
        seen.add(r.item_id)
    if len(records) != len(items):
        missing = sorted(set(by_id) - seen)[:3]
        raise ItemMismatch(
            f"{len(records)} records for {len(items)} items (missing e.g. {missing})")

    ordered = sorted(records, key=lambda r: r.item_id)
    total = len(ordered)
    blocked = unparseable = correct = 0
    qtype_totals: dict[str, list[int]] = {}
    option_points = option_total = 0
    multi_graded = multi_correct = no_answer = 0
    any_multi = False
    frames_sum = 0
    latency_sum = 0.0

    for rec in ordered:
        item = by_id[rec.item_id]
        frames_sum += rec.frames_used
        latency_sum += rec.wall_clock_s
        qtype = item.qtype or "untyped"
        bucket = qtype_totals.setdefault(qtype, [0, 0, 0])  # correct, graded, total
        bucket[2] += 1
        if rec.drop_reason is not None:
            if rec.drop_reason == "blocked":
                blocked += 1
            elif rec.drop_reason == "unparseable":
                unparseable += 1
            else:
                raise ItemMismatch(f"unknown drop reason {rec.drop_reason!r}")
            continue
        if rec.parsed is None:
            raise ItemMismatch(f"record {rec.item_id} has neither answer nor drop reason")
        g = grade(rec.parsed, item)
        bucket[1] += 1
        if g["correct"]:
            correct += 1
            bucket[0] += 1
        if g["per_option"] is not None:
            any_multi = True
            option_points += g["per_option"]
            option_total += g["option_count"]
            multi_graded += 1
            if g["correct"]:
                multi_correct += 1
            if g["no_answer"]:
                no_answer += 1

    graded = total - blocked - unparseable
    report = RunReport(
        label=label,
        total=total,
        graded=graded,
        correct=correct,
        blocked=blocked,
        unparseable=unparseable,
        accuracy=correct / graded if graded else 0.0,
        accuracy_strict=correct / total if total else 0.0,
        drop_rate=(blocked + unparseable) / total if total else 0.0,
        accuracy_by_qtype={
            q: (c / g if g else 0.0) for q, (c, g, _t) in sorted(qtype_totals.items())
        },
        per_option_accuracy=(option_points / option_total) if any_multi else None,
        per_question_accuracy=(multi_correct / multi_graded) if any_multi else None,
        no_answer_rate=(no_answer / multi_graded) if any_multi else None,
        mean_frames_per_question=frames_sum / total if total else 0.0,
        mean_latency_s=latency_sum / total if total else 0.0,
        denominators={
            "paper": graded,
            "strict": total,
            "multi_select_options": option_total if any_multi else 0,
            "multi_select_questions": multi_graded if any_multi else 0,
        },
    )
    return report


# --- latency ---------------------------------------------------------------------


@dataclass(frozen=True)
class LatencyMeasurement:
    mean_s: float
    runs: tuple[float, ...]


def measure_latency(task, repeats: int = 5) -> LatencyMeasurement:
    """Run a task sequentially ``repeats`` times and report mean wall time.

    Raw per-run times are kept alongside the mean. Any exception from the
    task aborts the measurement.
    """
    if repeats < 1:
        raise TaskFailed(f"repeats must be >= 1, got {repeats}")
    runs: list[float] = []
    for i in range(repeats):
        start = time.perf_counter()
        try:
            task()
        except Exception as e:
            raise TaskFailed(f"task raised on run {i + 1}/{repeats}: {e}") from e
        runs.append(time.perf_counter() - start)
    return LatencyMeasurement(mean_s=statistics.fmean(runs), runs=tuple(runs))


# --- run comparison -----------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    baseline_label: str
    candidate_label: str
    baseline_accuracy_pct: float
    candidate_accuracy_pct: float
    baseline_latency_s: float
    candidate_latency_s: float
    delta_accuracy_pts: float
    delta_latency_s: float


@dataclass(frozen=True)
class RunComparison:
    mode: str
    rows: tuple[ComparisonRow, ...]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "rows": [
                {
                    "baseline": r.baseline_label,
                    "candidate": r.candidate_label,
                    "baseline_accuracy_pct": r.baseline_accuracy_pct,
                    "candidate_accuracy_pct": r.candidate_accuracy_pct,
                    "baseline_latency_s": r.baseline_latency_s,
                    "candidate_latency_s": r.candidate_latency_s,
                    "delta_accuracy_pts": r.delta_accuracy_pts,
                    "delta_latency_s": r.delta_latency_s,
                }
                for r in self.rows
            ],
        }

    def to_text(self) -> str:
        header = (f"mode: {self.mode}\n"
                  f"{'baseline':<24}{'candidate':<24}"
                  f"{'acc%':>8}{'acc%':>8}{'lat(s)':>9}{'lat(s)':>9}"
                  f"{'d_acc':>8}{'d_lat':>8}")
        lines = [header]
        for r in self.rows:
            lines.append(
                f"{r.baseline_label:<24}{r.candidate_label:<24}"
                f"{r.baseline_accuracy_pct:>8.1f}{r.candidate_accuracy_pct:>8.1f}"
                f"{r.baseline_latency_s:>9.1f}{r.candidate_latency_s:>9.1f}"
                f"{r.delta_accuracy_pts:>+8.1f}{r.delta_latency_s:>+8.1f}")
        return "\n".join(lines)


def _as_list(x) -> list:
    return list(x) if isinstance(x, (list, tuple)) else [x]


def _round1(x: float) -> float:
    return round(x, 1)


def compare_runs(baselines, candidates, mode: str) -> RunComparison:
    """Pair runs between two groups and report deltas at table precision.

    iso_compute pairs each baseline with the candidate of nearest latency and
    reports the accuracy delta; iso_accuracy pairs by nearest accuracy and
    reports the latency delta. All displayed values, including deltas, are
    rounded to one decimal (percentage points / seconds).
    """
    if mode not in ("iso_compute", "iso_accuracy"):
        raise ItemMismatch(f"mode must be iso_compute|iso_accuracy, got {mode!r}")
    base = _as_list(baselines)
    cand = _as_list(candidates)
    if not base or not cand:
        raise ItemMismatch("need at least one run on each side")

    rows = []
    for b in base:
        if mode == "iso_compute":
            c = min(cand, key=lambda r: (abs(r.mean_latency_s - b.mean_latency_s),
                                         r.label))
        else:
            c = min(cand, key=lambda r: (abs(r.accuracy - b.accuracy), r.label))
        b_acc = _round1(100.0 * b.accuracy)
        c_acc = _round1(100.0 * c.accuracy)
        b_lat = _round1(b.mean_latency_s)
        c_lat = _round1(c.mean_latency_s)
        rows.append(ComparisonRow(
            baseline_label=b.label,
            candidate_label=c.label,
            baseline_accuracy_pct=b_acc,
            candidate_accuracy_pct=c_acc,
            baseline_latency_s=b_lat,
            candidate_latency_s=c_lat,
            delta_accuracy_pts=_round1(c_acc - b_acc),
            delta_latency_s=_round1(c_lat - b_lat),
        ))
    return RunComparison(mode=mode, rows=tuple(rows))
