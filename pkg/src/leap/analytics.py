"""Classroom insights derived purely from log records.

Every function here is a pure function of (records, config): recomputing
any of them from a dumped log reproduces the live endpoint's answer
byte-for-byte once canonically encoded. Nothing in this module talks to
the store, the bridge, or the clock (load_metrics takes "now" explicitly).
"""
from __future__ import annotations

from typing import Iterable, Optional

from .errors import InvalidWidth, MetricUnavailable, NoExperimentStart, UnknownQuiz
from .expr import compile_expression
from .labs import CompletionConfig, GroupConfig, ObjectiveConfig
from .protocol import LogRecord, canonical_encode, ms_to_iso

# synthetic record appended on every experiment state change
EXPERIMENT_STATE_FUNCTION = "experiment.state"
# server built-in callable; quiz answers are plain log records
QUIZ_SUBMIT_FUNCTION = "quiz.submit"

DEFAULT_GAP_THRESHOLD_S = 120.0

LEADERBOARD_METRICS = ("call_count", "min_f_value", "first_completion")


# --- trajectories -----------------------------------------------------------

def trajectories(records: Iterable[LogRecord], function: str,
                 gap_threshold_s: float = DEFAULT_GAP_THRESHOLD_S) -> list[dict]:
    """Per-student ok-call sequences, split into segments at idle gaps.

    Points carry the queried args (the visited point) and the result, in
    seq order; a pause longer than the threshold starts a new segment so
    two separate runs do not fuse into one curve.
    """
    by_student: dict[str, list[LogRecord]] = {}
    for r in sorted(records, key=lambda r: r.seq):
        if r.function != function or r.outcome.status != "ok":
            continue
        by_student.setdefault(r.student_id, []).append(r)

    out = []
    gap_ms = gap_threshold_s * 1000.0
    for student_id in sorted(by_student):
        segment_index = 0
        points: list[dict] = []
        previous_ts = None
        for r in by_student[student_id]:
            if previous_ts is not None and r.timestamp_ms - previous_ts > gap_ms:
                out.append(_trajectory(student_id, function, segment_index, points))
                segment_index += 1
                points = []
            points.append({
                "seq": r.seq,
                "timestamp": ms_to_iso(r.timestamp_ms),
                "args": list(r.args),
                "result": r.outcome.result,
            })
            previous_ts = r.timestamp_ms
        if points:
            out.append(_trajectory(student_id, function, segment_index, points))
    return out


def _trajectory(student_id: str, function: str, segment_index: int, points: list) -> dict:
    return {"student_id": student_id, "function": function,
            "segment_index": segment_index, "points": points}


# --- participation ----------------------------------------------------------

def participation(records: Iterable[LogRecord], bucket_width_s: float) -> list[dict]:
    """Complete tiling of [first record, last record] with call counts."""
    if bucket_width_s < 1:
        raise InvalidWidth("bucket width must be at least 1 second")
    records = sorted(records, key=lambda r: r.seq)
    if not records:
        return []
    width_ms = int(bucket_width_s * 1000)
    first = records[0].timestamp_ms
    last = records[-1].timestamp_ms
    buckets: list[dict] = []
    start = first
    while start <= last:
        buckets.append({"bucket_start": ms_to_iso(start),
                        "width_s": bucket_width_s, "per_student": {}})
        start += width_ms
    for r in records:
        index = (r.timestamp_ms - first) // width_ms
        per_student = buckets[index]["per_student"]
        per_student[r.student_id] = per_student.get(r.student_id, 0) + 1
    return buckets


# --- leaderboard and completion ----------------------------------------------

def _objective_value(objective: ObjectiveConfig, record: LogRecord) -> float:
    env: dict = {}
    for name, value in zip(objective.variables, record.args):
        env[name] = value
    for name in objective.variables:
        if name in record.kwargs:
            env[name] = record.kwargs[name]
    return compile_expression(objective.expression).evaluate(env)


def leaderboard(records: Iterable[LogRecord], metric: str,
                objective: Optional[ObjectiveConfig] = None,
                completion: Optional[CompletionConfig] = None,
                groups: tuple[GroupConfig, ...] = ()) -> list[dict]:
    """Dense-ranked entries, best first; ties share the smaller rank."""
    if metric not in LEADERBOARD_METRICS:
        raise MetricUnavailable(f"unknown metric {metric!r}")
    records = sorted(records, key=lambda r: r.seq)

    values: dict[str, float] = {}
    if metric == "call_count":
        for r in records:
            if r.function == EXPERIMENT_STATE_FUNCTION:
                continue
            values[r.student_id] = values.get(r.student_id, 0) + 1
        descending = True
    elif metric == "min_f_value":
        if objective is None:
            raise MetricUnavailable("lab manifest declares no objective")
        final: dict[str, LogRecord] = {}
        for r in records:
            if r.function == objective.function and r.outcome.status == "ok":
                final[r.student_id] = r  # last ok record wins
        for student_id, r in final.items():
            try:
                values[student_id] = _objective_value(objective, r)
            except Exception:
                continue  # non-numeric or missing args: not rankable
        descending = False
    else:  # first_completion
        if completion is None:
            raise MetricUnavailable("lab manifest declares no completion predicate")
        values = dict(completion_times(records, completion, objective))
        descending = False

    ordered = sorted(set(values.values()), reverse=descending)
    rank_of = {value: i + 1 for i, value in enumerate(ordered)}
    group_of: dict[str, str] = {}
    for g in groups:
        for member in g.members:
            group_of[member] = g.group_id
    entries = [
        {"student_id": s, "metric_name": metric, "value": float(v),
         "rank": rank_of[v], "group_id": group_of.get(s)}
        for s, v in values.items()
    ]
    entries.sort(key=lambda e: (e["rank"], e["student_id"]))
    return entries


def completion_times(records: Iterable[LogRecord], completion: CompletionConfig,
                     objective: Optional[ObjectiveConfig] = None) -> dict[str, float]:
    """Seconds from experiment start to each student's first matching record."""
    if completion.objective_max is not None and objective is None:
        raise MetricUnavailable("completion predicate needs the lab objective")
    records = sorted(records, key=lambda r: r.seq)
    starts = [
        r for r in records
        if r.function == EXPERIMENT_STATE_FUNCTION
        and len(r.args) >= 2 and r.args[1] == "running"
    ]
    if not starts:
        raise NoExperimentStart("experiment has never been started")

    done: dict[str, float] = {}
    for r in records:
        if r.student_id in done or r.function != completion.function:
            continue
        if r.outcome.status != "ok":
            continue
        if not _satisfies(r, completion, objective):
            continue
        start_ts = _start_ts_for(starts, r)
        if start_ts is None:
            continue
        done[r.student_id] = (r.timestamp_ms - start_ts) / 1000.0
    return done


def _satisfies(r: LogRecord, completion: CompletionConfig,
               objective: Optional[ObjectiveConfig]) -> bool:
    if completion.result_min is not None or completion.result_max is not None:
        result = r.outcome.result
        if not isinstance(result, (int, float)) or isinstance(result, bool):
            return False
        if completion.result_min is not None and result < completion.result_min:
            return False
        if completion.result_max is not None and result > completion.result_max:
            return False
    if completion.objective_max is not None:
        try:
            if _objective_value(objective, r) > completion.objective_max:
                return False
        except Exception:
            return False
    if completion.question_id is not None:
        submission = _quiz_submission(r)
        if submission is None or submission[1] != completion.question_id:
            return False
    return True


def _start_ts_for(starts: list[LogRecord], r: LogRecord) -> Optional[int]:
    best = None
    for s in starts:
        if s.timestamp_ms > r.timestamp_ms:
            continue
        if r.experiment_id is not None and s.experiment_id != r.experiment_id:
            continue
        if best is None or s.timestamp_ms > best:
            best = s.timestamp_ms
    if best is None:
        # e.g. a quiz answered while everything is stopped: measure from
        # the latest start that preceded it, whatever the experiment
        for s in starts:
            if s.timestamp_ms <= r.timestamp_ms and (best is None or s.timestamp_ms > best):
                best = s.timestamp_ms
    return best


# --- quizzes ------------------------------------------------------------------

def _quiz_submission(r: LogRecord):
    """(quiz_id, question_id, answer) from a quiz.submit record, if valid."""
    if r.function != QUIZ_SUBMIT_FUNCTION or r.outcome.status != "ok":
        return None
    args = list(r.args)
    kwargs = r.kwargs
    quiz_id = kwargs.get("quiz_id", args[0] if len(args) > 0 else None)
    question_id = kwargs.get("question_id", args[1] if len(args) > 1 else None)
    answer = kwargs.get("answer", args[2] if len(args) > 2 else None)
    if not isinstance(quiz_id, str) or not isinstance(question_id, str):
        return None
    return quiz_id, question_id, answer


def quiz_stats(records: Iterable[LogRecord], quiz_id: str,
               known_quizzes: Optional[Iterable[str]] = None) -> dict:
    """Latest answer per (student, question); respondents are distinct students."""
    if known_quizzes is not None and quiz_id not in set(known_quizzes):
        raise UnknownQuiz(quiz_id)
    latest: dict[tuple[str, str], object] = {}
    for r in sorted(records, key=lambda r: r.seq):
        submission = _quiz_submission(r)
        if submission is None or submission[0] != quiz_id:
            continue
        latest[(r.student_id, submission[1])] = submission[2]

    per_question: dict[str, dict[str, int]] = {}
    respondents = set()
    for (student_id, question_id), answer in latest.items():
        respondents.add(student_id)
        key = answer if isinstance(answer, str) else canonical_encode(answer).decode("utf-8")
        counts = per_question.setdefault(question_id, {})
        counts[key] = counts.get(key, 0) + 1
    return {"quiz_id": quiz_id, "respondents": len(respondents),
            "per_question": per_question}


# --- load ----------------------------------------------------------------------

def load_metrics(records: Iterable[LogRecord], window_s: float, now_ms: int) -> dict:
    """Call rate, latency, errors, and payload volume over a trailing window."""
    if window_s <= 0:
        raise InvalidWidth("window must be positive")
    low = now_ms - int(window_s * 1000)
    window = [r for r in records if low <= r.timestamp_ms <= now_ms]

    def summarize(group: list[LogRecord]) -> dict:
        n = len(group)
        errors = sum(1 for r in group if r.outcome.status != "ok")
        return {
            "count": n,
            "mean_duration_ms": (sum(r.outcome.duration_ms for r in group) / n) if n else 0.0,
            "error_rate": (errors / n) if n else 0.0,
        }

    total = summarize(window)
    payload_bytes = sum(len(canonical_encode(r.to_wire())) for r in window)
    per_function: dict[str, dict] = {}
    for r in window:
        per_function.setdefault(r.function, []).append(r)
    return {
        "window_s": window_s,
        "calls_per_second": total["count"] / window_s,
        "mean_duration_ms": total["mean_duration_ms"],
        "error_rate": total["error_rate"],
        "payload_bytes_per_second": payload_bytes / window_s,
        "per_function": {fn: summarize(group) for fn, group in sorted(per_function.items())},
    }
