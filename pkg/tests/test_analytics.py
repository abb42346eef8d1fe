import random

import pytest

from leap.analytics import (
    EXPERIMENT_STATE_FUNCTION,
    QUIZ_SUBMIT_FUNCTION,
    completion_times,
    leaderboard,
    load_metrics,
    participation,
    quiz_stats,
    trajectories,
)
from leap.errors import InvalidWidth, MetricUnavailable, NoExperimentStart, UnknownQuiz
from leap.labs import CompletionConfig, GroupConfig, ObjectiveConfig
from leap.protocol import CallOutcome, LogRecord

OBJECTIVE = ObjectiveConfig(
    function="gradient",
    expression="(((x-20)**2 + 10*20**2) * (5*(x+20)**2 + (y+20)**2))/100",
    variables=("x", "y"),
)

BASE_TS = 1_754_770_000_000


class RecordFactory:
    def __init__(self):
        self.seq = 0
        self.records = []

    def add(self, student, function, args=(), kwargs=None, status="ok", result=None,
            ts_offset_ms=None, duration=1.0, experiment_id="default"):
        self.seq += 1
        if status == "ok":
            outcome = CallOutcome.ok(result, duration_ms=duration)
        else:
            outcome = CallOutcome.failure(status, "Error", "synthetic", duration_ms=duration)
        ts = BASE_TS + (ts_offset_ms if ts_offset_ms is not None else self.seq * 100)
        rec = LogRecord(
            seq=self.seq, timestamp_ms=ts, lab_id="gd", student_id=student,
            function=function, args=tuple(args), kwargs=kwargs or {},
            outcome=outcome, experiment_id=experiment_id,
        )
        self.records.append(rec)
        return rec

    def start_experiment(self, ts_offset_ms=0, caller="prof"):
        return self.add(caller, EXPERIMENT_STATE_FUNCTION, ["default", "running"],
                        result="running", ts_offset_ms=ts_offset_ms)


class TestTrajectories:
    def test_four_students_three_hundred_points(self):
        f = RecordFactory()
        for i in range(300):
            for s in ("jenny", "josh", "amy", "ben"):
                f.add(s, "gradient", [float(i), float(i)], result=[1.0, 1.0])
        out = trajectories(f.records, "gradient")
        assert len(out) == 4
        assert all(len(t["points"]) == 300 for t in out)
        assert [t["student_id"] for t in out] == ["amy", "ben", "jenny", "josh"]

    def test_gap_splits_segments(self):
        f = RecordFactory()
        f.add("s1", "gradient", [0.0], result=[0.0], ts_offset_ms=0)
        f.add("s1", "gradient", [1.0], result=[0.0], ts_offset_ms=1_000)
        f.add("s1", "gradient", [2.0], result=[0.0], ts_offset_ms=601_000)  # 10 min later
        out = trajectories(f.records, "gradient")
        assert [t["segment_index"] for t in out] == [0, 1]
        assert len(out[0]["points"]) == 2
        assert len(out[1]["points"]) == 1

    def test_error_only_student_has_no_trajectory(self):
        f = RecordFactory()
        f.add("ok_kid", "gradient", [1.0], result=[0.0])
        f.add("sad_kid", "gradient", ["x"], status="user_error")
        out = trajectories(f.records, "gradient")
        assert [t["student_id"] for t in out] == ["ok_kid"]

    def test_seq_strictly_increasing_regardless_of_input_order(self):
        f = RecordFactory()
        for i in range(50):
            f.add("s1", "gradient", [float(i)], result=[0.0])
        shuffled = list(f.records)
        random.Random(3).shuffle(shuffled)
        out = trajectories(shuffled, "gradient")
        seqs = [p["seq"] for p in out[0]["points"]]
        assert seqs == sorted(seqs)
        assert out == trajectories(f.records, "gradient")

    def test_other_functions_excluded(self):
        f = RecordFactory()
        f.add("s1", "gradient", [1.0], result=[0.0])
        f.add("s1", "probe", [1.0], result=[0.0])
        out = trajectories(f.records, "gradient")
        assert len(out[0]["points"]) == 1


class TestParticipation:
    def test_empty_log(self):
        assert participation([], 60) == []

    def test_single_bucket_counts(self):
        f = RecordFactory()
        for i in range(10):
            f.add("s001", "gradient", [float(i)], ts_offset_ms=i * 1000)
        (bucket,) = participation(f.records, 60)
        assert bucket["per_student"] == {"s001": 10}

    def test_counts_sum_to_total_brute_force(self):
        f = RecordFactory()
        rng = random.Random(5)
        for i in range(200):
            f.add(rng.choice(["s1", "s2", "s3"]), "gradient", [1.0],
                  ts_offset_ms=rng.randint(0, 600_000))
        buckets = participation(f.records, 30)
        total = sum(sum(b["per_student"].values()) for b in buckets)
        assert total == len(f.records)

    def test_empty_buckets_included(self):
        f = RecordFactory()
        f.add("s1", "f", ts_offset_ms=0)
        f.add("s1", "f", ts_offset_ms=150_000)
        buckets = participation(f.records, 60)
        assert len(buckets) == 3
        assert buckets[1]["per_student"] == {}

    def test_invalid_width(self):
        with pytest.raises(InvalidWidth):
            participation([], 0.5)


class TestLeaderboard:
    def test_call_count_ranking(self):
        f = RecordFactory()
        for _ in range(5):
            f.add("s001", "gradient", [0.0])
        for _ in range(9):
            f.add("s002", "gradient", [0.0])
        entries = leaderboard(f.records, "call_count")
        assert entries[0]["student_id"] == "s002"
        assert entries[0]["rank"] == 1
        assert entries[0]["value"] == 9.0
        assert entries[1] == {"student_id": "s001", "metric_name": "call_count",
                              "value": 5.0, "rank": 2, "group_id": None}

    def test_min_f_value_uses_final_point(self):
        f = RecordFactory()
        # s001 wanders then finishes near the minimum; s002 parks at (5,5)
        f.add("s001", "gradient", [10.0, 5.0], result=[1.0, 1.0])
        f.add("s001", "gradient", [-20.01, -19.98], result=[0.0, 0.0])
        f.add("s002", "gradient", [5.0, 5.0], result=[1.0, 1.0])
        entries = leaderboard(f.records, "min_f_value", objective=OBJECTIVE)
        assert [e["student_id"] for e in entries] == ["s001", "s002"]
        assert entries[0]["value"] == pytest.approx(0.0504, rel=1e-2)
        assert entries[1]["value"] == pytest.approx(158437.5)

    def test_min_f_value_requires_objective(self):
        with pytest.raises(MetricUnavailable):
            leaderboard([], "min_f_value")

    def test_dense_ties(self):
        f = RecordFactory()
        for s in ("a", "b"):
            for _ in range(7):
                f.add(s, "f")
        for _ in range(3):
            f.add("c", "f")
        entries = leaderboard(f.records, "call_count")
        assert [(e["student_id"], e["rank"]) for e in entries] == [
            ("a", 1), ("b", 1), ("c", 2)]

    def test_groups_annotated(self):
        f = RecordFactory()
        f.add("s1", "f")
        f.add("s9", "f")
        groups = (GroupConfig("bisection", ("s1",)),)
        entries = leaderboard(f.records, "call_count", groups=groups)
        by_id = {e["student_id"]: e for e in entries}
        assert by_id["s1"]["group_id"] == "bisection"
        assert by_id["s9"]["group_id"] is None

    def test_rank_permutation_invariant(self):
        f = RecordFactory()
        rng = random.Random(11)
        for _ in range(120):
            f.add(f"s{rng.randint(1, 6)}", "f")
        entries = leaderboard(f.records, "call_count")
        shuffled = list(f.records)
        rng.shuffle(shuffled)
        assert leaderboard(shuffled, "call_count") == entries

    def test_experiment_state_records_not_counted(self):
        f = RecordFactory()
        f.start_experiment()
        f.add("s1", "f")
        entries = leaderboard(f.records, "call_count")
        assert [e["student_id"] for e in entries] == ["s1"]


class TestCompletionTimes:
    def test_first_satisfying_record_wins(self):
        f = RecordFactory()
        f.start_experiment(ts_offset_ms=0)
        f.add("s1", "gradient", [10.0, 5.0], result=[1.0, 1.0], ts_offset_ms=100_000)
        f.add("s1", "gradient", [-20.0, -20.0], result=[0.0, 0.0], ts_offset_ms=300_000)
        f.add("s1", "gradient", [-20.0, -20.0], result=[0.0, 0.0], ts_offset_ms=400_000)
        completion = CompletionConfig(function="gradient", objective_max=1.0)
        times = completion_times(f.records, completion, OBJECTIVE)
        assert times == {"s1": 300.0}

    def test_never_satisfying_student_absent(self):
        f = RecordFactory()
        f.start_experiment()
        f.add("s1", "gradient", [5.0, 5.0], result=[1.0, 1.0])
        completion = CompletionConfig(function="gradient", objective_max=1.0)
        assert completion_times(f.records, completion, OBJECTIVE) == {}

    def test_quiz_final_question_predicate(self):
        f = RecordFactory()
        f.start_experiment(ts_offset_ms=0)
        f.add("s1", QUIZ_SUBMIT_FUNCTION, ["q1", "q1", "A"], result=True, ts_offset_ms=60_000)
        f.add("s1", QUIZ_SUBMIT_FUNCTION, ["q1", "q2", "B"], result=True, ts_offset_ms=90_000)
        completion = CompletionConfig(function=QUIZ_SUBMIT_FUNCTION, question_id="q2")
        times = completion_times(f.records, completion)
        assert times == {"s1": 90.0}

    def test_no_experiment_start(self):
        f = RecordFactory()
        f.add("s1", "gradient", [0.0, 0.0], result=[1.0, 1.0])
        with pytest.raises(NoExperimentStart):
            completion_times(f.records, CompletionConfig(function="gradient"))

    def test_result_threshold(self):
        f = RecordFactory()
        f.start_experiment(ts_offset_ms=0)
        f.add("s1", "rootfind_f", [2.0], result=2.0, ts_offset_ms=10_000)
        f.add("s1", "rootfind_f", [1.4142], result=-0.00003836, ts_offset_ms=20_000)
        completion = CompletionConfig(function="rootfind_f", result_min=-0.001, result_max=0.001)
        assert completion_times(f.records, completion) == {"s1": 20.0}


class TestQuizStats:
    def test_counts_and_respondents(self):
        f = RecordFactory()
        f.add("s1", QUIZ_SUBMIT_FUNCTION, ["q1", "Q1", "A"], result=True)
        f.add("s2", QUIZ_SUBMIT_FUNCTION, ["q1", "Q1", "B"], result=True)
        f.add("s3", QUIZ_SUBMIT_FUNCTION, ["q1", "Q1", "A"], result=True)
        stats = quiz_stats(f.records, "q1")
        assert stats["per_question"] == {"Q1": {"A": 2, "B": 1}}
        assert stats["respondents"] == 3

    def test_latest_answer_wins(self):
        f = RecordFactory()
        f.add("s1", QUIZ_SUBMIT_FUNCTION, ["q1", "Q1", "B"], result=True)
        f.add("s1", QUIZ_SUBMIT_FUNCTION, ["q1", "Q1", "C"], result=True)
        stats = quiz_stats(f.records, "q1")
        assert stats["per_question"] == {"Q1": {"C": 1}}
        assert stats["respondents"] == 1

    def test_empty(self):
        stats = quiz_stats([], "q1")
        assert stats == {"quiz_id": "q1", "respondents": 0, "per_question": {}}

    def test_unknown_quiz(self):
        with pytest.raises(UnknownQuiz):
            quiz_stats([], "mystery", known_quizzes={"q1"})

    def test_kwargs_submissions_and_list_answers(self):
        f = RecordFactory()
        f.add("s1", QUIZ_SUBMIT_FUNCTION, [],
              kwargs={"quiz_id": "q1", "question_id": "Q1", "answer": ["A", "B"]}, result=True)
        stats = quiz_stats(f.records, "q1")
        assert stats["per_question"] == {"Q1": {'["A","B"]': 1}}

    def test_other_quiz_excluded(self):
        f = RecordFactory()
        f.add("s1", QUIZ_SUBMIT_FUNCTION, ["other", "Q1", "A"], result=True)
        assert quiz_stats(f.records, "q1")["respondents"] == 0


class TestLoadMetrics:
    def test_calls_per_second(self):
        f = RecordFactory()
        for i in range(120):
            f.add("s1", "gradient", [1.0], ts_offset_ms=i * 500)
        now = BASE_TS + 60_000
        metrics = load_metrics(f.records, 60, now_ms=now)
        assert metrics["calls_per_second"] == pytest.approx(120 / 60)

    def test_mean_duration(self):
        f = RecordFactory()
        for d in (10.0, 20.0, 30.0):
            f.add("s1", "f", duration=d, ts_offset_ms=0)
        metrics = load_metrics(f.records, 60, now_ms=BASE_TS + 1000)
        assert metrics["mean_duration_ms"] == 20.0

    def test_error_rate(self):
        f = RecordFactory()
        f.add("s1", "f", ts_offset_ms=0)
        f.add("s1", "f", status="user_error", ts_offset_ms=0)
        metrics = load_metrics(f.records, 60, now_ms=BASE_TS + 1000)
        assert metrics["error_rate"] == 0.5
        all_ok = load_metrics([f.records[0]], 60, now_ms=BASE_TS + 1000)
        assert all_ok["error_rate"] == 0.0

    def test_window_excludes_old_records(self):
        f = RecordFactory()
        f.add("s1", "f", ts_offset_ms=0)
        f.add("s1", "f", ts_offset_ms=500_000)
        metrics = load_metrics(f.records, 60, now_ms=BASE_TS + 500_000)
        assert metrics["per_function"]["f"]["count"] == 1
        assert metrics["payload_bytes_per_second"] > 0
