import json
import sys
import threading
import time
from pathlib import Path

import pytest

from leap.bridge import WorkerHandle, WorkerSupervisor, default_runtimes
from leap.errors import (
    DescribeFailure,
    QueueFull,
    SpawnFailure,
    StartupTimeout,
    UnknownFunction,
    WorkerUnavailable,
)
from leap.labs import load_lab

FAKES = Path(__file__).parent / "fixtures" / "fakeworkers"


def make_echo_lab(tmp_path, name="echolab", parallelism=1):
    lab = tmp_path / name
    (lab / "funcs").mkdir(parents=True)
    (lab / "lab.json").write_text(json.dumps({
        "runtime": "echo-worker", "parallelism": parallelism,
    }))
    return load_lab(lab)


def make_handle(tmp_path, parallelism=1, **kwargs):
    manifest, layout = make_echo_lab(tmp_path, parallelism=parallelism)
    argv = default_runtimes()["echo-worker"]
    kwargs.setdefault("startup_timeout_ms", 10_000)
    return WorkerHandle(manifest, layout, argv, **kwargs)


@pytest.fixture
def handle(tmp_path):
    h = make_handle(tmp_path)
    yield h
    h.shutdown()


class TestDescribe:
    def test_lists_echo_functions(self, handle):
        names = [d.name for d in handle.describe()]
        assert names == ["boom", "counter", "die", "echo", "sleep_ms"]
        assert all(d.lab_id == "echolab" for d in handle.describe())

    def test_descriptors_cached(self, handle):
        first = handle.describe()
        assert handle.describe() == first

    def test_empty_funcs_dir_is_fine(self, tmp_path):
        # the echo runtime ignores the folder; an empty funcs/ is still a lab
        manifest, layout = make_echo_lab(tmp_path)
        assert (layout.funcs_dir).is_dir()


class TestInvoke:
    def test_echo_identity(self, handle):
        out = handle.invoke("echo", [[1.0, {"a": "b"}]], {})
        assert out.status == "ok"
        assert out.result == [1.0, {"a": "b"}]
        assert out.duration_ms >= 0

    def test_kwargs(self, handle):
        out = handle.invoke("echo", [], {"value": "hi"})
        assert out.result == "hi"

    def test_user_error_carries_worker_exception(self, handle):
        out = handle.invoke("boom", ["my message"], {})
        assert out.status == "user_error"
        assert out.error["type"] == "RuntimeError"
        assert out.error["message"] == "my message"
        assert "Traceback" in out.error["detail"]

    def test_user_error_then_more_calls(self, handle):
        handle.invoke("boom", [], {})
        assert handle.invoke("echo", [1.0], {}).status == "ok"

    def test_unknown_function_never_reaches_worker(self, handle):
        with pytest.raises(UnknownFunction):
            handle.invoke("_counter", [], {})
        with pytest.raises(UnknownFunction):
            handle.invoke("nope", [], {})

    def test_timeout_kills_and_self_heals(self, handle):
        t0 = time.perf_counter()
        out = handle.invoke("sleep_ms", [30_000], {}, timeout_ms=500)
        elapsed = time.perf_counter() - t0
        assert out.status == "timeout"
        assert elapsed < 2.5  # stated bound: timeout + 2000 ms
        healed = handle.invoke("echo", ["back"], {}, timeout_ms=10_000)
        assert healed.status == "ok"
        assert healed.result == "back"

    def test_crash_reports_and_self_heals(self, handle):
        out = handle.invoke("die", [], {})
        assert out.status == "worker_crash"
        healed = handle.invoke("echo", ["alive"], {})
        assert healed.status == "ok"

    def test_every_invoke_terminates_with_definite_outcome(self, handle):
        outcomes = []

        def call(fn, args, timeout):
            outcomes.append(handle.invoke(fn, args, {}, timeout_ms=timeout))

        threads = [
            threading.Thread(target=call, args=("sleep_ms", [5_000], 600)),
            threading.Thread(target=call, args=("echo", [1.0], 5_000)),
            threading.Thread(target=call, args=("sleep_ms", [50], 5_000)),
        ]
        t0 = time.perf_counter()
        for t in threads:
            t.start()
        for t in threads:
            t.join(timeout=10)
        assert time.perf_counter() - t0 < 8
        assert len(outcomes) == 3
        assert all(o.status in ("ok", "timeout", "worker_crash") for o in outcomes)


class TestSerialExecution:
    def test_counter_multiset_under_concurrency(self, tmp_path):
        handle = make_handle(tmp_path, parallelism=1)
        try:
            results = []
            lock = threading.Lock()

            def call():
                out = handle.invoke("counter", [], {}, timeout_ms=30_000)
                with lock:
                    results.append(out)

            threads = [threading.Thread(target=call) for _ in range(100)]
            for t in threads:
                t.start()
            for t in threads:
                t.join(timeout=60)
            assert all(o.status == "ok" for o in results)
            values = sorted(o.result for o in results)
            assert values == [float(i) for i in range(1, 101)]
        finally:
            handle.shutdown()

    def test_parallelism_runs_concurrently(self, tmp_path):
        handle = make_handle(tmp_path, parallelism=3)
        try:
            t0 = time.perf_counter()
            threads = [
                threading.Thread(target=handle.invoke, args=("sleep_ms", [400], {}))
                for _ in range(3)
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join(timeout=10)
            # three 400 ms sleeps across three workers beat serial 1200 ms
            assert time.perf_counter() - t0 < 1.1
        finally:
            handle.shutdown()

    def test_queue_full(self, tmp_path):
        handle = make_handle(tmp_path, parallelism=1, backlog_limit=2)
        try:
            threads = [
                threading.Thread(target=handle.invoke, args=("sleep_ms", [1200], {}))
                for _ in range(2)
            ]
            for t in threads:
                t.start()
            time.sleep(0.3)  # let both occupy the backlog
            with pytest.raises(QueueFull):
                handle.invoke("echo", [1.0], {})
            for t in threads:
                t.join(timeout=10)
        finally:
            handle.shutdown()


class TestStudentIdInjection:
    @pytest.fixture
    def sid_handle(self, tmp_path):
        manifest, layout = make_echo_lab(tmp_path)
        argv = [sys.executable, "-u", str(FAKES / "sidworker.py")]
        h = WorkerHandle(manifest, layout, argv, startup_timeout_ms=10_000)
        yield h
        h.shutdown()

    def test_param_hidden_from_descriptors(self, sid_handle):
        (d,) = sid_handle.describe()
        assert d.name == "whoami"
        assert [p.name for p in d.params] == []
        assert sid_handle.wants_student_id("whoami")

    def test_injected_from_session_identity(self, sid_handle):
        out = sid_handle.invoke("whoami", [], {}, student_id="s009")
        assert out.result == "s009"

    def test_not_injected_without_identity(self, sid_handle):
        out = sid_handle.invoke("whoami", [], {})
        assert out.result is None

    def test_private_descriptor_dropped(self, sid_handle):
        assert [d.name for d in sid_handle.describe()] == ["whoami"]


class TestSpawnFailures:
    def test_missing_executable(self, tmp_path):
        manifest, layout = make_echo_lab(tmp_path)
        h = WorkerHandle(manifest, layout, ["/nonexistent/runtime"])
        with pytest.raises(SpawnFailure):
            h.describe()

    def test_startup_timeout(self, tmp_path):
        manifest, layout = make_echo_lab(tmp_path)
        h = WorkerHandle(manifest, layout, [sys.executable, "-u", str(FAKES / "silent.py")],
                         startup_timeout_ms=500)
        t0 = time.perf_counter()
        with pytest.raises(StartupTimeout):
            h.describe()
        assert time.perf_counter() - t0 < 5
        h.shutdown()

    def test_garbage_output_is_describe_failure(self, tmp_path):
        manifest, layout = make_echo_lab(tmp_path)
        h = WorkerHandle(manifest, layout, [sys.executable, "-u", str(FAKES / "garbage.py")],
                         startup_timeout_ms=2_000)
        with pytest.raises((DescribeFailure, StartupTimeout)):
            h.describe()
        h.shutdown()


class TestShutdown:
    def test_shutdown_idempotent(self, tmp_path):
        handle = make_handle(tmp_path)
        assert handle.invoke("echo", [1.0], {}).status == "ok"
        handle.shutdown()
        handle.shutdown()
        with pytest.raises(WorkerUnavailable):
            handle.invoke("echo", [1.0], {})

    def test_force_kill_when_shutdown_ignored(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LEAP_ECHO_IGNORE_SHUTDOWN", "1")
        handle = make_handle(tmp_path)
        assert handle.invoke("echo", [1.0], {}).status == "ok"
        t0 = time.perf_counter()
        handle.shutdown()
        assert time.perf_counter() - t0 < 8  # graceful window is 5 s


class TestSupervisor:
    def test_one_handle_per_lab(self, tmp_path):
        sup = WorkerSupervisor()
        manifest, layout = make_echo_lab(tmp_path)
        h1 = sup.handle_for(manifest, layout)
        h2 = sup.handle_for(manifest, layout)
        assert h1 is h2
        sup.shutdown_all()

    def test_unknown_runtime(self, tmp_path):
        sup = WorkerSupervisor()
        manifest, layout = make_echo_lab(tmp_path)
        manifest.runtime = "cobol-worker"
        with pytest.raises(WorkerUnavailable):
            sup.handle_for(manifest, layout)

    def test_drop_shuts_down(self, tmp_path):
        sup = WorkerSupervisor()
        manifest, layout = make_echo_lab(tmp_path)
        handle = sup.handle_for(manifest, layout)
        handle.describe()
        sup.drop(manifest.lab_id)
        with pytest.raises(WorkerUnavailable):
            handle.invoke("echo", [], {})
