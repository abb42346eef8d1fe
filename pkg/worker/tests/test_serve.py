import json
import subprocess
import sys
import time
from pathlib import Path

import pytest

from leap_worker.serve import Unserializable, coerce_result

ECHO_FUNCS = '''
def identity(value=None):
    """Return the argument unchanged."""
    return value


def pair(x, y):
    return (float(x), float(y))


def noisy():
    print("diagnostic chatter")  # must go to stderr, not the frame stream
    return "quiet"


def big_tuple():
    return ((1, 2), (3, (4, 5)))


def unserializable():
    return object()
'''


class WorkerProc:
    """Drive a real worker process over its pipes."""

    def __init__(self, funcs_dir: Path):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "leap_worker", "--funcs", str(funcs_dir)],
            stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
        )
        self._next_id = 1

    def request(self, op, **fields):
        rid = self._next_id
        self._next_id += 1
        frame = {"id": rid, "op": op, **fields}
        self.proc.stdin.write(json.dumps(frame).encode() + b"\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        assert line.endswith(b"\n"), line
        response = json.loads(line)
        assert response["id"] == rid
        return response

    def send_raw(self, payload: bytes):
        self.proc.stdin.write(payload)
        self.proc.stdin.flush()
        return json.loads(self.proc.stdout.readline())

    def close(self, expect_code=0, shutdown=True):
        if shutdown and self.proc.poll() is None:
            try:
                self.request("shutdown")
            except Exception:
                pass
        code = self.proc.wait(timeout=10)
        stderr = self.proc.stderr.read()
        if expect_code is not None:
            assert code == expect_code, stderr
        return stderr


@pytest.fixture
def worker(tmp_path):
    funcs = tmp_path / "funcs"
    funcs.mkdir()
    (funcs / "echo.py").write_text(ECHO_FUNCS)
    w = WorkerProc(funcs)
    yield w
    if w.proc.poll() is None:
        w.proc.kill()
        w.proc.wait()


class TestServe:
    def test_describe_lists_exposed(self, worker):
        r = worker.request("describe")
        assert r["ok"]
        names = [d["name"] for d in r["result"]]
        assert names == ["big_tuple", "identity", "noisy", "pair", "unserializable"]
        worker.close()

    def test_invoke_identity(self, worker):
        r = worker.request("invoke", function="identity", args=[{"a": [1, 2]}], kwargs={})
        assert r["ok"] and r["result"] == {"a": [1, 2]}
        worker.close()

    def test_tuples_cross_as_lists(self, worker):
        r = worker.request("invoke", function="pair", args=[1, 2], kwargs={})
        assert r["result"] == [1.0, 2.0]
        r = worker.request("invoke", function="big_tuple", args=[], kwargs={})
        assert r["result"] == [[1.0, 2.0], [3.0, [4.0, 5.0]]]
        worker.close()

    def test_exception_becomes_error_frame(self, worker):
        r = worker.request("invoke", function="pair", args=["a", 0], kwargs={})
        assert not r["ok"]
        assert r["error"]["type"] == "ValueError"
        assert "Traceback" in r["error"]["detail"]
        worker.close()

    def test_unknown_function(self, worker):
        r = worker.request("invoke", function="missing", args=[], kwargs={})
        assert not r["ok"] and r["error"]["type"] == "UnknownFunction"
        worker.close()

    def test_unserializable_result(self, worker):
        r = worker.request("invoke", function="unserializable", args=[], kwargs={})
        assert not r["ok"] and r["error"]["type"] == "UnserializableResult"
        worker.close()

    def test_stdout_carries_only_frames(self, worker):
        r = worker.request("invoke", function="noisy", args=[], kwargs={})
        assert r["ok"] and r["result"] == "quiet"
        # a second request still parses: nothing non-frame got interleaved
        assert worker.request("describe")["ok"]
        stderr = worker.close()
        assert b"diagnostic chatter" in stderr

    def test_malformed_frame_answers_id_minus_one(self, worker):
        r = worker.send_raw(b"this is not json\n")
        assert r["id"] == -1
        assert not r["ok"]
        assert worker.request("describe")["ok"]  # loop continues
        worker.close()

    def test_shutdown_is_clean_exit_zero(self, worker):
        r = worker.request("shutdown")
        assert r["ok"] and r["result"] == "bye"
        assert worker.proc.wait(timeout=10) == 0

    def test_eof_exits_cleanly(self, worker):
        worker.proc.stdin.close()
        assert worker.proc.wait(timeout=10) == 0


class TestLoadFailureMode:
    def test_import_error_surfaces_in_describe_and_exit_code(self, tmp_path):
        funcs = tmp_path / "funcs"
        funcs.mkdir()
        (funcs / "broken.py").write_text("raise ValueError('bad import')\n")
        w = WorkerProc(funcs)
        r = w.request("describe")
        assert not r["ok"]
        assert r["error"]["type"] == "ImportError"
        assert "bad import" in r["error"]["message"]
        w.close(expect_code=1)


class TestCoercion:
    def test_scalars(self):
        assert coerce_result(3) == 3.0
        assert coerce_result(True) is True
        assert coerce_result(None) is None

    def test_non_finite_rejected(self):
        with pytest.raises(Unserializable):
            coerce_result(float("inf"))

    def test_numpy_like_objects(self):
        class FakeScalar:
            def item(self):
                return 7

        class FakeArray:
            def __len__(self):
                return 2

            def tolist(self):
                return [1, (2, 3)]

        assert coerce_result(FakeScalar()) == 7.0
        assert coerce_result(FakeArray()) == [1.0, [2.0, 3.0]]

    def test_depth_guard(self):
        v = [1.0]
        for _ in range(70):
            v = [v]
        with pytest.raises(Unserializable):
            coerce_result(v)
