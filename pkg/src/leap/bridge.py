"""Supervises worker processes and multiplexes calls onto them.

One lab gets a pool of identical worker processes (pool size = manifest
parallelism; shared-state labs declare 1, which serializes execution).
Each process serves one call at a time; a call that outlives its budget
kills the process and a replacement is spawned in the background, so a
wedged instructor function can never take the classroom down with it.
"""
from __future__ import annotations

import logging
import queue
import subprocess
import sys
import threading
import time
from pathlib import Path
from typing import Optional

from .errors import (
    DescribeFailure,
    QueueFull,
    SpawnFailure,
    StartupTimeout,
    UnknownFunction,
    WorkerCrash,
    WorkerUnavailable,
)
from .labs import LabLayout, LabManifest
from .protocol import (
    FunctionDescriptor,
    ParamDescriptor,
    decode_frame,
    describe_frame,
    encode_frame,
    invoke_frame,
    shutdown_frame,
    CallOutcome,
)

logger = logging.getLogger(__name__)

DEFAULT_CALL_TIMEOUT_MS = 10_000
DEFAULT_STARTUP_TIMEOUT_MS = 15_000
DEFAULT_BACKLOG_LIMIT = 256
GRACEFUL_SHUTDOWN_S = 5.0
_MAX_LINE_BYTES = 32 * 1024 * 1024
_STDERR_TAIL_BYTES = 8 * 1024

STUDENT_ID_PARAM = "__student_id"

_CRASH = object()  # sentinel response for a process that died mid-call


def default_runtimes() -> dict[str, list[str]]:
    return {
        "python-worker": [sys.executable, "-u", "-m", "leap_worker"],
        "echo-worker": [sys.executable, "-u", "-m", "leap.echo_worker"],
    }


class _Pending:
    __slots__ = ("event", "response")

    def __init__(self):
        self.event = threading.Event()
        self.response = None


class WorkerProcess:
    """One OS process speaking newline-delimited frames on its stdio."""

    def __init__(self, lab_id: str, argv: list[str], funcs_dir: Path):
        self.lab_id = lab_id
        self.argv = list(argv) + ["--funcs", str(funcs_dir)]
        self._proc: Optional[subprocess.Popen] = None
        self._pending: dict[int, _Pending] = {}
        self._pending_lock = threading.Lock()
        self._write_lock = threading.Lock()
        self._next_id = 1
        self._stderr_tail = bytearray()
        self.dead = threading.Event()
        self.on_death = None  # set by the pool before start()

    # -- lifecycle -------------------------------------------------------

    def start(self, startup_timeout_s: float) -> list:
        """Spawn and handshake; returns the worker's raw describe payload."""
        try:
            self._proc = subprocess.Popen(
                self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
            )
        except OSError as e:
            raise SpawnFailure(f"lab {self.lab_id!r}: cannot launch worker: {e}") from None
        threading.Thread(target=self._read_stdout, daemon=True,
                         name=f"worker-out-{self.lab_id}").start()
        threading.Thread(target=self._read_stderr, daemon=True,
                         name=f"worker-err-{self.lab_id}").start()
        try:
            rid, pending = self._send(describe_frame(0))
        except WorkerCrash as e:
            raise SpawnFailure(f"lab {self.lab_id!r}: worker exited at startup: {e}") from None
        if not pending.event.wait(startup_timeout_s):
            self.kill()
            raise StartupTimeout(
                f"lab {self.lab_id!r}: worker did not answer describe within "
                f"{startup_timeout_s:.0f}s")
        response = pending.response
        if response is _CRASH:
            raise DescribeFailure(
                f"lab {self.lab_id!r}: worker died during startup: {self.stderr_tail()}")
        if not isinstance(response, dict) or not response.get("ok") \
                or not isinstance(response.get("result"), list):
            detail = response.get("error") if isinstance(response, dict) else response
            self.kill()
            raise DescribeFailure(f"lab {self.lab_id!r}: bad describe answer: {detail}")
        return response["result"]

    def alive(self) -> bool:
        return not self.dead.is_set() and self._proc is not None and self._proc.poll() is None

    def kill(self):
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                pass

    def graceful_shutdown(self):
        """Ask politely, then reap within the grace period or kill."""
        if self._proc is None:
            return
        try:
            self._send(shutdown_frame(0))
        except WorkerCrash:
            pass
        try:
            self._proc.wait(timeout=GRACEFUL_SHUTDOWN_S)
        except subprocess.TimeoutExpired:
            logger.warning("lab %s: worker ignored shutdown; killing", self.lab_id)
            self.kill()

    def stderr_tail(self) -> str:
        return self._stderr_tail.decode("utf-8", "replace").strip()

    # -- request plumbing --------------------------------------------------

    def _send(self, frame: dict) -> tuple[int, _Pending]:
        pending = _Pending()
        with self._write_lock:
            rid = self._next_id
            self._next_id += 1
            frame = dict(frame, id=rid)
            with self._pending_lock:
                if self.dead.is_set():
                    raise WorkerCrash(f"lab {self.lab_id!r}: worker is down")
                self._pending[rid] = pending
            try:
                self._proc.stdin.write(encode_frame(frame))
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError, ValueError):
                with self._pending_lock:
                    self._pending.pop(rid, None)
                raise WorkerCrash(
                    f"lab {self.lab_id!r}: worker pipe closed: {self.stderr_tail()}") from None
        return rid, pending

    def invoke(self, function: str, args: list, kwargs: dict) -> tuple[int, _Pending]:
        return self._send(invoke_frame(0, function, args, kwargs))

    def _read_stdout(self):
        stdout = self._proc.stdout
        while True:
            try:
                line = stdout.readline(_MAX_LINE_BYTES + 1)
            except (OSError, ValueError):
                break
            if not line:
                break
            if len(line) > _MAX_LINE_BYTES or not line.endswith(b"\n"):
                logger.error("lab %s: oversized or unterminated frame; killing worker",
                             self.lab_id)
                self.kill()
                break
            try:
                frame = decode_frame(line)
                rid = int(frame["id"])
            except Exception:
                logger.error("lab %s: worker wrote a non-frame line; killing worker",
                             self.lab_id)
                self.kill()
                break
            with self._pending_lock:
                pending = self._pending.pop(rid, None)
            if pending is None:
                logger.warning("lab %s: response for unknown request id %s", self.lab_id, rid)
                continue
            pending.response = frame
            pending.event.set()
        self._mark_dead()

    def _read_stderr(self):
        stderr = self._proc.stderr
        while True:
            try:
                chunk = stderr.read1(4096)
            except (OSError, ValueError):
                break
            if not chunk:
                break
            self._stderr_tail.extend(chunk)
            if len(self._stderr_tail) > _STDERR_TAIL_BYTES:
                del self._stderr_tail[:len(self._stderr_tail) - _STDERR_TAIL_BYTES]

    def _mark_dead(self):
        with self._pending_lock:
            if self.dead.is_set():
                return
            self.dead.set()
            pending = list(self._pending.values())
            self._pending.clear()
        for p in pending:
            p.response = _CRASH
            p.event.set()
        if self.on_death is not None:
            self.on_death(self)


class WorkerHandle:
    """Pool of worker processes for one lab, plus cached descriptors."""

    def __init__(self, manifest: LabManifest, layout: LabLayout, argv: list[str],
                 call_timeout_ms: int = DEFAULT_CALL_TIMEOUT_MS,
                 startup_timeout_ms: int = DEFAULT_STARTUP_TIMEOUT_MS,
                 backlog_limit: int = DEFAULT_BACKLOG_LIMIT):
        self.lab_id = manifest.lab_id
        self.manifest = manifest
        self.layout = layout
        self.argv = argv
        self.call_timeout_ms = manifest.call_timeout_ms or call_timeout_ms
        self.startup_timeout_s = startup_timeout_ms / 1000.0
        self.backlog_limit = backlog_limit

        self._lock = threading.Lock()
        self._started = False
        self._stopped = False
        self._procs: list[WorkerProcess] = []
        self._idle: queue.Queue[WorkerProcess] = queue.Queue()
        self._replacing: set[int] = set()
        self._waiting = 0
        self._spawn_error: Optional[str] = None

        self._descriptors: list[FunctionDescriptor] = []
        self._by_name: dict[str, FunctionDescriptor] = {}
        self._wants_student_id: set[str] = set()

    # -- startup -----------------------------------------------------------

    def _new_process(self) -> tuple[WorkerProcess, list]:
        proc = WorkerProcess(self.lab_id, self.argv, self.layout.funcs_dir)
        proc.on_death = self._on_proc_death
        raw = proc.start(self.startup_timeout_s)
        return proc, raw

    def ensure_started(self):
        with self._lock:
            if self._stopped:
                raise WorkerUnavailable(f"lab {self.lab_id!r} is shut down")
            if self._started and (self._procs or self._replacing):
                return
            first, raw = self._new_process()
            self._set_descriptors(raw)
            procs = [first]
            try:
                for _ in range(self.manifest.parallelism - 1):
                    proc, _ = self._new_process()
                    procs.append(proc)
            except Exception:
                for p in procs:
                    p.kill()
                raise
            self._procs = procs
            self._started = True
            self._spawn_error = None
            for p in procs:
                self._idle.put(p)

    def _set_descriptors(self, raw: list):
        descriptors = []
        wants = set()
        for entry in raw:
            if not isinstance(entry, dict) or not isinstance(entry.get("name"), str):
                raise DescribeFailure(f"lab {self.lab_id!r}: malformed descriptor {entry!r}")
            params = []
            for p in entry.get("params", []):
                param = ParamDescriptor.from_wire(p)
                if param.name == STUDENT_ID_PARAM:
                    wants.add(entry["name"])
                    continue
                params.append(param)
            try:
                descriptors.append(FunctionDescriptor(
                    name=entry["name"], params=tuple(params),
                    doc=entry.get("doc", "") or "", lab_id=self.lab_id,
                ))
            except Exception as e:
                # a worker must never expose private names; drop defensively
                logger.warning("lab %s: dropping descriptor %r (%s)",
                               self.lab_id, entry.get("name"), e)
        descriptors.sort(key=lambda d: d.name)
        self._descriptors = descriptors
        self._by_name = {d.name: d for d in descriptors}
        self._wants_student_id = wants

    # -- public operations ---------------------------------------------------

    def describe(self) -> list[FunctionDescriptor]:
        self.ensure_started()
        return list(self._descriptors)

    def has_function(self, function: str) -> bool:
        self.ensure_started()
        return function in self._by_name

    def wants_student_id(self, function: str) -> bool:
        return function in self._wants_student_id

    def invoke(self, function: str, args: list, kwargs: dict,
               timeout_ms: Optional[int] = None,
               student_id: Optional[str] = None) -> CallOutcome:
        self.ensure_started()
        if function not in self._by_name:
            raise UnknownFunction(f"lab {self.lab_id!r} exposes no function {function!r}")
        if student_id is not None and function in self._wants_student_id:
            kwargs = dict(kwargs, **{STUDENT_ID_PARAM: student_id})
        budget_ms = timeout_ms if timeout_ms is not None else self.call_timeout_ms
        started = time.perf_counter()
        deadline = started + budget_ms / 1000.0

        with self._lock:
            if self._waiting >= self.backlog_limit:
                raise QueueFull(f"lab {self.lab_id!r}: more than "
                                f"{self.backlog_limit} calls pending")
            self._waiting += 1
        try:
            proc = self._acquire(deadline)
            if proc is None:
                elapsed = (time.perf_counter() - started) * 1000
                return CallOutcome.failure(
                    "timeout", "Timeout",
                    f"no worker became available within {budget_ms} ms",
                    duration_ms=elapsed)
            exec_start = time.perf_counter()
            try:
                _, pending = proc.invoke(function, args, kwargs)
            except WorkerCrash as e:
                return CallOutcome.failure(
                    "worker_crash", "WorkerCrash", str(e),
                    duration_ms=(time.perf_counter() - started) * 1000)
            finished = pending.event.wait(max(deadline - time.perf_counter(), 0.0))
            duration_ms = (time.perf_counter() - exec_start) * 1000
            if not finished:
                proc.kill()  # replacement arrives via on_death
                return CallOutcome.failure(
                    "timeout", "Timeout",
                    f"call exceeded {budget_ms} ms and the worker was restarted",
                    duration_ms=duration_ms)
            response = pending.response
            if response is _CRASH:
                return CallOutcome.failure(
                    "worker_crash", "WorkerCrash",
                    f"worker exited during the call: {proc.stderr_tail() or 'no stderr'}",
                    duration_ms=duration_ms)
            self._idle.put(proc)
            if response.get("ok"):
                return CallOutcome.ok(response.get("result"), duration_ms=duration_ms)
            error = response.get("error") or {}
            return CallOutcome.failure(
                "user_error",
                str(error.get("type", "Error")),
                str(error.get("message", "")),
                detail=error.get("detail"),
                duration_ms=duration_ms)
        finally:
            with self._lock:
                self._waiting -= 1

    def _acquire(self, deadline: float) -> Optional[WorkerProcess]:
        while True:
            remaining = deadline - time.perf_counter()
            if remaining <= 0:
                return None
            if not self._procs and not self._replacing:
                # the whole pool is gone (spawn retries exhausted); try inline
                try:
                    self.ensure_started()
                except Exception as e:
                    raise WorkerUnavailable(f"lab {self.lab_id!r}: {e}") from None
            try:
                proc = self._idle.get(timeout=min(remaining, 0.5))
            except queue.Empty:
                continue
            if proc.alive():
                return proc
            # stale queue entry for a dead process; make sure a
            # replacement is scheduled (idempotent) and keep waiting
            self._on_proc_death(proc)

    # -- crash recovery --------------------------------------------------------

    def _on_proc_death(self, proc: WorkerProcess):
        with self._lock:
            if self._stopped or proc not in self._procs:
                return
            self._procs.remove(proc)
            key = id(proc)
            self._replacing.add(key)
        threading.Thread(target=self._replace, args=(key,), daemon=True,
                         name=f"worker-respawn-{self.lab_id}").start()

    def _replace(self, key: int):
        try:
            for attempt in range(3):
                if self._stopped:
                    return
                try:
                    proc, raw = self._new_process()
                except Exception as e:
                    logger.warning("lab %s: respawn attempt %d failed: %s",
                                   self.lab_id, attempt + 1, e)
                    self._spawn_error = str(e)
                    time.sleep(0.2 * (attempt + 1))
                    continue
                with self._lock:
                    if self._stopped:
                        proc.graceful_shutdown()
                        return
                    self._set_descriptors(raw)  # descriptors re-queried on restart
                    self._procs.append(proc)
                    self._spawn_error = None
                    self._idle.put(proc)
                return
            logger.error("lab %s: giving up respawning worker", self.lab_id)
        finally:
            with self._lock:
                self._replacing.discard(key)

    # -- shutdown -----------------------------------------------------------------

    def shutdown(self):
        with self._lock:
            if self._stopped:
                return
            self._stopped = True
            procs = list(self._procs)
            self._procs = []
        for proc in procs:
            proc.graceful_shutdown()
        while True:
            try:
                self._idle.get_nowait()
            except queue.Empty:
                break


class WorkerSupervisor:
    """Creates and owns one WorkerHandle per lab."""

    def __init__(self, runtimes: Optional[dict[str, list[str]]] = None,
                 call_timeout_ms: int = DEFAULT_CALL_TIMEOUT_MS,
                 startup_timeout_ms: int = DEFAULT_STARTUP_TIMEOUT_MS,
                 backlog_limit: int = DEFAULT_BACKLOG_LIMIT):
        self.runtimes = {**default_runtimes(), **(runtimes or {})}
        self.call_timeout_ms = call_timeout_ms
        self.startup_timeout_ms = startup_timeout_ms
        self.backlog_limit = backlog_limit
        self._handles: dict[str, WorkerHandle] = {}
        self._lock = threading.Lock()

    def handle_for(self, manifest: LabManifest, layout: LabLayout) -> WorkerHandle:
        with self._lock:
            handle = self._handles.get(manifest.lab_id)
            if handle is None:
                argv = self.runtimes.get(manifest.runtime)
                if argv is None:
                    raise WorkerUnavailable(
                        f"lab {manifest.lab_id!r} wants unknown runtime {manifest.runtime!r}")
                handle = WorkerHandle(
                    manifest, layout, argv,
                    call_timeout_ms=self.call_timeout_ms,
                    startup_timeout_ms=self.startup_timeout_ms,
                    backlog_limit=self.backlog_limit,
                )
                self._handles[manifest.lab_id] = handle
            return handle

    def drop(self, lab_id: str):
        with self._lock:
            handle = self._handles.pop(lab_id, None)
        if handle is not None:
            handle.shutdown()

    def shutdown_all(self):
        with self._lock:
            handles = list(self._handles.values())
            self._handles.clear()
        for handle in handles:
            handle.shutdown()
