"""Single-threaded frame loop over stdin/stdout.

Frames are one JSON object per line. The real stdout is reserved for
frames; sys.stdout is rebound to stderr before instructor code runs, so
stray print() calls become diagnostics instead of protocol corruption.
"""
from __future__ import annotations

import json
import math
import sys
import traceback

from .loader import LoadError, load_funcs


class Unserializable(Exception):
    pass


def coerce_result(value, depth: int = 0):
    """Narrow coercion: tuples to lists, numeric scalars to finite floats."""
    if depth > 64:
        raise Unserializable("result nests deeper than 64 levels")
    if value is None or isinstance(value, (str, bool)):
        return value
    if isinstance(value, (int, float)):
        out = float(value)
        if not math.isfinite(out):
            raise Unserializable(f"non-finite number {value!r} in result")
        return out
    if isinstance(value, (list, tuple)):
        return [coerce_result(v, depth + 1) for v in value]
    if isinstance(value, dict):
        out = {}
        for k, v in value.items():
            if not isinstance(k, str):
                raise Unserializable(f"map key {k!r} is not a string")
            out[k] = coerce_result(v, depth + 1)
        return out
    # numpy-style scalars and arrays, without importing numpy
    if hasattr(value, "item") and not hasattr(value, "__len__"):
        return coerce_result(value.item(), depth + 1)
    if hasattr(value, "tolist"):
        return coerce_result(value.tolist(), depth + 1)
    raise Unserializable(f"{type(value).__name__} result is not JSON-encodable")


def _encode_frame(frame: dict) -> bytes:
    text = json.dumps(frame, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False)
    return text.encode("utf-8") + b"\n"


class Worker:
    def __init__(self, funcs_dir: str):
        self._out = sys.stdout.buffer
        sys.stdout = sys.stderr  # instructor prints must not corrupt frames
        self.load_error: LoadError | None = None
        self.table = {}
        try:
            self.table = load_funcs(funcs_dir)
        except LoadError as e:
            self.load_error = e
            print(f"leap-worker: load failed: {e.message}", file=sys.stderr)

    def _respond(self, frame: dict):
        self._out.write(_encode_frame(frame))
        self._out.flush()

    def _error(self, rid, err_type: str, message: str, detail: str | None = None):
        error = {"type": err_type, "message": message}
        if detail:
            error["detail"] = detail
        self._respond({"id": rid, "ok": False, "error": error})

    def _describe(self, rid):
        if self.load_error is not None:
            self._error(rid, self.load_error.kind, self.load_error.message,
                        self.load_error.detail)
            return
        result = [self.table[name].descriptor() for name in sorted(self.table)]
        self._respond({"id": rid, "ok": True, "result": result})

    def _invoke(self, rid, frame: dict):
        if self.load_error is not None:
            self._error(rid, self.load_error.kind, self.load_error.message)
            return
        name = frame.get("function")
        entry = self.table.get(name) if isinstance(name, str) else None
        if entry is None:
            self._error(rid, "UnknownFunction", f"no exposed function {name!r}")
            return
        args = frame.get("args") or []
        kwargs = frame.get("kwargs") or {}
        if not isinstance(args, list) or not isinstance(kwargs, dict):
            self._error(rid, "ProtocolError", "args must be a list and kwargs a map")
            return
        try:
            raw = entry.func(*args, **kwargs)
        except BaseException as e:
            if isinstance(e, (KeyboardInterrupt, SystemExit)):
                raise
            self._error(rid, type(e).__name__, str(e), traceback.format_exc())
            return
        try:
            result = coerce_result(raw)
        except Unserializable as e:
            self._error(rid, "UnserializableResult", str(e))
            return
        self._respond({"id": rid, "ok": True, "result": result})

    def serve(self, stdin=None) -> int:
        stdin = stdin or sys.stdin.buffer
        while True:
            line = stdin.readline()
            if not line:
                break  # supervisor hung up
            if not line.strip():
                continue
            try:
                frame = json.loads(line)
                if not isinstance(frame, dict):
                    raise ValueError("frame is not an object")
                rid = frame["id"]
                op = frame["op"]
            except Exception as e:
                self._error(-1, "ProtocolError", f"malformed frame: {e}")
                continue
            if op == "describe":
                self._describe(rid)
            elif op == "invoke":
                self._invoke(rid, frame)
            elif op == "shutdown":
                self._respond({"id": rid, "ok": True, "result": "bye"})
                break
            else:
                self._error(rid, "ProtocolError", f"unknown op {op!r}")
        return 1 if self.load_error is not None else 0
