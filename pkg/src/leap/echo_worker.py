"""Minimal built-in worker: fixed diagnostic functions, no lab code.

Speaks the same newline-delimited frame protocol as a real lab runtime, so
the server, log store, and auth paths can be exercised (and tested) without
any lab-specific runtime installed. Select it with runtime "echo-worker".

Run as: python -m leap.echo_worker --funcs <dir>   (the dir is ignored)
"""
from __future__ import annotations

import argparse
import os
import sys
import time
import traceback

from .protocol import canonical_decode, encode_frame

_counter = 0


def _echo(value=None):
    return value


def _count():
    global _counter
    _counter += 1
    return _counter


def _sleep_ms(ms):
    time.sleep(float(ms) / 1000.0)
    return float(ms)


def _boom(message="boom"):
    raise RuntimeError(str(message))


def _die(code=1):
    os._exit(int(code))


_FUNCTIONS = {
    "echo": (_echo, [{"name": "value", "kind": "positional", "default": None}],
             "Return the argument unchanged."),
    "counter": (_count, [], "Increment and return a worker-global counter."),
    "sleep_ms": (_sleep_ms, [{"name": "ms", "kind": "positional"}],
                 "Sleep for the given milliseconds, then return them."),
    "boom": (_boom, [{"name": "message", "kind": "positional", "default": "boom"}],
             "Raise a RuntimeError carrying the message."),
    "die": (_die, [{"name": "code", "kind": "positional", "default": 1.0}],
            "Exit the worker process immediately without answering."),
}


def _describe_result():
    return [
        {"name": name, "params": params, "doc": doc}
        for name, (_, params, doc) in sorted(_FUNCTIONS.items())
    ]


def _respond(out, frame: dict):
    out.write(encode_frame(frame))
    out.flush()


def serve(stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin.buffer
    stdout = stdout or sys.stdout.buffer
    ignore_shutdown = os.environ.get("LEAP_ECHO_IGNORE_SHUTDOWN") == "1"
    while True:
        line = stdin.readline()
        if not line:
            return 0  # parent closed the pipe
        if not line.strip():
            continue
        try:
            frame = canonical_decode(line)
            if not isinstance(frame, dict):
                raise ValueError("frame is not an object")
            rid = int(frame["id"])
            op = frame["op"]
        except Exception as e:
            _respond(stdout, {"id": -1, "ok": False,
                              "error": {"type": "ProtocolError", "message": str(e)}})
            continue
        if op == "describe":
            _respond(stdout, {"id": rid, "ok": True, "result": _describe_result()})
        elif op == "shutdown":
            _respond(stdout, {"id": rid, "ok": True, "result": "bye"})
            if not ignore_shutdown:
                return 0
        elif op == "invoke":
            name = frame.get("function")
            entry = _FUNCTIONS.get(name)
            if entry is None:
                _respond(stdout, {"id": rid, "ok": False,
                                  "error": {"type": "UnknownFunction",
                                            "message": f"no function {name!r}"}})
                continue
            func = entry[0]
            try:
                result = func(*frame.get("args", []), **frame.get("kwargs", {}))
            except Exception as e:
                _respond(stdout, {"id": rid, "ok": False,
                                  "error": {"type": type(e).__name__, "message": str(e),
                                            "detail": traceback.format_exc()}})
                continue
            _respond(stdout, {"id": rid, "ok": True, "result": result})
        else:
            _respond(stdout, {"id": rid, "ok": False,
                              "error": {"type": "ProtocolError",
                                        "message": f"unknown op {op!r}"}})


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="leap-echo-worker", description=__doc__)
    parser.add_argument("--funcs", help="accepted for launch-contract parity; ignored")
    parser.parse_args(argv)
    return serve()


if __name__ == "__main__":
    sys.exit(main())
