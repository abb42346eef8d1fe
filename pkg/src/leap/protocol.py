"""Wire-level data model shared by the server, workers, clients, and the UI.

Values are JSON-only: null, bool, finite number, string, list, string-keyed
map. Numbers uniformly carry 64-bit float semantics (integers are exact up
to 2**53). The canonical encoding — UTF-8, keys sorted, no insignificant
whitespace — makes equal values byte-identical, so stored log rows can be
compared and recomputed byte-for-byte.

Worker frames are newline-delimited canonical JSON, one frame per line.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Optional

from .errors import (
    DepthExceeded,
    InvalidValue,
    NonFiniteNumber,
    ParseError,
    PrivateName,
)

MAX_DEPTH = 64

# plain identifiers for parameters; exposed function names may be dotted
# (built-ins like "quiz.submit") but no segment may start with "_"
IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
EXPOSED_NAME_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_]*(\.[A-Za-z][A-Za-z0-9_]*)*$")
LAB_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_-]*$")

OUTCOME_STATUSES = ("ok", "user_error", "timeout", "worker_crash")


def _normalize(v: Any, depth: int) -> Any:
    """Validate v against the value model, coercing ints to floats."""
    if v is None or isinstance(v, str):
        return v
    if isinstance(v, bool):
        return v
    if isinstance(v, float):
        if not math.isfinite(v):
            raise NonFiniteNumber(f"non-finite number {v!r}")
        return v
    if isinstance(v, int):
        try:
            f = float(v)
        except OverflowError:
            raise NonFiniteNumber(f"integer {v!r} overflows float range") from None
        return f
    if isinstance(v, list):
        if depth >= MAX_DEPTH:
            raise DepthExceeded(f"nesting depth exceeds {MAX_DEPTH}")
        return [_normalize(x, depth + 1) for x in v]
    if isinstance(v, dict):
        if depth >= MAX_DEPTH:
            raise DepthExceeded(f"nesting depth exceeds {MAX_DEPTH}")
        out = {}
        for k, x in v.items():
            if not isinstance(k, str):
                raise InvalidValue(f"map key {k!r} is not a string")
            out[k] = _normalize(x, depth + 1)
        return out
    raise InvalidValue(f"{type(v).__name__} is not in the value model")


def canonical_encode(v: Any) -> bytes:
    """Encode a value as canonical JSON bytes (sorted keys, no whitespace)."""
    normalized = _normalize(v, 0)
    return json.dumps(
        normalized, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


def _parse_number(text: str) -> float:
    f = float(text)
    if not math.isfinite(f):
        raise NonFiniteNumber(f"number literal {text!r} overflows float range")
    return f


def _reject_constant(name: str) -> float:
    raise NonFiniteNumber(f"JSON extension {name!r} rejected")


def canonical_decode(b: bytes | str) -> Any:
    """Decode JSON bytes to a value. Accepts non-canonical spacing/key order."""
    if isinstance(b, bytes):
        try:
            text = b.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError("invalid UTF-8", e.start) from None
    else:
        text = b
    try:
        v = json.loads(
            text,
            parse_float=_parse_number,
            parse_int=_parse_number,
            parse_constant=_reject_constant,
        )
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, len(text[: e.pos].encode("utf-8"))) from None
    except RecursionError:
        raise ParseError("nesting too deep to parse", 0) from None
    return _normalize(v, 0)


# --- timestamps ------------------------------------------------------------

def ms_to_iso(ms: int) -> str:
    """Epoch milliseconds to UTC ISO-8601 with exactly 3 fractional digits."""
    secs, frac = divmod(int(ms), 1000)
    dt = datetime.fromtimestamp(secs, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S") + f".{frac:03d}Z"


def iso_to_ms(s: str) -> int:
    dt = datetime.strptime(s, "%Y-%m-%dT%H:%M:%S.%fZ").replace(tzinfo=timezone.utc)
    return int(dt.timestamp()) * 1000 + dt.microsecond // 1000


# --- descriptors -----------------------------------------------------------

@dataclass(frozen=True)
class ParamDescriptor:
    name: str
    kind: str = "positional"  # positional | keyword
    has_default: bool = False
    default: Any = None
    annotation: Optional[str] = None

    def __post_init__(self):
        if not IDENT_RE.match(self.name):
            raise InvalidValue(f"parameter name {self.name!r} is not an identifier")
        if self.kind not in ("positional", "keyword"):
            raise InvalidValue(f"parameter kind {self.kind!r}")

    def to_wire(self) -> dict:
        w: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.has_default:
            w["default"] = self.default
        if self.annotation is not None:
            w["annotation"] = self.annotation
        return w

    @classmethod
    def from_wire(cls, w: dict) -> "ParamDescriptor":
        return cls(
            name=w["name"],
            kind=w.get("kind", "positional"),
            has_default="default" in w,
            default=w.get("default"),
            annotation=w.get("annotation"),
        )


@dataclass(frozen=True)
class FunctionDescriptor:
    name: str
    params: tuple[ParamDescriptor, ...] = ()
    doc: str = ""
    lab_id: str = ""

    def __post_init__(self):
        if not EXPOSED_NAME_RE.match(self.name):
            raise PrivateName(f"function name {self.name!r} is not exposable")
        object.__setattr__(self, "params", tuple(self.params))

    def to_wire(self) -> dict:
        return {
            "name": self.name,
            "params": [p.to_wire() for p in self.params],
            "doc": self.doc,
            "lab_id": self.lab_id,
        }

    @classmethod
    def from_wire(cls, w: dict) -> "FunctionDescriptor":
        return cls(
            name=w["name"],
            params=tuple(ParamDescriptor.from_wire(p) for p in w.get("params", [])),
            doc=w.get("doc", ""),
            lab_id=w.get("lab_id", ""),
        )


# --- call outcomes and log records -----------------------------------------

@dataclass(frozen=True)
class CallOutcome:
    status: str
    result: Any = None
    error: Optional[dict] = None  # {type, message, detail?}
    duration_ms: float = 0.0

    def __post_init__(self):
        if self.status not in OUTCOME_STATUSES:
            raise InvalidValue(f"outcome status {self.status!r}")
        if self.status == "ok" and self.error is not None:
            raise InvalidValue("ok outcome cannot carry an error")
        if self.status != "ok" and not self.error:
            raise InvalidValue(f"{self.status} outcome requires an error")
        if self.duration_ms < 0:
            raise InvalidValue("negative duration")

    def to_wire(self) -> dict:
        w: dict[str, Any] = {"status": self.status, "duration_ms": self.duration_ms}
        if self.status == "ok":
            w["result"] = self.result
        else:
            err = {"type": self.error["type"], "message": self.error["message"]}
            if self.error.get("detail") is not None:
                err["detail"] = self.error["detail"]
            w["error"] = err
        return w

    @classmethod
    def from_wire(cls, w: dict) -> "CallOutcome":
        return cls(
            status=w["status"],
            result=w.get("result"),
            error=w.get("error"),
            duration_ms=w.get("duration_ms", 0.0),
        )

    @classmethod
    def ok(cls, result: Any, duration_ms: float = 0.0) -> "CallOutcome":
        return cls(status="ok", result=result, duration_ms=duration_ms)

    @classmethod
    def failure(cls, status: str, err_type: str, message: str,
                detail: Optional[str] = None, duration_ms: float = 0.0) -> "CallOutcome":
        return cls(
            status=status,
            error={"type": err_type, "message": message, "detail": detail},
            duration_ms=duration_ms,
        )


@dataclass(frozen=True)
class LogRecord:
    seq: int
    timestamp_ms: int
    lab_id: str
    student_id: str
    function: str
    args: tuple = ()
    kwargs: dict = field(default_factory=dict)
    outcome: CallOutcome = CallOutcome.ok(None)
    experiment_id: Optional[str] = None
    truncated: bool = False

    def to_wire(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": ms_to_iso(self.timestamp_ms),
            "lab_id": self.lab_id,
            "experiment_id": self.experiment_id,
            "student_id": self.student_id,
            "function": self.function,
            "args": list(self.args),
            "kwargs": dict(self.kwargs),
            "outcome": self.outcome.to_wire(),
            "truncated": self.truncated,
        }

    @classmethod
    def from_wire(cls, w: dict) -> "LogRecord":
        return cls(
            seq=int(w["seq"]),
            timestamp_ms=iso_to_ms(w["timestamp"]),
            lab_id=w["lab_id"],
            experiment_id=w.get("experiment_id"),
            student_id=w["student_id"],
            function=w["function"],
            args=tuple(w.get("args", [])),
            kwargs=dict(w.get("kwargs", {})),
            outcome=CallOutcome.from_wire(w["outcome"]),
            truncated=bool(w.get("truncated", False)),
        )


# --- worker frames ----------------------------------------------------------

def encode_frame(frame: dict) -> bytes:
    """One frame per line; canonical JSON never emits raw newlines."""
    return canonical_encode(frame) + b"\n"


def decode_frame(line: bytes | str) -> dict:
    v = canonical_decode(line)
    if not isinstance(v, dict):
        raise ParseError("frame is not a JSON object", 0)
    return v


def invoke_frame(request_id: int, function: str, args: list, kwargs: dict) -> dict:
    return {"id": request_id, "op": "invoke", "function": function,
            "args": args, "kwargs": kwargs}


def describe_frame(request_id: int) -> dict:
    return {"id": request_id, "op": "describe"}


def shutdown_frame(request_id: int) -> dict:
    return {"id": request_id, "op": "shutdown"}
