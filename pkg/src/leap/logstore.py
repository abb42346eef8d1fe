"""Durable append-only store of call records, one dense sequence per lab.

Backed by a single SQLite file in WAL mode: committed rows survive a
process kill, and reads run on separate connections so queries never
block appends. Timestamps are assigned here, not by clients, which keeps
trajectory ordering trustworthy.
"""
from __future__ import annotations

import sqlite3
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Optional

from .errors import InvalidFilter, StorageFailure, UnknownLab
from .protocol import (
    CallOutcome,
    LogRecord,
    canonical_decode,
    canonical_encode,
)

RESULT_CAP_BYTES = 64 * 1024

_SCHEMA = """
CREATE TABLE IF NOT EXISTS records (
    lab_id        TEXT NOT NULL,
    seq           INTEGER NOT NULL,
    ts_ms         INTEGER NOT NULL,
    experiment_id TEXT,
    student_id    TEXT NOT NULL,
    function      TEXT NOT NULL,
    args          TEXT NOT NULL,
    kwargs        TEXT NOT NULL,
    status        TEXT NOT NULL,
    result        TEXT,
    error         TEXT,
    duration_ms   REAL NOT NULL,
    truncated     INTEGER NOT NULL DEFAULT 0,
    PRIMARY KEY (lab_id, seq)
);
CREATE INDEX IF NOT EXISTS idx_records_student ON records (lab_id, student_id, seq);
"""

_COLUMNS = (
    "lab_id, seq, ts_ms, experiment_id, student_id, function, args, kwargs,"
    " status, result, error, duration_ms, truncated"
)


@dataclass
class LogFilter:
    lab_id: str
    student_id: Optional[str] = None
    function: Optional[str] = None
    status: Optional[str] = None
    since_ms: Optional[int] = None
    until_ms: Optional[int] = None
    after_seq: Optional[int] = None
    limit: int = 100

    def __post_init__(self):
        if not self.lab_id:
            raise InvalidFilter("lab_id is required")
        if not isinstance(self.limit, int) or not 1 <= self.limit <= 1000:
            raise InvalidFilter("limit must be in 1..1000")
        if self.since_ms is not None and self.until_ms is not None and self.since_ms > self.until_ms:
            raise InvalidFilter("since is after until")
        if self.after_seq is not None and self.after_seq < 0:
            raise InvalidFilter("after_seq must be >= 0")


class LogStore:
    def __init__(self, path: str | Path, lab_exists: Optional[Callable[[str], bool]] = None):
        self._path = str(path)
        self._lab_exists = lab_exists
        try:
            self._writer = self._connect()
            self._writer.executescript(_SCHEMA)
            self._writer.commit()
        except sqlite3.Error as e:
            raise StorageFailure(f"cannot open log store at {self._path}: {e}") from None
        self._cond = threading.Condition()
        self._local = threading.local()
        # lab_id -> (last seq, last ts_ms); rebuilt lazily after restart
        self._last: dict[str, tuple[int, int]] = {}

    def _connect(self) -> sqlite3.Connection:
        conn = sqlite3.connect(self._path, check_same_thread=False, timeout=30.0)
        conn.execute("PRAGMA journal_mode=WAL")
        conn.execute("PRAGMA synchronous=NORMAL")
        return conn

    def _reader(self) -> sqlite3.Connection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = self._connect()
            self._local.conn = conn
        return conn

    # -- append ---------------------------------------------------------

    def append(
        self,
        lab_id: str,
        student_id: str,
        function: str,
        args: list,
        kwargs: dict,
        outcome: CallOutcome,
        experiment_id: Optional[str] = None,
    ) -> LogRecord:
        args_text = canonical_encode(list(args)).decode("utf-8")
        kwargs_text = canonical_encode(dict(kwargs)).decode("utf-8")
        truncated = False
        result_text = None
        error_text = None
        result_value = outcome.result
        error_value = None
        if outcome.status == "ok":
            result_text = canonical_encode(outcome.result).decode("utf-8")
            if len(result_text.encode("utf-8")) > RESULT_CAP_BYTES:
                result_value = "[truncated] " + result_text[:256]
                result_text = canonical_encode(result_value).decode("utf-8")
                truncated = True
        else:
            error_value = outcome.to_wire()["error"]
            error_text = canonical_encode(error_value).decode("utf-8")

        with self._cond:
            last_seq, last_ts = self._last_for(lab_id)
            seq = last_seq + 1
            ts_ms = max(int(time.time_ns() // 1_000_000), last_ts)
            try:
                self._writer.execute(
                    f"INSERT INTO records ({_COLUMNS}) VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?)",
                    (lab_id, seq, ts_ms, experiment_id, student_id, function,
                     args_text, kwargs_text, outcome.status, result_text, error_text,
                     outcome.duration_ms, int(truncated)),
                )
                self._writer.commit()
            except sqlite3.Error as e:
                self._writer.rollback()
                raise StorageFailure(f"append failed: {e}") from None
            self._last[lab_id] = (seq, ts_ms)
            self._cond.notify_all()

        if outcome.status == "ok":
            stored = CallOutcome.ok(result_value, duration_ms=outcome.duration_ms)
        else:
            stored = CallOutcome(status=outcome.status, error=error_value,
                                 duration_ms=outcome.duration_ms)
        return LogRecord(
            seq=seq, timestamp_ms=ts_ms, lab_id=lab_id, student_id=student_id,
            function=function, args=tuple(args), kwargs=dict(kwargs),
            outcome=stored, experiment_id=experiment_id, truncated=truncated,
        )

    def _last_for(self, lab_id: str) -> tuple[int, int]:
        cached = self._last.get(lab_id)
        if cached is not None:
            return cached
        row = self._writer.execute(
            "SELECT seq, ts_ms FROM records WHERE lab_id=? ORDER BY seq DESC LIMIT 1",
            (lab_id,),
        ).fetchone()
        out = (row[0], row[1]) if row else (0, 0)
        self._last[lab_id] = out
        return out

    # -- read -----------------------------------------------------------

    def query(self, f: LogFilter) -> tuple[list[LogRecord], int]:
        """Matching records ascending by seq, plus a next_after_seq cursor."""
        where = ["lab_id = ?"]
        params: list = [f.lab_id]
        for column, value in (
            ("student_id", f.student_id),
            ("function", f.function),
            ("status", f.status),
        ):
            if value is not None:
                where.append(f"{column} = ?")
                params.append(value)
        if f.since_ms is not None:
            where.append("ts_ms >= ?")
            params.append(f.since_ms)
        if f.until_ms is not None:
            where.append("ts_ms <= ?")
            params.append(f.until_ms)
        if f.after_seq is not None:
            where.append("seq > ?")
            params.append(f.after_seq)
        sql = (
            f"SELECT {_COLUMNS} FROM records WHERE " + " AND ".join(where)
            + " ORDER BY seq ASC LIMIT ?"
        )
        params.append(f.limit)
        try:
            rows = self._reader().execute(sql, params).fetchall()
        except sqlite3.Error as e:
            raise StorageFailure(f"query failed: {e}") from None
        records = [self._row_to_record(r) for r in rows]
        cursor = records[-1].seq if records else (f.after_seq or 0)
        return records, cursor

    def all_records(self, lab_id: str) -> list[LogRecord]:
        """Full ascending history of one lab (analytics snapshot)."""
        rows = self._reader().execute(
            f"SELECT {_COLUMNS} FROM records WHERE lab_id = ? ORDER BY seq ASC",
            (lab_id,),
        ).fetchall()
        return [self._row_to_record(r) for r in rows]

    def max_seq(self, lab_id: str) -> int:
        row = self._reader().execute(
            "SELECT COALESCE(MAX(seq), 0) FROM records WHERE lab_id=?", (lab_id,)
        ).fetchone()
        return int(row[0])

    def count(self, lab_id: str) -> int:
        row = self._reader().execute(
            "SELECT COUNT(*) FROM records WHERE lab_id=?", (lab_id,)
        ).fetchone()
        return int(row[0])

    def tail(self, lab_id: str, after_seq: int, timeout_s: float = 10.0) -> list[LogRecord]:
        """Block until records with seq > after_seq exist, or timeout (then [])."""
        if self._lab_exists is not None and not self._lab_exists(lab_id):
            raise UnknownLab(lab_id)
        deadline = time.monotonic() + timeout_s
        while True:
            records, _ = self.query(LogFilter(lab_id=lab_id, after_seq=after_seq, limit=1000))
            if records:
                return records
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return []
            with self._cond:
                # re-check under the lock so an append between the query
                # above and this wait cannot be missed
                if self._last_for(lab_id)[0] > after_seq:
                    continue
                self._cond.wait(min(remaining, 0.25))

    def dump(self, lab_id: str) -> Iterator[bytes]:
        """Newline-delimited canonical-JSON records, ascending by seq."""
        for record in self.all_records(lab_id):
            yield canonical_encode(record.to_wire()) + b"\n"

    def _row_to_record(self, row) -> LogRecord:
        (lab_id, seq, ts_ms, experiment_id, student_id, function, args_text,
         kwargs_text, status, result_text, error_text, duration_ms, truncated) = row
        if status == "ok":
            outcome = CallOutcome.ok(canonical_decode(result_text), duration_ms=duration_ms)
        else:
            outcome = CallOutcome(
                status=status, error=canonical_decode(error_text), duration_ms=duration_ms
            )
        return LogRecord(
            seq=seq, timestamp_ms=ts_ms, lab_id=lab_id, experiment_id=experiment_id,
            student_id=student_id, function=function,
            args=tuple(canonical_decode(args_text)), kwargs=canonical_decode(kwargs_text),
            outcome=outcome, truncated=bool(truncated),
        )

    def close(self):
        with self._cond:
            self._writer.close()
