"""Credential storage, session lifecycle, and lab-scoped authorization.

Passwords are hashed with PBKDF2-HMAC-SHA256 (210k iterations, per-user
16-byte salt); parameters are recorded per hash so they can be migrated
later. Sessions are server-side records keyed by an opaque bearer token;
they are deliberately not persisted — after a server restart clients
simply log in again.
"""
from __future__ import annotations

import hashlib
import hmac
import json
import secrets
import sqlite3
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .errors import (
    DuplicateUser,
    Forbidden,
    InvalidCredentials,
    RateLimited,
    SessionExpired,
    StorageFailure,
    UnknownToken,
    WeakPassword,
)

PBKDF2_ALGORITHM = "PBKDF2-HMAC-SHA256"
PBKDF2_ITERATIONS = 210_000
MIN_ITERATIONS = 100_000
SALT_BYTES = 16
HASH_BYTES = 32
MIN_PASSWORD_LEN = 8

ROLES = ("student", "instructor", "admin")
ACTIONS = ("call", "read_logs", "read_own_logs", "admin_lab", "admin_global")

DEFAULT_IDLE_TIMEOUT_S = 2 * 3600
DEFAULT_ABSOLUTE_TIMEOUT_S = 12 * 3600

_FAILURE_WINDOW_S = 60.0
_FAILURE_LIMIT = 10


def hash_password(password: str, iterations: Optional[int] = None) -> tuple[bytes, bytes, int]:
    iterations = iterations or PBKDF2_ITERATIONS
    salt = secrets.token_bytes(SALT_BYTES)
    digest = hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, iterations, dklen=HASH_BYTES)
    return salt, digest, iterations


def verify_password(password: str, salt: bytes, digest: bytes, iterations: int) -> bool:
    candidate = hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, iterations, dklen=HASH_BYTES)
    return hmac.compare_digest(candidate, digest)


@dataclass(frozen=True)
class Principal:
    user_id: str
    display_name: str
    role: str
    enrolled_labs: frozenset[str] = frozenset()


@dataclass
class Session:
    token: str
    user_id: str
    created: float
    last_used: float


class UserStore:
    """Principals in the same SQLite file as the log store."""

    def __init__(self, path: str | Path):
        try:
            self._conn = sqlite3.connect(str(path), check_same_thread=False, timeout=30.0)
            self._conn.execute("PRAGMA journal_mode=WAL")
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS users ("
                " user_id TEXT PRIMARY KEY, display_name TEXT NOT NULL,"
                " role TEXT NOT NULL, algorithm TEXT NOT NULL, iterations INTEGER NOT NULL,"
                " salt BLOB NOT NULL, hash BLOB NOT NULL, enrolled TEXT NOT NULL)"
            )
            self._conn.commit()
        except sqlite3.Error as e:
            raise StorageFailure(f"cannot open user store: {e}") from None
        self._lock = threading.Lock()

    def insert(self, user_id, display_name, role, salt, digest, iterations, enrolled_labs):
        with self._lock:
            try:
                self._conn.execute(
                    "INSERT INTO users VALUES (?,?,?,?,?,?,?,?)",
                    (user_id, display_name, role, PBKDF2_ALGORITHM, iterations,
                     salt, digest, json.dumps(sorted(enrolled_labs))),
                )
                self._conn.commit()
            except sqlite3.IntegrityError:
                self._conn.rollback()  # release the write lock for other connections
                raise DuplicateUser(user_id) from None
            except sqlite3.Error as e:
                self._conn.rollback()
                raise StorageFailure(f"user insert failed: {e}") from None

    def fetch(self, user_id: str):
        with self._lock:
            row = self._conn.execute(
                "SELECT user_id, display_name, role, iterations, salt, hash, enrolled"
                " FROM users WHERE user_id=?",
                (user_id,),
            ).fetchone()
        if row is None:
            return None
        principal = Principal(
            user_id=row[0], display_name=row[1], role=row[2],
            enrolled_labs=frozenset(json.loads(row[6])),
        )
        return principal, row[3], row[4], row[5]

    def count(self) -> int:
        with self._lock:
            return int(self._conn.execute("SELECT COUNT(*) FROM users").fetchone()[0])

    def close(self):
        with self._lock:
            self._conn.close()


class AuthService:
    """Login, sessions, and the role/enrollment permission matrix."""

    def __init__(
        self,
        users: UserStore,
        logs_visibility: Optional[Callable[[str], str]] = None,
        clock: Callable[[], float] = time.time,
        idle_timeout_s: float = DEFAULT_IDLE_TIMEOUT_S,
        absolute_timeout_s: float = DEFAULT_ABSOLUTE_TIMEOUT_S,
    ):
        self.users = users
        # lab_id -> "class" | "private"; unknown labs default to "class"
        self._logs_visibility = logs_visibility or (lambda lab_id: "class")
        self._clock = clock
        self.idle_timeout_s = idle_timeout_s
        self.absolute_timeout_s = absolute_timeout_s
        self._sessions: dict[str, Session] = {}
        self._failures: dict[str, deque] = {}
        self._lock = threading.Lock()

    # -- provisioning ----------------------------------------------------

    def provision_user(self, user_id, display_name, role, password, enrolled_labs=()) -> Principal:
        if role not in ROLES:
            raise Forbidden(f"unknown role {role!r}")
        if len(password) < MIN_PASSWORD_LEN:
            raise WeakPassword(f"password must be at least {MIN_PASSWORD_LEN} characters")
        salt, digest, iterations = hash_password(password)
        self.users.insert(user_id, display_name, role, salt, digest, iterations, enrolled_labs)
        return Principal(user_id, display_name, role, frozenset(enrolled_labs))

    # -- login -----------------------------------------------------------

    def login(self, user_id: str, password: str) -> str:
        now = self._clock()
        with self._lock:
            failures = self._failures.setdefault(user_id, deque())
            while failures and now - failures[0] > _FAILURE_WINDOW_S:
                failures.popleft()
            if len(failures) >= _FAILURE_LIMIT:
                raise RateLimited("too many failed logins; retry later")
        row = self.users.fetch(user_id)
        if row is None:
            # burn the same work as a real verification so unknown users
            # are indistinguishable from wrong passwords
            verify_password(password, b"\x00" * SALT_BYTES, b"\x00" * HASH_BYTES, PBKDF2_ITERATIONS)
            self._record_failure(user_id, now)
            raise InvalidCredentials("invalid credentials")
        principal, iterations, salt, digest = row
        if not verify_password(password, salt, digest, iterations):
            self._record_failure(user_id, now)
            raise InvalidCredentials("invalid credentials")
        token = secrets.token_urlsafe(16)
        with self._lock:
            self._sessions[token] = Session(token=token, user_id=user_id, created=now, last_used=now)
        return token

    def _record_failure(self, user_id: str, now: float):
        with self._lock:
            self._failures.setdefault(user_id, deque()).append(now)

    # -- authorization -----------------------------------------------------

    def authenticate(self, token: Optional[str]) -> Principal:
        """Validate the session and refresh its idle clock."""
        if not token:
            raise UnknownToken("missing session token")
        now = self._clock()
        with self._lock:
            session = self._sessions.get(token)
            if session is None:
                raise UnknownToken("unknown session token")
            if now - session.created > self.absolute_timeout_s or now - session.last_used > self.idle_timeout_s:
                del self._sessions[token]
                raise SessionExpired("session expired")
            session.last_used = now
            user_id = session.user_id
        row = self.users.fetch(user_id)
        if row is None:
            raise UnknownToken("session user no longer exists")
        return row[0]

    def authorize(self, token: Optional[str], lab_id: str, action: str) -> Principal:
        principal = self.authenticate(token)
        if action not in ACTIONS:
            raise Forbidden(f"unknown action {action!r}")
        if principal.role == "admin":
            return principal
        enrolled = lab_id in principal.enrolled_labs
        if principal.role == "instructor":
            if enrolled and action != "admin_global":
                return principal
            raise Forbidden(f"instructor not enrolled in lab {lab_id!r}"
                            if not enrolled else "admin access required")
        # students
        if not enrolled:
            raise Forbidden(f"not enrolled in lab {lab_id!r}")
        if action in ("call", "read_own_logs"):
            return principal
        if action == "read_logs" and self._logs_visibility(lab_id) == "class":
            return principal
        raise Forbidden(f"students may not {action} on lab {lab_id!r}")

    def logout(self, token: str):
        with self._lock:
            self._sessions.pop(token, None)
