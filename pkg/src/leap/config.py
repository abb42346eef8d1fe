"""Server configuration (leap.toml).

Relative paths resolve against the config file's directory so a checkout
can be served with `leap serve --config leap.toml` from anywhere.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import BadRequest


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    labs_dir: Path = Path("labs")
    storage_path: Path = Path("leap.db")
    app_dir: Optional[Path] = None
    call_timeout_ms: int = 10_000
    worker_startup_ms: int = 15_000
    session_idle_s: int = 2 * 3600
    session_absolute_s: int = 12 * 3600
    backlog_limit: int = 256
    runtimes: dict[str, list[str]] = field(default_factory=dict)


def load_config(path: str | Path) -> ServerConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise BadRequest(f"cannot read config {path}: {e}") from None
    except tomllib.TOMLDecodeError as e:
        raise BadRequest(f"bad TOML in {path}: {e}") from None

    base = path.resolve().parent
    cfg = ServerConfig()

    bind = raw.get("bind", f"{cfg.host}:{cfg.port}")
    if ":" not in bind:
        raise BadRequest(f"bind must look like host:port, got {bind!r}")
    host, _, port = bind.rpartition(":")
    try:
        cfg.host, cfg.port = host, int(port)
    except ValueError:
        raise BadRequest(f"bad port in bind {bind!r}") from None

    cfg.labs_dir = _resolve(base, raw.get("labs_dir", "labs"))
    cfg.storage_path = _resolve(base, raw.get("storage", "leap.db"))
    if "app_dir" in raw:
        cfg.app_dir = _resolve(base, raw["app_dir"])

    timeouts = raw.get("timeouts", {})
    cfg.call_timeout_ms = int(timeouts.get("call_ms", cfg.call_timeout_ms))
    cfg.worker_startup_ms = int(timeouts.get("worker_startup_ms", cfg.worker_startup_ms))
    cfg.session_idle_s = int(timeouts.get("session_idle_s", cfg.session_idle_s))
    cfg.session_absolute_s = int(timeouts.get("session_absolute_s", cfg.session_absolute_s))
    cfg.backlog_limit = int(raw.get("limits", {}).get("backlog", cfg.backlog_limit))

    for name, argv in raw.get("runtimes", {}).items():
        if not isinstance(argv, list) or not all(isinstance(a, str) for a in argv):
            raise BadRequest(f"runtime {name!r} must map to a list of strings")
        cfg.runtimes[name] = [sys.executable if a == "{python}" else a for a in argv]
    return cfg


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p
