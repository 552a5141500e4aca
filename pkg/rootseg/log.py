"""
File-based logging for rootseg.

Purpose:
  Keep a durable record of long runs (training, tuning) that survives the
  terminal, so a failed or diverged run can be diagnosed afterwards.

Notes:
  - One line per event: `TIMESTAMP LEVEL [tag] message key=value ...`.
  - Keyword fields are appended sorted by key, floats with 6 significant
    digits, so epoch and generation lines can be grepped and diffed.

Usage:
  from .log import log_info, log_warning, log_error, log_debug, get_log_path
  log_info("train", "epoch done", epoch=3, val_f1=0.71)
"""

from __future__ import annotations

import datetime
import os
import sys
from pathlib import Path
from threading import Lock
from typing import Optional

from .config import LOG_ENV_LEVEL, LOG_ENV_PATH

DEFAULT_LOG_PATH = Path.home() / ".rootseg.log"
MAX_LOG_SIZE_BYTES = 5 * 1024 * 1024
KEPT_BACKUPS = 2

_LEVELS = {"debug": 10, "info": 20, "warning": 30, "error": 40}

_lock = Lock()
_log_path: Optional[Path] = None


def _resolve_log_path() -> Path:
    raw = os.environ.get(LOG_ENV_PATH, "").strip()
    return Path(raw).expanduser() if raw else DEFAULT_LOG_PATH


def _log_level() -> str:
    """Configured threshold (ROOTSEG_LOG_LEVEL). Default: info."""
    raw = os.environ.get(LOG_ENV_LEVEL, "").strip().lower()
    return raw if raw in _LEVELS else "info"


def get_log_path() -> Path:
    global _log_path
    if _log_path is None:
        _log_path = _resolve_log_path()
    return _log_path


def _rotate_if_needed(path: Path) -> None:
    """Shift `run.log` -> `run.log.1` -> `run.log.2` once the file is too big."""
    try:
        if not path.exists() or path.stat().st_size < MAX_LOG_SIZE_BYTES:
            return
        for index in range(KEPT_BACKUPS, 0, -1):
            older = path.with_name(f"{path.name}.{index}")
            newer = path if index == 1 else path.with_name(f"{path.name}.{index - 1}")
            if newer.exists():
                os.replace(newer, older)
    except OSError:
        pass


def _format_value(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if value is None:
        return "none"
    text = str(value)
    return f'"{text}"' if (" " in text or not text) else text


def format_fields(fields: dict[str, object]) -> str:
    return " ".join(f"{key}={_format_value(fields[key])}" for key in sorted(fields))


def _write_log(level: str, tag: str, message: str, fields: dict[str, object]) -> None:
    """
    Append one line to the log file.

    Fallback: if the primary path is not writable, try /tmp, then stderr.
    """
    path = get_log_path()
    ts = datetime.datetime.now().strftime("%Y-%m-%d %H:%M:%S")
    tail = f" {format_fields(fields)}" if fields else ""
    line = f"{ts} {level.upper():7} [{tag}] {message}{tail}\n"

    def _try_write(p: Path) -> bool:
        with _lock:
            _rotate_if_needed(p)
            try:
                p.parent.mkdir(parents=True, exist_ok=True)
                with p.open("a", encoding="utf-8") as f:
                    f.write(line)
                return True
            except OSError:
                return False

    if _try_write(path):
        return
    fallback = Path("/tmp") / f"rootseg_{os.environ.get('USER', 'unknown')}.log"
    if fallback != path and _try_write(fallback):
        global _log_path
        _log_path = fallback
        print(f"[log] Using fallback log: {fallback} (primary {path} not writable)", file=sys.stderr)
        return
    print(f"[log] {line.strip()}", file=sys.stderr)


def _enabled(level: str) -> bool:
    return _LEVELS[level] >= _LEVELS[_log_level()]


def log_debug(tag: str, message: str, **fields: object) -> None:
    if _enabled("debug"):
        _write_log("debug", tag, message, fields)


def log_info(tag: str, message: str, **fields: object) -> None:
    if _enabled("info"):
        _write_log("info", tag, message, fields)


def log_warning(tag: str, message: str, **fields: object) -> None:
    """Recoverable anomaly: bad manifest row, skipped image, NaN fitness."""
    if _enabled("warning"):
        _write_log("warning", tag, message, fields)


def log_error(tag: str, message: str, **fields: object) -> None:
    """Always written, whatever the level."""
    _write_log("error", tag, message, fields)


def log_startup(command: str) -> None:
    from .config import __version__, worker_count

    log_info("startup", f"rootseg v{__version__}", command=command, workers=worker_count(), level=_log_level())
    log_info("startup", f"Log file: {get_log_path()}")
