"""Simulated mainframe client backed by a local directory tree.

Stands in for the real dataset-transfer/job-submission CLI: members live
at ``<store_root>/<DATASET>/<MEMBER>`` as plain files, job submission is
synthetic, and sessions enforce a strict open/close lifecycle. JCL
containing the sentinel line ``//*FAIL`` yields return code 8 so failure
paths stay deterministically testable.
"""

from __future__ import annotations

import os
import re
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    AuthFailureError,
    IoFailureError,
    MemberNotFoundError,
    SessionClosedError,
    StoreMissingError,
)
from .shell import SecretStore

DATASET_RE = re.compile(r"^[A-Z0-9.#@$-]+$")
MAX_MEMBER_LENGTH = 8
MAX_RETURN_CODE = 4095
FAIL_SENTINEL = "//*FAIL"

OPEN = "open"
CLOSED = "closed"


@dataclass(frozen=True)
class MainframeConfig:
    """Connection settings; only the credential's env var *name* is kept."""

    store_root: Path
    user: str
    password_env: str
    latency_ms: int = 0


@dataclass
class Session:
    cfg: MainframeConfig
    id: str
    state: str = OPEN
    calls_made: int = 0
    times_closed: int = 0
    _job_counter: int = 0


@dataclass(frozen=True)
class JobResult:
    job_id: str
    return_code: int
    spool: str

    def __post_init__(self):
        if not 0 <= self.return_code <= MAX_RETURN_CODE:
            raise ValueError(f"return_code {self.return_code} outside 0..{MAX_RETURN_CODE}")


def connect(cfg: MainframeConfig, env: dict[str, str], secrets: SecretStore | None = None) -> Session:
    """Open a session; the credential value is registered for redaction."""
    if not Path(cfg.store_root).is_dir():
        raise StoreMissingError(f"mainframe store root does not exist: {cfg.store_root}")
    if cfg.password_env not in env:
        raise AuthFailureError(
            f"credential environment variable {cfg.password_env} is not set"
        )
    if secrets is not None and env[cfg.password_env]:
        secrets.register(env[cfg.password_env])
    return Session(cfg=cfg, id=uuid.uuid4().hex)


def _enter(session: Session) -> None:
    if session.state != OPEN:
        raise SessionClosedError(f"session {session.id} is closed")
    session.calls_made += 1
    if session.cfg.latency_ms > 0:
        time.sleep(session.cfg.latency_ms / 1000.0)


def _member_path(session: Session, dataset: str, member: str) -> Path:
    if not DATASET_RE.match(dataset):
        raise ValueError(f"invalid dataset name: {dataset!r}")
    if not member or len(member) > MAX_MEMBER_LENGTH:
        raise ValueError(f"member name must be 1..{MAX_MEMBER_LENGTH} characters: {member!r}")
    return Path(session.cfg.store_root) / dataset / member


def get_member(session: Session, dataset: str, member: str) -> str:
    """Return the contents of ``dataset(member)``."""
    _enter(session)
    path = _member_path(session, dataset, member)
    if not path.is_file():
        raise MemberNotFoundError(f"{dataset}({member}) not found")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return fh.read()


def put_member(session: Session, dataset: str, member: str, content: str) -> Path:
    """Write ``dataset(member)`` atomically (write-then-rename); the dataset
    directory is created on demand."""
    _enter(session)
    path = _member_path(session, dataset, member)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.parent / f".{member}.{session.id}.tmp"
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailureError(f"cannot write {dataset}({member}): {exc}") from exc
    return path


def submit_job(session: Session, jcl: str) -> JobResult:
    """Simulated job submission: rc 0 and a counter-based job id, or rc 8
    when the JCL contains the ``//*FAIL`` sentinel line."""
    _enter(session)
    if not jcl:
        raise ValueError("jcl must be non-empty")
    session._job_counter += 1
    job_id = f"JOB{session._job_counter:05d}"
    failed = any(line.strip() == FAIL_SENTINEL for line in jcl.splitlines())
    return_code = 8 if failed else 0
    spool = (
        f"1//{session.cfg.user.upper():<8} JOB {job_id}\n"
        f" {job_id} STARTED\n"
        f" {job_id} ENDED - RC={return_code:04d}\n"
    )
    return JobResult(job_id=job_id, return_code=return_code, spool=spool)


def close(session: Session) -> None:
    """Close the session; idempotent, callable in any state."""
    if session.state == OPEN:
        session.state = CLOSED
        session.times_closed += 1
