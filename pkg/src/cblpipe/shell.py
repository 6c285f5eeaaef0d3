"""Platform-independent child-process execution and secret handling.

Commands are argv vectors executed without an intermediate shell
interpreter, so the host shell can never reinterpret them; a raw-shell
escape hatch exists behind an explicit flag. Credential placeholders in
command templates are resolved from the environment and every resolved
value is registered for log redaction.
"""

from __future__ import annotations

import os
import re
import subprocess
import threading
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    MissingEnvVarError,
    SpawnFailureError,
    TimeoutExceededError,
    UnboundPlaceholderError,
)

DEFAULT_MASK = "***"
MIN_SECRET_LENGTH = 4
STREAM_CAP = 16 * 1024 * 1024  # bytes kept per stream
TRUNCATION_MARKER = "\n...[output truncated]"

_PLACEHOLDER = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


class TooShortSecretWarning(UserWarning):
    """A value below the minimum maskable length was not registered."""


class SecretStore:
    """Set of secret values that must never reach any output channel.

    Redaction replaces longest matches first and re-scans until no
    registered secret survives as a substring, so overlapping secrets
    cannot leave partial residue. Values shorter than
    ``MIN_SECRET_LENGTH`` are refused: masking 1-3 character strings
    would shred ordinary log text. Secrets are held in memory only.
    """

    def __init__(self, mask: str = DEFAULT_MASK):
        self.mask = mask
        self._secrets: set[str] = set()
        self._lock = threading.Lock()

    def register(self, value: str) -> bool:
        """Add ``value`` to the store; returns False when it was too short."""
        if not value:
            raise ValueError("cannot register an empty secret")
        if len(value) < MIN_SECRET_LENGTH:
            warnings.warn(
                f"secret of length {len(value)} not registered "
                f"(minimum {MIN_SECRET_LENGTH} characters)",
                TooShortSecretWarning,
                stacklevel=2,
            )
            return False
        with self._lock:
            self._secrets.add(value)
        return True

    def __len__(self) -> int:
        with self._lock:
            return len(self._secrets)

    def redact(self, text: str) -> str:
        """Replace every occurrence of every registered secret with the mask."""
        with self._lock:
            secrets = sorted(self._secrets, key=len, reverse=True)
        if not secrets:
            return text
        # With the default 3-char mask and >=4-char secrets each pass
        # strictly shrinks the text, so this terminates well before the cap.
        for _ in range(64):
            if not any(s in text for s in secrets):
                return text
            for s in secrets:
                text = text.replace(s, self.mask)
        # Pathological masks can keep synthesizing matches; drop them outright.
        while True:
            hit = next((s for s in secrets if s in text), None)
            if hit is None:
                return text
            text = text.replace(hit, "")


@dataclass(frozen=True)
class CommandSpec:
    """One child-process execution request.

    When ``use_shell`` is set, ``program`` holds the complete command line
    handed to the system shell and ``args`` must be empty.
    """

    program: str
    args: tuple[str, ...] = ()
    env_overrides: dict[str, str] = field(default_factory=dict)
    workdir: Path | None = None
    timeout: float | None = None  # seconds
    use_shell: bool = False

    def __post_init__(self):
        if not self.program:
            raise ValueError("program must be non-empty")
        if self.use_shell and self.args:
            raise ValueError("use_shell puts the whole command line in 'program'")
        object.__setattr__(self, "args", tuple(self.args))


@dataclass(frozen=True)
class ExecResult:
    """Captured outcome of one child execution; streams are fully drained."""

    exit_code: int
    stdout: str
    stderr: str
    duration_ms: int


class _StreamDrain(threading.Thread):
    """Consumes one child stream to EOF so the child never blocks on a full
    pipe buffer, keeping at most ``cap`` bytes."""

    def __init__(self, pipe, cap: int):
        super().__init__(daemon=True)
        self._pipe = pipe
        self._cap = cap
        self._buf = bytearray()
        self._truncated = False
        self.start()

    def run(self):
        while True:
            chunk = self._pipe.read(65536)
            if not chunk:
                break
            room = self._cap - len(self._buf)
            if room > 0:
                self._buf += chunk[:room]
            if len(chunk) > max(room, 0):
                self._truncated = True
        self._pipe.close()

    def text(self) -> str:
        decoded = bytes(self._buf).decode("utf-8", errors="replace")
        if self._truncated:
            return decoded + TRUNCATION_MARKER
        return decoded


def run(cmd: CommandSpec, *, stream_cap: int = STREAM_CAP) -> ExecResult:
    """Execute ``cmd`` and capture both output streams concurrently.

    Nonzero exit codes are returned, not raised; failure policy belongs to
    the caller. Spawn problems raise :class:`SpawnFailureError` and a
    timeout kills the child and raises :class:`TimeoutExceededError`.
    """
    if cmd.workdir is not None and not Path(cmd.workdir).is_dir():
        raise SpawnFailureError(f"working directory does not exist: {cmd.workdir}")
    env = None
    if cmd.env_overrides:
        env = dict(os.environ)
        env.update(cmd.env_overrides)
    argv = cmd.program if cmd.use_shell else [cmd.program, *cmd.args]
    start = time.monotonic()
    try:
        proc = subprocess.Popen(
            argv,
            shell=cmd.use_shell,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            cwd=str(cmd.workdir) if cmd.workdir else None,
            env=env,
        )
    except OSError as exc:
        raise SpawnFailureError(f"cannot spawn {cmd.program!r}: {exc}") from exc
    out_drain = _StreamDrain(proc.stdout, stream_cap)
    err_drain = _StreamDrain(proc.stderr, stream_cap)
    try:
        exit_code = proc.wait(timeout=cmd.timeout)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.wait()
        out_drain.join()
        err_drain.join()
        raise TimeoutExceededError(
            f"{cmd.program!r} exceeded timeout of {cmd.timeout}s and was killed"
        ) from None
    out_drain.join()
    err_drain.join()
    duration_ms = int((time.monotonic() - start) * 1000)
    return ExecResult(exit_code, out_drain.text(), err_drain.text(), duration_ms)


def resolve_credentials(
    template: str,
    bindings: dict[str, str],
    env: dict[str, str],
    store: SecretStore,
) -> str:
    """Substitute ``${NAME}`` placeholders with bound environment values.

    Every substituted value is registered with ``store`` so later log
    output masks it. Unbound placeholders and missing environment
    variables are reported by name.
    """
    names = list(dict.fromkeys(_PLACEHOLDER.findall(template)))
    unbound = [n for n in names if n not in bindings]
    if unbound:
        raise UnboundPlaceholderError(
            "unbound placeholder(s): " + ", ".join(unbound), names=unbound
        )
    for name in names:
        if bindings[name] not in env:
            raise MissingEnvVarError(
                f"environment variable {bindings[name]} (for placeholder {name}) is not set"
            )

    def _sub(match: re.Match) -> str:
        value = env[bindings[match.group(1)]]
        if value:
            store.register(value)
        return value

    return _PLACEHOLDER.sub(_sub, template)
