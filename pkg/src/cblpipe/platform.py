"""Translation layer between the pipeline and the host CI platform.

Every CI-platform environment key is read here and nowhere else, so a
platform change touches only this module. Three backends are supported:
``github-actions`` (metadata from the runner environment), ``env-file``
(metadata from a KEY=VALUE file named by ``CBL_ENV_FILE``) and ``local``
(metadata queried from the version-control tool).
"""

from __future__ import annotations

import enum
import re
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import (
    MetadataUnavailableError,
    MissingImageError,
    ParseError,
    PipelineHalt,
    ValidationError,
)
from .shell import CommandSpec, SecretStore, run

# Environment keys consumed by the github-actions backend.
ENV_CI_FLAG = "GITHUB_ACTIONS"
ENV_COMMIT = "GITHUB_SHA"
ENV_REPOSITORY = "GITHUB_REPOSITORY"
ENV_BRANCH = "GITHUB_REF_NAME"

# Key naming the env-file backend's metadata file, and the keys inside it.
ENV_FILE_KEY = "CBL_ENV_FILE"
FILE_COMMIT = "CBL_COMMIT_REF"
FILE_REPOSITORY = "CBL_REPOSITORY_ID"
FILE_BRANCH = "CBL_BRANCH"

# Documented default for the pinned checkout action; override via
# PipelineConfig.checkout_action. Must be an exact version, never a
# mutable tag.
DEFAULT_CHECKOUT_ACTION = "actions/checkout@v4.2.2"

_PINNED_SHA = re.compile(r"^[0-9a-f]{40}$")
_PINNED_TAG = re.compile(r"^v?\d+\.\d+\.\d+$")


class BackendKind(enum.Enum):
    LOCAL = "local"
    GITHUB = "github-actions"
    ENV_FILE = "env-file"


class MetadataSource(enum.Enum):
    ENVIRONMENT = "environment"
    VERSION_CONTROL = "version-control-query"


@dataclass(frozen=True)
class BuildMetadata:
    """Commit/repository/branch triple plus which path supplied it."""

    commit_ref: str
    repository_id: str
    branch: str
    source: MetadataSource

    def __post_init__(self):
        if not self.commit_ref:
            raise ValueError("commit_ref must be non-empty")
        if (
            self.source is MetadataSource.ENVIRONMENT
            and self.repository_id.count("/") != 1
        ):
            raise ValueError(
                f"environment-sourced repository id {self.repository_id!r} "
                "must be of the form owner/name"
            )


class Level(enum.Enum):
    INFO = "info"
    ERROR = "error"
    UNSTABLE = "unstable"


@dataclass(frozen=True)
class StatusEvent:
    level: Level
    message: str
    timestamp_ms: int


def monotonic_ms() -> int:
    return time.monotonic_ns() // 1_000_000


def detect_backend(env: dict[str, str]) -> BackendKind:
    """Pick the backend for an environment snapshot.

    Precedence is github-actions > env-file > local, so a hybrid
    environment resolves deterministically.
    """
    if env.get(ENV_CI_FLAG) == "true":
        return BackendKind.GITHUB
    if env.get(ENV_FILE_KEY):
        return BackendKind.ENV_FILE
    return BackendKind.LOCAL


def load_env_file(path: Path) -> dict[str, str]:
    """Parse a KEY=VALUE file (UTF-8, one pair per line, ``#`` comments)."""
    entries: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise MetadataUnavailableError(f"cannot read environment file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected KEY=VALUE")
        key, _, value = line.partition("=")
        entries[key.strip()] = value.strip()
    return entries


def _git(workspace: Path, *args: str) -> str:
    result = run(CommandSpec("git", args, workdir=Path(workspace)))
    if result.exit_code != 0:
        raise MetadataUnavailableError(
            f"git {' '.join(args)} failed: {result.stderr.strip() or 'nonzero exit'}"
        )
    return result.stdout.strip()


def _repository_id_from_git(workspace: Path) -> str:
    """Derive owner/name from the origin remote, else the directory name."""
    result = run(CommandSpec("git", ("config", "--get", "remote.origin.url"), workdir=Path(workspace)))
    url = result.stdout.strip()
    if result.exit_code == 0 and url:
        if url.endswith(".git"):
            url = url[: -len(".git")]
        # host:owner/name and scheme://host/owner/name both end owner/name
        tail = url.replace(":", "/").rstrip("/").split("/")
        if len(tail) >= 2 and tail[-2] and tail[-1]:
            return f"{tail[-2]}/{tail[-1]}"
    return Path(workspace).resolve().name


def get_build_metadata(
    backend: BackendKind, workspace: Path, env: dict[str, str]
) -> BuildMetadata:
    """Resolve build metadata via the backend's preferred path.

    The github-actions and env-file backends read their environment keys;
    when those are incomplete the version-control tool is queried instead,
    and the ``source`` field records which path was taken.
    """
    try:
        if backend is BackendKind.GITHUB:
            if all(k in env for k in (ENV_COMMIT, ENV_REPOSITORY, ENV_BRANCH)):
                return BuildMetadata(
                    commit_ref=env[ENV_COMMIT],
                    repository_id=env[ENV_REPOSITORY],
                    branch=env[ENV_BRANCH],
                    source=MetadataSource.ENVIRONMENT,
                )
        elif backend is BackendKind.ENV_FILE:
            path = env.get(ENV_FILE_KEY)
            if path:
                entries = load_env_file(Path(path))
                if all(k in entries for k in (FILE_COMMIT, FILE_REPOSITORY, FILE_BRANCH)):
                    return BuildMetadata(
                        commit_ref=entries[FILE_COMMIT],
                        repository_id=entries[FILE_REPOSITORY],
                        branch=entries[FILE_BRANCH],
                        source=MetadataSource.ENVIRONMENT,
                    )
    except ValueError as exc:
        raise MetadataUnavailableError(str(exc)) from exc

    try:
        commit = _git(workspace, "rev-parse", "HEAD")
        branch = _git(workspace, "rev-parse", "--abbrev-ref", "HEAD")
    except (MetadataUnavailableError, OSError) as exc:
        raise MetadataUnavailableError(
            "neither CI environment keys nor a git repository provide build "
            f"metadata for {workspace}: {exc}"
        ) from exc
    return BuildMetadata(
        commit_ref=commit,
        repository_id=_repository_id_from_git(workspace),
        branch=branch,
        source=MetadataSource.VERSION_CONTROL,
    )


def report(event: StatusEvent, out=None, err=None, store: SecretStore | None = None) -> str:
    """Emit a status event to the output channels.

    info lines go to standard output; unstable lines go to standard output
    with an ``[UNSTABLE]`` prefix and the run continues; error lines go to
    standard error and then :class:`PipelineHalt` fires the caller's
    termination contract (exit code 1). Every line is redacted first.
    """
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    if event.level is Level.UNSTABLE:
        line = "[UNSTABLE] " + event.message
    else:
        line = event.message
    if store is not None:
        line = store.redact(line)
    if event.level is Level.ERROR:
        print(line, file=err)
        raise PipelineHalt(line)
    print(line, file=out)
    return line


class Reporter:
    """Routes status events to fixed output channels with redaction."""

    def __init__(self, out=None, err=None, store: SecretStore | None = None):
        self.out = out if out is not None else sys.stdout
        self.err = err if err is not None else sys.stderr
        self.store = store

    def _emit(self, level: Level, message: str) -> str:
        return report(
            StatusEvent(level, message, monotonic_ms()), self.out, self.err, self.store
        )

    def info(self, message: str) -> str:
        return self._emit(Level.INFO, message)

    def unstable(self, message: str) -> str:
        return self._emit(Level.UNSTABLE, message)

    def error(self, message: str) -> None:
        self._emit(Level.ERROR, message)


def require_pinned_action(ref: str) -> None:
    """Reject action references without an exact version.

    Accepts a 40-hex commit or an exact ``vX.Y.Z``/``X.Y.Z`` tag; mutable
    tags (``v4``, ``latest``, branch names) are refused.
    """
    _, at, version = ref.rpartition("@")
    if not at or not (_PINNED_SHA.match(version) or _PINNED_TAG.match(version)):
        raise ValidationError(
            f"action reference {ref!r} is not pinned to an exact version"
        )


def emit_workflow(config, checkout_action: str | None = None) -> str:
    """Emit the CI workflow document (YAML, UTF-8, LF) for a pipeline config.

    The document has two parts: environment setup (container image,
    registry authentication, secret injection from the platform's secure
    store) and the steps (pinned checkout, safe-directory marking,
    controller execution, and a cleanup step guarded to run only on
    failure).

    ``config`` is an :class:`cblpipe.engine.PipelineConfig`; any object
    with ``container_image``, ``secrets``, ``checkout_action`` and
    ``source_path`` attributes works.
    """
    image = getattr(config, "container_image", None)
    if not image:
        raise MissingImageError("pipeline config declares no container image")
    action = checkout_action or getattr(config, "checkout_action", DEFAULT_CHECKOUT_ACTION)
    require_pinned_action(action)

    secret_env = {}
    for binding in getattr(config, "secrets", []):
        secret_env[binding.env_var] = "${{ secrets.%s }}" % binding.env_var

    source_path = getattr(config, "source_path", None)
    config_name = Path(source_path).name if source_path else "pipeline.yaml"

    job: dict = {
        "runs-on": "ubuntu-latest",
        "container": {
            "image": image,
            "credentials": {
                "username": "${{ secrets.REGISTRY_USERNAME }}",
                "password": "${{ secrets.REGISTRY_PASSWORD }}",
            },
        },
    }
    if secret_env:
        job["env"] = secret_env
    job["steps"] = [
        {"name": "check out repository", "uses": action},
        {
            "name": "mark workspace as a safe git directory",
            "run": 'git config --global --add safe.directory "$GITHUB_WORKSPACE"',
        },
        {
            "name": "run pipeline controller",
            "run": f"cblpipe run --config {config_name}",
        },
        {
            "name": "clean up after failure",
            "if": "failure()",
            "run": "rm -rf .cblpipe",
        },
    ]
    document = {
        "name": "cobol-pipeline",
        "on": ["push", "workflow_dispatch"],
        "jobs": {"pipeline": job},
    }
    return yaml.safe_dump(document, sort_keys=False, default_flow_style=False)
