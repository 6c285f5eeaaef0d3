"""Central pipeline controller.

Loads the declarative pipeline configuration, runs the four stages
strictly sequentially (checkout, expand, unit-test, report), prints a
progress line at each stage boundary, contains stage failures, and
guarantees cleanup (scratch removal plus mainframe session close) exactly
once for every run outcome.
"""

from __future__ import annotations

import io
import os
import shlex
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import expander, mainframe, platform
from .errors import (
    CblPipeError,
    ConfigError,
    InternalError,
    ParseError,
    PipelineFailure,
    ValidationError,
)
from .shell import CommandSpec, SecretStore
from .shell import resolve_credentials
from .shell import run as run_command

SCRATCH_DIR_NAME = ".cblpipe"
SOURCE_SUFFIX = ".cbl"
EXPANDED_SUFFIX = ".expanded.cbl"

CONFIG_KEYS = {
    "source_dir",
    "test_dir",
    "copybook_store",
    "container_image",
    "compiler_cmd",
    "tool_versions",
    "secrets",
    "mainframe",
}
REQUIRED_KEYS = ("source_dir", "test_dir", "copybook_store")

PASSED = "passed"
FAILED = "failed"
UNSTABLE = "unstable"

STAGE_NAMES = ("checkout", "expand", "unit-test", "report")
PROGRESS_FORMAT = "==> [stage {n}/{total}] {name}"

FILE_PLACEHOLDER = "${FILE}"
COMPILER_RC_UNSTABLE = 4

_FLOATING_VERSIONS = frozenset({"latest", "stable", "edge", "current", "*", ""})


def _is_floating_version(version: str) -> bool:
    v = str(version).strip()
    return (
        v.lower() in _FLOATING_VERSIONS
        or "*" in v
        or v.startswith(("^", "~", ">", "<"))
        or v.lower().endswith(".x")
    )


@dataclass(frozen=True)
class SecretBinding:
    placeholder: str
    env_var: str


@dataclass
class PipelineConfig:
    """Declarative pipeline description (see README for the file schema).

    ``checkout_action`` is not a file key; it is a programmatic field with
    a documented default used when emitting CI workflows.
    """

    source_dir: Path
    test_dir: Path
    copybook_store: Path
    container_image: str | None = None
    compiler_cmd: str | None = None
    tool_versions: dict[str, str] = field(default_factory=dict)
    secrets: list[SecretBinding] = field(default_factory=list)
    mainframe: mainframe.MainframeConfig | None = None
    checkout_action: str = platform.DEFAULT_CHECKOUT_ACTION
    source_path: Path | None = None

    def compiler_template(self) -> str:
        return self.compiler_cmd or default_compiler_cmd()


def default_compiler_cmd() -> str:
    """Command template for the bundled mock compile+test harness."""
    return f"{shlex.quote(sys.executable)} -m cblpipe.compiler {FILE_PLACEHOLDER}"


@dataclass(frozen=True)
class StageResult:
    stage_name: str
    status: str
    duration_ms: int
    transcript: str
    started_ms: int
    ended_ms: int


@dataclass(frozen=True)
class PipelineReport:
    stages: tuple[StageResult, ...]
    overall: str
    metadata: platform.BuildMetadata | None
    total_duration_ms: int


def load_config(path) -> PipelineConfig:
    """Load and validate a pipeline configuration file.

    Relative paths resolve against the config file's directory. Every
    violated field is reported, not just the first.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        line = mark.line + 1 if mark else 0
        raise ParseError(f"{path}:{line}: {exc.problem or exc}") from exc
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if raw is None:
        raise ParseError(f"{path}: empty configuration file")
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: top-level structure must be a mapping")

    base = path.parent
    violations: list[str] = []

    for key in sorted(set(raw) - CONFIG_KEYS):
        violations.append(f"unknown key {key!r}")
    for key in REQUIRED_KEYS:
        if key not in raw:
            violations.append(f"missing required key {key!r}")

    def _dir_field(key: str) -> Path | None:
        value = raw.get(key)
        if value is None:
            return None
        resolved = (base / str(value)).resolve()
        if not resolved.is_dir():
            violations.append(f"{key}: directory does not exist: {resolved}")
        return resolved

    source_dir = _dir_field("source_dir")
    test_dir = _dir_field("test_dir")
    copybook_store = _dir_field("copybook_store")

    container_image = raw.get("container_image") or None
    compiler_cmd = raw.get("compiler_cmd") or None
    if compiler_cmd is not None and FILE_PLACEHOLDER not in compiler_cmd:
        violations.append(f"compiler_cmd: template must contain {FILE_PLACEHOLDER}")

    tool_versions: dict[str, str] = {}
    raw_versions = raw.get("tool_versions") or {}
    if not isinstance(raw_versions, dict):
        violations.append("tool_versions: must be a mapping of tool to version")
    else:
        for tool, version in raw_versions.items():
            if _is_floating_version(str(version)):
                violations.append(
                    f"tool_versions[{tool}]: floating version {version!r}; exact pins only"
                )
            tool_versions[str(tool)] = str(version)

    secrets: list[SecretBinding] = []
    raw_secrets = raw.get("secrets") or []
    if not isinstance(raw_secrets, list):
        violations.append("secrets: must be a list of {placeholder, env} entries")
    else:
        for i, entry in enumerate(raw_secrets):
            if (
                not isinstance(entry, dict)
                or not entry.get("placeholder")
                or not entry.get("env")
            ):
                violations.append(f"secrets[{i}]: needs 'placeholder' and 'env'")
                continue
            secrets.append(SecretBinding(str(entry["placeholder"]), str(entry["env"])))

    mf_config = None
    raw_mf = raw.get("mainframe")
    if raw_mf is not None:
        if not isinstance(raw_mf, dict):
            violations.append("mainframe: must be a mapping")
        else:
            missing = [k for k in ("store_root", "user", "password_env") if not raw_mf.get(k)]
            if missing:
                violations.append(f"mainframe: missing {', '.join(missing)}")
            else:
                mf_config = mainframe.MainframeConfig(
                    store_root=(base / str(raw_mf["store_root"])).resolve(),
                    user=str(raw_mf["user"]),
                    password_env=str(raw_mf["password_env"]),
                    latency_ms=int(raw_mf.get("latency_ms", 0)),
                )

    if violations:
        raise ValidationError(
            f"{path}: invalid pipeline config: " + "; ".join(violations),
            violations=violations,
        )
    return PipelineConfig(
        source_dir=source_dir,
        test_dir=test_dir,
        copybook_store=copybook_store,
        container_image=container_image,
        compiler_cmd=compiler_cmd,
        tool_versions=tool_versions,
        secrets=secrets,
        mainframe=mf_config,
        source_path=path,
    )


@dataclass
class RunContext:
    cfg: PipelineConfig
    backend: platform.BackendKind
    env: dict[str, str]
    workspace: Path
    scratch: Path
    reporter: platform.Reporter
    secrets: SecretStore
    source_files: list[Path] = field(default_factory=list)
    expanded_files: list[Path] = field(default_factory=list)
    session: mainframe.Session | None = None
    metadata: platform.BuildMetadata | None = None
    stage_results: list[StageResult] = field(default_factory=list)
    cleanup_runs: int = 0
    _cleaned: bool = False
    _transcript: list[str] = field(default_factory=list)
    _stage_unstable: bool = False

    def log(self, message: str) -> None:
        self._transcript.append(self.reporter.info(message))

    def log_unstable(self, message: str) -> None:
        self._transcript.append(self.reporter.unstable(message))
        self._stage_unstable = True


def run_stage(stage, ctx: RunContext) -> StageResult:
    """Run one stage, capturing its redacted transcript and duration.

    Domain failures are captured into the StageResult, never raised past
    the controller; anything else is an internal fault and propagates.
    """
    name, body = stage
    ctx._transcript = []
    ctx._stage_unstable = False
    started = platform.monotonic_ms()
    try:
        body(ctx)
        status = UNSTABLE if ctx._stage_unstable else PASSED
    except CblPipeError as exc:
        line = ctx.secrets.redact(f"stage '{name}' failed: {exc}")
        print(line, file=ctx.reporter.err)
        ctx._transcript.append(line)
        status = FAILED
    ended = platform.monotonic_ms()
    result = StageResult(
        stage_name=name,
        status=status,
        duration_ms=ended - started,
        transcript="\n".join(ctx._transcript),
        started_ms=started,
        ended_ms=ended,
    )
    ctx.stage_results.append(result)
    return result


def _stage_checkout(ctx: RunContext) -> None:
    ctx.metadata = platform.get_build_metadata(ctx.backend, ctx.workspace, ctx.env)
    ctx.log(f"commit: {ctx.metadata.commit_ref}")
    ctx.log(f"repository: {ctx.metadata.repository_id}")
    ctx.log(f"branch: {ctx.metadata.branch}")
    ctx.log(f"metadata source: {ctx.metadata.source.value}")
    if ctx.cfg.mainframe is not None:
        ctx.session = mainframe.connect(ctx.cfg.mainframe, ctx.env, secrets=ctx.secrets)
        ctx.log(f"mainframe session opened (user={ctx.cfg.mainframe.user})")


def _stage_expand(ctx: RunContext) -> None:
    store = expander.CopybookStore(ctx.cfg.copybook_store)
    out_dir = ctx.scratch / "expanded"
    out_dir.mkdir(parents=True, exist_ok=True)
    for source_path in ctx.source_files:
        src = expander.FixedFormatSource.read(source_path)
        result = expander.expand(src, store)
        dest = out_dir / (source_path.stem + EXPANDED_SUFFIX)
        dest.write_text("\n".join(result.lines) + "\n", encoding="utf-8")
        ctx.expanded_files.append(dest)
        used = ", ".join(sorted(result.copybooks_used)) or "none"
        ctx.log(f"expanded {source_path.name} ({len(result.lines)} lines); copybooks used: {used}")


def _stage_unit_test(ctx: RunContext) -> None:
    template_tokens = shlex.split(ctx.cfg.compiler_template())
    bindings = {b.placeholder: b.env_var for b in ctx.cfg.secrets}
    failures: list[str] = []
    for expanded in ctx.expanded_files:
        argv = []
        for token in template_tokens:
            token = token.replace(FILE_PLACEHOLDER, str(expanded))
            argv.append(resolve_credentials(token, bindings, ctx.env, ctx.secrets))
        ctx.log("compile+test: " + " ".join(argv))
        result = run_command(CommandSpec(argv[0], tuple(argv[1:])))
        for line in (result.stdout + result.stderr).splitlines():
            if line.strip():
                ctx.log(f"  {line}")
        if result.exit_code == 0:
            ctx.log(f"{expanded.name}: tests passed")
        elif result.exit_code == COMPILER_RC_UNSTABLE:
            ctx.log_unstable(f"{expanded.name}: completed with warnings")
        else:
            failures.append(expanded.name)
    if failures:
        raise PipelineFailure("unit tests failed for: " + ", ".join(failures))


def _stage_report(ctx: RunContext) -> None:
    for result in ctx.stage_results:
        ctx.log(f"stage {result.stage_name}: {result.status}")
    ctx.log(f"sources processed: {len(ctx.expanded_files)}")
    if ctx.session is not None:
        jcl = "//CBLPIPE JOB (REPORT)\n//* PIPELINE STATUS NOTIFICATION\n"
        job = mainframe.submit_job(ctx.session, jcl)
        ctx.log(f"report job {job.job_id} completed with rc={job.return_code}")


_STAGES = (
    ("checkout", _stage_checkout),
    ("expand", _stage_expand),
    ("unit-test", _stage_unit_test),
    ("report", _stage_report),
)


def cleanup(ctx: RunContext) -> None:
    """Remove the run's scratch tree and close any open mainframe session.

    Idempotent and callable in any state; its own failures are logged as
    unstable so they never mask the original failure.
    """
    if ctx._cleaned:
        return
    ctx._cleaned = True
    ctx.cleanup_runs += 1
    if ctx.session is not None:
        mainframe.close(ctx.session)
    if ctx.scratch.exists():
        try:
            shutil.rmtree(ctx.scratch)
        except OSError as exc:
            ctx.reporter.unstable(f"cleanup could not remove scratch: {exc}")


def run_pipeline(
    cfg: PipelineConfig,
    backend: platform.BackendKind,
    env: dict[str, str] | None = None,
    workspace=None,
    out=None,
    err=None,
    scratch=None,
    secret_store: SecretStore | None = None,
) -> PipelineReport:
    """Run all stages strictly sequentially and return the report.

    A stage failure halts subsequent stages and yields a failed report;
    internal faults raise :class:`InternalError` (exit code 3 at the CLI).
    Cleanup runs exactly once for every outcome.
    """
    env = dict(env) if env is not None else dict(os.environ)
    workspace = Path(workspace) if workspace is not None else Path.cwd()
    store = secret_store if secret_store is not None else SecretStore()
    reporter = platform.Reporter(out=out, err=err, store=store)
    scratch_root = Path(scratch) if scratch is not None else workspace / SCRATCH_DIR_NAME

    source_files = sorted(
        p for p in cfg.source_dir.glob(f"*{SOURCE_SUFFIX}")
        if not p.name.endswith(EXPANDED_SUFFIX)
    )
    if not source_files:
        raise ConfigError(
            f"source_dir contains no COBOL sources (*{SOURCE_SUFFIX}): {cfg.source_dir}"
        )

    ctx = RunContext(
        cfg=cfg,
        backend=backend,
        env=env,
        workspace=workspace,
        scratch=scratch_root,
        reporter=reporter,
        secrets=store,
        source_files=source_files,
    )
    started = platform.monotonic_ms()
    halted_at: str | None = None
    try:
        for n, stage in enumerate(_STAGES, start=1):
            reporter.info(PROGRESS_FORMAT.format(n=n, total=len(_STAGES), name=stage[0]))
            try:
                result = run_stage(stage, ctx)
            except Exception as exc:
                raise InternalError(f"internal fault in stage '{stage[0]}': {exc}") from exc
            if result.status == FAILED:
                halted_at = stage[0]
                break
    finally:
        cleanup(ctx)
    total = platform.monotonic_ms() - started
    overall = FAILED if any(r.status == FAILED for r in ctx.stage_results) else PASSED
    if halted_at:
        reporter.info(f"pipeline failed at stage '{halted_at}'")
    else:
        reporter.info(f"pipeline {overall} ({len(ctx.stage_results)} stages)")
    return PipelineReport(
        stages=tuple(ctx.stage_results),
        overall=overall,
        metadata=ctx.metadata,
        total_duration_ms=total,
    )


def run_quiet(cfg: PipelineConfig, backend: platform.BackendKind, **kwargs) -> PipelineReport:
    """Run with output captured into buffers; used by the benchmark harness."""
    return run_pipeline(cfg, backend, out=io.StringIO(), err=io.StringIO(), **kwargs)
