"""Container recipe generation, size-minimization linting, and toolchain
verification.

The linter encodes six rules distilled from the image size-reduction
sequence this project documents (see README): R1 non-minimal base image,
R2 package cache not purged, R3 mergeable consecutive RUN instructions,
R4 build dependencies installed but never removed, R5 npm cache not
cleaned after installs, R6 unpinned versions. Rules R1-R5 carry the index
of the size-reduction step they encode (``size_step``); R6 comes from the
version-pinning policy and carries none.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import shell
from .errors import RecipeParseError, SpawnFailureError, UnpinnedDependencyError, ValidationError

INSTRUCTIONS = {"FROM", "RUN", "COPY", "ENV", "ENTRYPOINT"}

DEFAULT_BASE = "alpine:3.20.3"
BUILD_DEPS_GROUP = ".build-deps"
# Pinned so the generated recipe satisfies its own pinning rule.
BUILD_BASE_PIN = "build-base=0.5-r3"

# Packages that are build-time only; installing one without an apk del in
# the same instruction trips R4.
BUILD_PACKAGES = frozenset(
    {"build-base", "gcc", "g++", "make", "cmake", "musl-dev", "libc-dev", "linux-headers"}
)

# Dependencies installed via npm instead of apk: explicit "npm:" prefix or
# a well-known npm-distributed tool name.
NPM_PACKAGES = frozenset({"zowe-cli", "zowe-client", "cobol-expander"})

SIZE_STEP = {"R1": 2, "R2": 6, "R3": 5, "R4": 7, "R5": 11, "R6": None}

_FLOATING_VERSIONS = frozenset({"latest", "stable", "edge", "current", ""})
_EXCERPT_LIMIT = 200


def _is_floating(version: str) -> bool:
    v = version.strip()
    return (
        v.lower() in _FLOATING_VERSIONS
        or "*" in v
        or v.startswith(("^", "~", ">", "<"))
        or v.lower().endswith(".x")
    )


@dataclass(frozen=True)
class DependencySpec:
    """One toolchain dependency with its exact version pin and the command
    that proves it is installed."""

    name: str
    version: str
    version_cmd: tuple[str, ...]
    expected_pattern: str

    def __post_init__(self):
        object.__setattr__(self, "version_cmd", tuple(self.version_cmd))
        if not self.name:
            raise ValueError("dependency name must be non-empty")
        if not self.version_cmd:
            raise ValueError(f"{self.name}: version_cmd must be non-empty")
        if _is_floating(self.version):
            raise UnpinnedDependencyError(
                f"dependency {self.name} has floating version {self.version!r}"
            )


@dataclass(frozen=True)
class RecipeText:
    """Container-build instructions (FROM/RUN/COPY/ENV/ENTRYPOINT subset)."""

    lines: tuple[str, ...]
    base_image: str

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple(self.lines))

    @property
    def text(self) -> str:
        return "\n".join(self.lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RecipeText":
        lines = tuple(text.splitlines())
        instructions = _parse_instructions(lines)
        base = next(
            (ins.argument.split()[0] for ins in instructions if ins.keyword == "FROM"),
            None,
        )
        if base is None:
            raise RecipeParseError("recipe has no FROM instruction")
        return cls(lines, base)


@dataclass(frozen=True)
class LintFinding:
    rule_id: str
    line: int
    message: str
    size_step: int | None


@dataclass(frozen=True)
class _Instruction:
    keyword: str
    argument: str
    line: int  # 1-based first physical line


def _parse_instructions(lines) -> list[_Instruction]:
    """Join backslash continuations and split into instruction records."""
    instructions: list[_Instruction] = []
    pending: list[str] = []
    start_line = 0
    for idx, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if not pending:
            if not stripped or stripped.startswith("#"):
                continue
            start_line = idx
        if stripped.endswith("\\"):
            pending.append(stripped[:-1].strip())
            continue
        pending.append(stripped)
        full = " ".join(pending)
        pending = []
        keyword, _, argument = full.partition(" ")
        keyword = keyword.upper()
        if keyword not in INSTRUCTIONS:
            raise RecipeParseError(
                f"line {start_line}: unsupported instruction {keyword!r}"
            )
        instructions.append(_Instruction(keyword, argument.strip(), start_line))
    if pending:
        raise RecipeParseError(f"line {start_line}: dangling continuation")
    return instructions


def _is_npm_dep(name: str) -> bool:
    return name.startswith("npm:") or name in NPM_PACKAGES


def generate_recipe(deps: list[DependencySpec], base: str = DEFAULT_BASE) -> RecipeText:
    """Generate a pinned, minimal container recipe for a toolchain.

    Installs are grouped into minimal RUN instructions, the package cache
    is purged in the same instruction that populates it, and build-only
    dependencies are removed in-instruction. The output passes
    :func:`lint_recipe` cleanly.
    """
    if not deps:
        raise ValidationError("dependency list is empty")
    _require_pinned_image(base)
    apk_deps = [d for d in deps if not _is_npm_dep(d.name)]
    npm_deps = [d for d in deps if _is_npm_dep(d.name)]

    lines = [f"FROM {base}", "ENV LANG=C.UTF-8"]
    apk_cmds = [f"apk add --no-cache --virtual {BUILD_DEPS_GROUP} {BUILD_BASE_PIN}"]
    if apk_deps:
        pinned = " ".join(f"{d.name}={d.version}" for d in apk_deps)
        apk_cmds.append(f"apk add --no-cache {pinned}")
    apk_cmds.append(f"apk del {BUILD_DEPS_GROUP}")
    apk_cmds.append("rm -rf /var/cache/apk/*")
    lines.append("RUN " + apk_cmds[0] + " \\")
    lines.extend(f" && {cmd} \\" for cmd in apk_cmds[1:-1])
    lines.append(f" && {apk_cmds[-1]}")
    if npm_deps:
        pinned = " ".join(
            f"{d.name.removeprefix('npm:')}@{d.version}" for d in npm_deps
        )
        lines.append(f"RUN npm install -g {pinned} && npm cache clean --force")
    lines.append('ENTRYPOINT ["/bin/sh"]')
    return RecipeText(tuple(lines), base)


def _require_pinned_image(ref: str) -> None:
    if "@" in ref:  # digest-pinned
        return
    _, sep, tag = ref.partition(":")
    if not sep or _is_floating(tag) or not any(ch.isdigit() for ch in tag):
        raise UnpinnedDependencyError(f"image reference {ref!r} is not pinned")


def _shell_segments(argument: str) -> list[list[str]]:
    return [seg.split() for seg in re.split(r"&&|;", argument) if seg.strip()]


def _subcommand_index(segment: list[str], program: str, subcommands: tuple[str, ...]) -> int | None:
    for i in range(len(segment) - 1):
        if segment[i] == program and segment[i + 1] in subcommands:
            return i + 2
    return None


def _apk_add_packages(segment: list[str]) -> list[str] | None:
    """Package tokens of an ``apk add`` segment (None when the segment is
    not an apk add), skipping flags and the virtual group name."""
    start = _subcommand_index(segment, "apk", ("add",))
    if start is None:
        return None
    packages = []
    skip_next = False
    for token in segment[start:]:
        if skip_next:
            skip_next = False
            continue
        if token == "--virtual":
            skip_next = True
            continue
        if token.startswith("-"):
            continue
        packages.append(token)
    return packages


def _npm_install_packages(segment: list[str]) -> list[str] | None:
    start = _subcommand_index(segment, "npm", ("install", "i", "ci"))
    if start is None:
        return None
    return [t for t in segment[start:] if not t.startswith("-")]


def lint_recipe(recipe: RecipeText) -> list[LintFinding]:
    """Check a recipe against the six minimization rules.

    Findings are deterministic and ordered by (line, rule id).
    """
    instructions = _parse_instructions(recipe.lines)
    findings: list[LintFinding] = []

    def add(rule: str, line: int, message: str) -> None:
        findings.append(LintFinding(rule, line, message, SIZE_STEP[rule]))

    consecutive_runs = 0
    for ins in instructions:
        if ins.keyword == "FROM":
            image = ins.argument.split()[0]
            if "alpine" not in image.split(":")[0].split("@")[0]:
                add("R1", ins.line, f"base image {image!r} is not a minimal alpine base")
            if "@" not in image:
                _, sep, tag = image.partition(":")
                if not sep or _is_floating(tag) or not any(c.isdigit() for c in tag):
                    add("R6", ins.line, f"base image {image!r} has no exact version pin")
        if ins.keyword != "RUN":
            consecutive_runs = 0
            continue
        consecutive_runs += 1
        if consecutive_runs > 2:
            add(
                "R3",
                ins.line,
                "more than 2 consecutive RUN instructions; merge them to avoid extra layers",
            )
        segments = _shell_segments(ins.argument)
        apk_adds = [pkgs for seg in segments if (pkgs := _apk_add_packages(seg)) is not None]
        has_apk_add = bool(apk_adds)
        apk_packages = [pkg for pkgs in apk_adds for pkg in pkgs]
        has_apk_del = any(_subcommand_index(seg, "apk", ("del",)) is not None for seg in segments)
        has_cache_rm = "rm -rf /var/cache/apk" in ins.argument
        if has_apk_add:
            if not has_cache_rm:
                add(
                    "R2",
                    ins.line,
                    "apk install without an explicit cache delete (rm -rf /var/cache/apk/*) "
                    "in the same instruction",
                )
            installs_build_deps = any(
                pkg.split("=")[0] in BUILD_PACKAGES for pkg in apk_packages
            ) or "--virtual" in ins.argument
            if installs_build_deps and not has_apk_del:
                add(
                    "R4",
                    ins.line,
                    "build dependencies installed but never removed (no apk del in "
                    "the same instruction)",
                )
            for pkg in apk_packages:
                if "=" not in pkg:
                    add("R6", ins.line, f"apk package {pkg!r} has no exact version pin")
        npm_installs = [pkgs for seg in segments if (pkgs := _npm_install_packages(seg)) is not None]
        npm_packages = [pkg for pkgs in npm_installs for pkg in pkgs]
        if npm_installs:
            if "npm cache clean" not in ins.argument:
                add(
                    "R5",
                    ins.line,
                    "npm install without npm cache clean in the same instruction",
                )
            for pkg in npm_packages:
                if pkg.rfind("@") <= 0:
                    add("R6", ins.line, f"npm package {pkg!r} has no exact version pin")
    findings.sort(key=lambda f: (f.line, f.rule_id))
    return findings


@dataclass(frozen=True)
class DependencyCheck:
    name: str
    version: str
    passed: bool
    output: str


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple[DependencyCheck, ...]
    warnings: tuple[str, ...] = ()

    @property
    def overall(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_dict(self) -> dict:
        return {
            "overall": "pass" if self.overall else "fail",
            "checks": [
                {
                    "name": c.name,
                    "version": c.version,
                    "result": "pass" if c.passed else "fail",
                    "output": c.output,
                }
                for c in self.checks
            ],
            "warnings": list(self.warnings),
        }


def verify_tools(deps: list[DependencySpec], runner=None) -> VerificationReport:
    """Run each dependency's version command and match its output.

    A dependency passes iff the command exits 0 and the combined output
    matches ``expected_pattern``. Failures are report content, never
    exceptions; an empty dependency list passes vacuously with a warning.
    """
    run = runner or shell.run
    warnings: list[str] = []
    if not deps:
        warnings.append("no dependencies configured; verification passes vacuously")
    checks: list[DependencyCheck] = []
    for dep in deps:
        try:
            result = run(shell.CommandSpec(dep.version_cmd[0], tuple(dep.version_cmd[1:])))
        except SpawnFailureError as exc:
            checks.append(DependencyCheck(dep.name, dep.version, False, str(exc)))
            continue
        combined = (result.stdout + result.stderr).strip()
        excerpt = " ".join(combined.split())[:_EXCERPT_LIMIT]
        passed = result.exit_code == 0 and re.search(dep.expected_pattern, combined) is not None
        checks.append(DependencyCheck(dep.name, dep.version, passed, excerpt))
    return VerificationReport(tuple(checks), tuple(warnings))


def format_verification(report: VerificationReport) -> str:
    lines = []
    for warning in report.warnings:
        lines.append(f"WARNING: {warning}")
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        lines.append(f"{status}  {check.name} {check.version}  {check.output}")
    lines.append(f"overall: {'PASS' if report.overall else 'FAIL'}")
    return "\n".join(lines)
