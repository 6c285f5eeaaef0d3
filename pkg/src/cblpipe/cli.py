"""cblpipe command-line interface.

Subcommands: run, expand, verify-image, lint-recipe, gen-workflow, bench.
Exit codes: 0 success, 1 pipeline failure, 2 configuration/usage error,
3 internal error. All output passes through the secret store.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import bench, engine, expander, image, platform
from .errors import (
    CblPipeError,
    ConfigError,
    EXIT_INTERNAL_ERROR,
    EXIT_OK,
    EXIT_PIPELINE_FAILURE,
)
from .shell import SecretStore


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cblpipe",
        description="Portable COBOL CI/CD pipeline engine",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    run_p = sub.add_parser("run", help="run the pipeline described by a config file")
    run_p.add_argument("--config", required=True, help="pipeline config file (YAML)")
    run_p.add_argument(
        "--backend",
        choices=["auto", "local", "github"],
        default="auto",
        help="CI backend (default: auto-detect from the environment)",
    )
    run_p.add_argument(
        "--scratch",
        default=None,
        help="scratch directory (default: <cwd>/.cblpipe)",
    )

    expand_p = sub.add_parser("expand", help="expand copybooks in one COBOL source")
    expand_p.add_argument("source", help="fixed-format COBOL source file")
    expand_p.add_argument(
        "--copybook-dir", required=True, help="copybook store root directory"
    )
    expand_p.add_argument(
        "--out",
        default=None,
        help="output path (default: <name>.expanded.cbl beside the source)",
    )

    verify_p = sub.add_parser(
        "verify-image", help="verify the toolchain by running version commands"
    )
    verify_p.add_argument(
        "--deps", required=True, help="dependency list (JSON file, see README)"
    )
    verify_p.add_argument(
        "--json", default=None, help="also write the report as JSON to this path"
    )

    lint_p = sub.add_parser("lint-recipe", help="lint a container recipe file")
    lint_p.add_argument("recipe", help="Containerfile-style recipe to lint")

    gen_p = sub.add_parser("gen-workflow", help="emit the CI workflow document")
    gen_p.add_argument("--config", required=True, help="pipeline config file (YAML)")
    gen_p.add_argument("--out", default=None, help="output path (default: stdout)")

    bench_p = sub.add_parser("bench", help="benchmark the pipeline per install mode")
    bench_p.add_argument("--config", required=True, help="pipeline config file (YAML)")
    bench_p.add_argument(
        "--mode",
        choices=["prebuilt", "runtime-install", "both"],
        default="both",
        help="install mode to benchmark (default: both, with a comparison)",
    )
    bench_p.add_argument(
        "--iterations", type=int, default=5, help="runs per mode (default: 5)"
    )
    bench_p.add_argument(
        "--install-delay",
        action="append",
        default=[],
        metavar="NAME=MS",
        help="simulated install delay applied in runtime-install mode (repeatable)",
    )
    bench_p.add_argument(
        "--json", default=None, help="also write the report as JSON to this path"
    )
    return parser


def _pick_backend(choice: str, env: dict[str, str]) -> platform.BackendKind:
    if choice == "local":
        return platform.BackendKind.LOCAL
    if choice == "github":
        return platform.BackendKind.GITHUB
    return platform.detect_backend(env)


def _cmd_run(args, env, store) -> int:
    cfg = engine.load_config(args.config)
    backend = _pick_backend(args.backend, env)
    report = engine.run_pipeline(
        cfg,
        backend,
        env=env,
        workspace=Path.cwd(),
        scratch=args.scratch,
        secret_store=store,
    )
    return EXIT_OK if report.overall == engine.PASSED else EXIT_PIPELINE_FAILURE


def _cmd_expand(args, env, store) -> int:
    source_path = Path(args.source)
    if not source_path.is_file():
        raise ConfigError(f"source file not found: {source_path}")
    copybook_dir = Path(args.copybook_dir)
    if not copybook_dir.is_dir():
        raise ConfigError(f"copybook directory not found: {copybook_dir}")
    src = expander.FixedFormatSource.read(source_path)
    result = expander.expand(src, expander.CopybookStore(copybook_dir))
    out_path = Path(args.out) if args.out else expander.expanded_output_path(source_path)
    out_path.write_text("\n".join(result.lines) + "\n", encoding="utf-8")
    used = ", ".join(sorted(result.copybooks_used)) or "none"
    print(store.redact(f"wrote {out_path} ({len(result.lines)} lines; copybooks: {used})"))
    return EXIT_OK


def _load_deps(path: Path) -> list[image.DependencySpec]:
    try:
        entries = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read dependency file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(entries, list):
        raise ConfigError(f"{path}: expected a JSON list of dependency records")
    deps = []
    for i, entry in enumerate(entries):
        try:
            deps.append(
                image.DependencySpec(
                    name=entry["name"],
                    version=entry["version"],
                    version_cmd=tuple(entry["version_cmd"]),
                    expected_pattern=entry["expected_pattern"],
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: dependency entry {i}: {exc}") from exc
    return deps


def _cmd_verify_image(args, env, store) -> int:
    deps = _load_deps(Path(args.deps))
    report = image.verify_tools(deps)
    print(store.redact(image.format_verification(report)))
    if args.json:
        Path(args.json).write_text(
            json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
    return EXIT_OK if report.overall else EXIT_PIPELINE_FAILURE


def _cmd_lint_recipe(args, env, store) -> int:
    recipe_path = Path(args.recipe)
    try:
        text = recipe_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read recipe file {recipe_path}: {exc}") from exc
    findings = image.lint_recipe(image.RecipeText.from_text(text))
    for finding in findings:
        suffix = (
            f" [size-reduction step {finding.size_step}]"
            if finding.size_step is not None
            else ""
        )
        print(store.redact(f"{recipe_path}:{finding.line}: {finding.rule_id}: {finding.message}{suffix}"))
    if findings:
        print(f"{len(findings)} finding(s)")
        return EXIT_PIPELINE_FAILURE
    print("no findings")
    return EXIT_OK


def _cmd_gen_workflow(args, env, store) -> int:
    cfg = engine.load_config(args.config)
    document = platform.emit_workflow(cfg)
    if args.out:
        Path(args.out).write_text(document, encoding="utf-8")
        print(store.redact(f"wrote {args.out}"))
    else:
        sys.stdout.write(document)
    return EXIT_OK


def _parse_install_delays(entries: list[str]) -> tuple[tuple[str, int], ...]:
    delays = []
    for entry in entries:
        name, sep, value = entry.partition("=")
        if not sep or not name:
            raise ConfigError(f"--install-delay expects NAME=MS, got {entry!r}")
        try:
            delays.append((name, int(value)))
        except ValueError as exc:
            raise ConfigError(f"--install-delay {entry!r}: delay must be an integer") from exc
    return tuple(delays)


def _cmd_bench(args, env, store) -> int:
    cfg = engine.load_config(args.config)
    delays = _parse_install_delays(args.install_delay)
    modes = (
        [bench.MODE_PREBUILT, bench.MODE_RUNTIME_INSTALL]
        if args.mode == "both"
        else [args.mode]
    )
    reports = []
    for mode in modes:
        bench_cfg = bench.BenchConfig(
            mode=mode,
            iterations=args.iterations,
            pipeline=cfg,
            simulated_install=delays if mode == bench.MODE_RUNTIME_INSTALL else (),
        )
        reports.append(bench.run_bench(bench_cfg, env=env))
    summary = None
    if len(reports) == 2:
        by_mode = {r.mode: r for r in reports}
        summary = bench.compare(
            by_mode[bench.MODE_RUNTIME_INSTALL], by_mode[bench.MODE_PREBUILT]
        )
    print(store.redact(bench.format_table(reports, summary)))
    if args.json:
        payload = {"reports": [r.to_dict() for r in reports]}
        if summary is not None:
            payload["comparison"] = summary.to_dict()
        Path(args.json).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "expand": _cmd_expand,
    "verify-image": _cmd_verify_image,
    "lint-recipe": _cmd_lint_recipe,
    "gen-workflow": _cmd_gen_workflow,
    "bench": _cmd_bench,
}


def dispatch(argv: list[str], env: dict[str, str]) -> int:
    """Route argv to a subcommand and map errors to the exit-code contract."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    store = SecretStore()
    try:
        return _COMMANDS[args.command](args, env, store)
    except CblPipeError as exc:
        print(store.redact(f"error: {exc}"), file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # anything unexpected is an internal error
        print(store.redact(f"internal error: {exc}"), file=sys.stderr)
        return EXIT_INTERNAL_ERROR


def main() -> None:
    sys.exit(dispatch(sys.argv[1:], dict(os.environ)))
