"""Shared fixtures: a git-backed workspace with five COBOL sources, a
copybook store, a simulated mainframe store, and a pipeline config."""

from __future__ import annotations

import os
import shlex
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

import pytest

TEST_PASSWORD_ENV = "CBLPIPE_TEST_MF_PW"
TEST_PASSWORD = "s3cr3t-Pa55word!"


def cbl(code: str) -> str:
    """One fixed-format code line: blank sequence area and indicator."""
    return "       " + code


def cbl_comment(text: str) -> str:
    return "      *" + text


def cobol_program(program_id: str, copies=(), extra_body=()) -> str:
    lines = [
        cbl("IDENTIFICATION DIVISION."),
        cbl(f"PROGRAM-ID. {program_id}."),
        cbl_comment(f" {program_id} fixture program"),
        cbl("DATA DIVISION."),
        cbl("WORKING-STORAGE SECTION."),
    ]
    for copy in copies:
        lines.append(cbl(f"COPY {copy}."))
    lines += [
        cbl("PROCEDURE DIVISION."),
        cbl("MAIN-PARA."),
        cbl(f'    DISPLAY "{program_id} RUNNING".'),
    ]
    lines += [cbl(body) for body in extra_body]
    lines.append(cbl("    STOP RUN."))
    return "\n".join(lines) + "\n"


COPYBOOKS = {
    "PAYROLL": [
        cbl_comment(" payroll record layout"),
        cbl("01 PAY-RECORD."),
        cbl("   05 PAY-ID PIC 9(6)."),
        cbl("COPY AMOUNTS."),
    ],
    "AMOUNTS": [
        cbl("   05 PAY-GROSS PIC 9(7)V99."),
        cbl("   05 PAY-NET PIC 9(7)V99."),
    ],
    "CUSTOMER": [
        cbl("01 CUST-RECORD."),
        cbl("   05 CUST-ID PIC 9(8)."),
        cbl("   05 CUST-NAME PIC X(40)."),
    ],
    "LEDGER": [
        cbl("01 :PRE:-TOTALS."),
        cbl("   05 :PRE:-SUM PIC 9(9)."),
    ],
}

LIBRARY_COPYBOOKS = {
    "FINLIB/ACCOUNTS": [
        cbl("01 ACCT-RECORD."),
        cbl("   05 ACCT-NO PIC 9(10)."),
    ],
}

PROGRAMS = {
    "PAY001": cobol_program("PAY001", copies=["PAYROLL"]),
    "CUST01": cobol_program("CUST01", copies=["CUSTOMER"]),
    "ACCT01": cobol_program("ACCT01", copies=["ACCOUNTS OF FINLIB"]),
    "LEDG01": cobol_program("LEDG01", copies=["LEDGER REPLACING ==:PRE:== BY ==LDG=="]),
    "RPT001": cobol_program("RPT001"),
}


def _git(workspace: Path, *args: str) -> str:
    result = subprocess.run(
        ["git", *args], cwd=workspace, capture_output=True, text=True, check=True
    )
    return result.stdout.strip()


@dataclass
class Workspace:
    root: Path
    source_dir: Path
    test_dir: Path
    copybook_dir: Path
    mainframe_store: Path
    config_path: Path
    head_commit: str
    branch: str
    repository_id: str

    def base_env(self) -> dict[str, str]:
        env = {
            k: v for k, v in os.environ.items() if not k.startswith("GITHUB_")
        }
        env.pop("CBL_ENV_FILE", None)
        env[TEST_PASSWORD_ENV] = TEST_PASSWORD
        return env

    def github_env(self) -> dict[str, str]:
        env = self.base_env()
        env.update(
            {
                "GITHUB_ACTIONS": "true",
                "GITHUB_SHA": self.head_commit,
                "GITHUB_REPOSITORY": self.repository_id,
                "GITHUB_REF_NAME": self.branch,
            }
        )
        return env


def compiler_cmd(sleep: float = 0.0, with_password: bool = False) -> str:
    parts = [shlex.quote(sys.executable), "-m", "cblpipe.compiler"]
    if sleep:
        parts += ["--sleep", str(sleep)]
    if with_password:
        parts += ["--password", "${MF_PW}"]
    parts.append("${FILE}")
    return " ".join(parts)


def write_config(
    workspace_root: Path,
    *,
    compiler: str | None = None,
    with_mainframe: bool = True,
    with_secrets: bool = True,
    container_image: str | None = "registry.example.com/cbl/pipeline:1.4.2",
) -> Path:
    lines = [
        "source_dir: src",
        "test_dir: tests",
        "copybook_store: books",
    ]
    if container_image:
        lines.append(f"container_image: {container_image}")
    if compiler:
        lines.append(f'compiler_cmd: "{compiler}"')
    lines += [
        "tool_versions:",
        "  cobol-compiler: 3.2.0",
        "  unit-runner: 0.9.1",
    ]
    if with_secrets:
        lines += [
            "secrets:",
            "  - placeholder: MF_PW",
            f"    env: {TEST_PASSWORD_ENV}",
        ]
    if with_mainframe:
        lines += [
            "mainframe:",
            "  store_root: mfstore",
            "  user: ci-bot",
            f"  password_env: {TEST_PASSWORD_ENV}",
        ]
    config_path = workspace_root / "pipeline.yaml"
    config_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return config_path


def build_workspace(
    root: Path,
    *,
    programs: dict[str, str] | None = None,
    compiler: str | None = None,
    with_mainframe: bool = True,
    with_secrets: bool = True,
) -> Workspace:
    root.mkdir(parents=True, exist_ok=True)
    source_dir = root / "src"
    test_dir = root / "tests"
    copybook_dir = root / "books"
    mf_store = root / "mfstore"
    for d in (source_dir, test_dir, copybook_dir, mf_store):
        d.mkdir(exist_ok=True)

    for name, text in (programs or PROGRAMS).items():
        (source_dir / f"{name}.cbl").write_text(text, encoding="utf-8")
        (test_dir / f"{name}.cblt").write_text(
            f"TESTSUITE {name}\nTESTCASE smoke\n", encoding="utf-8"
        )
    for name, lines in COPYBOOKS.items():
        (copybook_dir / f"{name}.cpy").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for key, lines in LIBRARY_COPYBOOKS.items():
        lib, name = key.split("/")
        (copybook_dir / lib).mkdir(exist_ok=True)
        (copybook_dir / lib / f"{name}.cpy").write_text(
            "\n".join(lines) + "\n", encoding="utf-8"
        )
    (mf_store / "MY.PDS").mkdir(exist_ok=True)
    (mf_store / "MY.PDS" / "CUST").write_text("X", encoding="utf-8")

    config_path = write_config(
        root,
        compiler=compiler or compiler_cmd(with_password=with_secrets),
        with_mainframe=with_mainframe,
        with_secrets=with_secrets,
    )

    _git(root, "init", "-q", "-b", "main")
    _git(root, "config", "user.email", "ci@example.com")
    _git(root, "config", "user.name", "ci")
    _git(root, "remote", "add", "origin", "https://github.com/acme/payroll.git")
    _git(root, "add", "-A")
    _git(root, "commit", "-q", "-m", "fixture")
    head = _git(root, "rev-parse", "HEAD")
    branch = _git(root, "rev-parse", "--abbrev-ref", "HEAD")

    return Workspace(
        root=root,
        source_dir=source_dir,
        test_dir=test_dir,
        copybook_dir=copybook_dir,
        mainframe_store=mf_store,
        config_path=config_path,
        head_commit=head,
        branch=branch,
        repository_id="acme/payroll",
    )


@pytest.fixture
def workspace(tmp_path) -> Workspace:
    return build_workspace(tmp_path / "ws")
