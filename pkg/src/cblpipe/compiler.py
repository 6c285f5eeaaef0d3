"""Bundled stand-in for a COBOL compile-and-test toolchain.

"Compiles" an expanded source by counting structural markers and runs a
trivial check, keeping desk-scale pipeline runs hermetic on machines
without a real COBOL compiler. Point ``compiler_cmd`` at a real
toolchain to replace it.

Exit codes follow the mainframe return-code idiom: 0 clean, 4 warnings
(the pipeline marks the stage unstable), 8 failure. A source containing
the token ``FAIL-ME`` fails the trivial check; ``WARN-ME`` yields
warnings; an unresolved COPY directive is a compile error.

Usage: python -m cblpipe.compiler [--sleep SECONDS] [--password PW] FILE
"""

import argparse
import sys
import time
from pathlib import Path

RC_OK = 0
RC_WARNING = 4
RC_ERROR = 8

FAIL_TOKEN = "FAIL-ME"
WARN_TOKEN = "WARN-ME"


def check_source(path: Path) -> tuple[int, str]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        return RC_ERROR, f"cannot read source: {exc}"
    lines = [line for line in text.splitlines() if line.strip()]
    statements = sum(1 for line in lines if line.rstrip().endswith("."))
    divisions = sum(1 for line in lines if "DIVISION" in line)
    if any(line.lstrip().upper().startswith("COPY ") for line in lines):
        return RC_ERROR, "unresolved COPY directive; source was not expanded"
    if not any("PROCEDURE DIVISION" in line for line in lines):
        return RC_ERROR, "no PROCEDURE DIVISION found"
    if any(FAIL_TOKEN in line for line in lines):
        return RC_ERROR, f"unit check failed ({FAIL_TOKEN} encountered)"
    summary = f"{divisions} divisions, {statements} statements"
    if any(WARN_TOKEN in line for line in lines):
        return RC_WARNING, f"{summary}; warnings present"
    return RC_OK, f"{summary}; checks passed"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cblpipe-compiler", description="mock COBOL compile+test harness"
    )
    parser.add_argument("file", help="expanded COBOL source to check")
    parser.add_argument(
        "--sleep", type=float, default=0.0,
        help="simulated compile+test duration in seconds",
    )
    parser.add_argument(
        "--password", default=None,
        help="credential passed through by the pipeline (unused here)",
    )
    args = parser.parse_args(argv)
    if args.sleep > 0:
        time.sleep(args.sleep)
    rc, message = check_source(Path(args.file))
    stream = sys.stderr if rc == RC_ERROR else sys.stdout
    print(f"{args.file}: {message}", file=stream)
    return rc


if __name__ == "__main__":
    sys.exit(main())
