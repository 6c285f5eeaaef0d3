"""Fixed-format COBOL comment stripping and recursive copybook expansion.

Layout convention: columns 1-6 are the sequence area (ignored), column 7
is the indicator ("*" or "/" marks a comment line), columns 8-72 carry
code. Content beyond column 72 is ignored for directive parsing but
preserved in output.

Only two constructs are interpreted: indicator-column comment lines and
statement-initial COPY directives of the form::

    COPY name [OF|IN library] [REPLACING ==from== BY ==to== ...] .

A directive may span several lines up to its terminating period (periods
inside ``==`` pseudo-text do not terminate). The directive's lines are
replaced in place by the recursively expanded copybook content, with the
REPLACING pairs applied textually to the embedded region only.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    CopybookNotFoundError,
    CopyCycleError,
    DepthExceededError,
    MalformedCopyError,
    StoreMissingError,
)

MAX_LINE_LENGTH = 255
INDICATOR = 6       # 0-based index of column 7
CODE_START = 7      # 0-based index of column 8
CODE_END = 72       # exclusive; code area is columns 8-72
COMMENT_INDICATORS = ("*", "/")
MAX_COPY_LINES = 16
DEFAULT_MAX_DEPTH = 10
COPYBOOK_SUFFIX = ".cpy"

_COPY_START = re.compile(r"^\s*COPY(?:\s|$)", re.IGNORECASE)
_COPY_RE = re.compile(
    r"^\s*COPY\s+(?P<name>[A-Za-z0-9][A-Za-z0-9-]*)"
    r"(?:\s+(?:OF|IN)\s+(?P<library>[A-Za-z0-9][A-Za-z0-9-]*))?"
    r"(?:\s+REPLACING\s+(?P<replacing>.+?))?\s*$",
    re.IGNORECASE | re.DOTALL,
)
_PAIR_RE = re.compile(
    r"\s*==(?P<frm>.*?)==\s+BY\s+==(?P<to>.*?)==", re.IGNORECASE | re.DOTALL
)


@dataclass(frozen=True)
class FixedFormatSource:
    """Raw fixed-format source lines in original order."""

    lines: tuple[str, ...]
    origin: str

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple(self.lines))
        for i, line in enumerate(self.lines):
            if len(line) > MAX_LINE_LENGTH:
                raise ValueError(
                    f"{self.origin}:{i + 1}: line exceeds {MAX_LINE_LENGTH} characters"
                )

    @classmethod
    def from_text(cls, text: str, origin: str) -> "FixedFormatSource":
        return cls(tuple(text.splitlines()), origin)

    @classmethod
    def read(cls, path: Path, origin: str | None = None) -> "FixedFormatSource":
        path = Path(path)
        return cls.from_text(path.read_text(encoding="utf-8"), origin or path.name)


@dataclass(frozen=True)
class CopyDirective:
    """One parsed COPY directive; ``source_span`` is the inclusive 0-based
    range of lines it occupies in the scanned source."""

    name: str
    library: str | None = None
    replacements: tuple[tuple[str, str], ...] = ()
    source_span: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class ExpandedSource:
    """Expansion result: no COPY directive survives and every line carries
    its (origin id, 1-based original line number) provenance."""

    lines: tuple[str, ...]
    provenance: tuple[tuple[str, int], ...]
    copybooks_used: frozenset[str]

    def __post_init__(self):
        if len(self.lines) != len(self.provenance):
            raise ValueError("provenance must cover every line")


@dataclass(frozen=True)
class CopybookStore:
    """Directory-backed copybook lookup.

    Layout is ``<root>/<LIBRARY>/<NAME>.cpy`` with a flat
    ``<root>/<NAME>.cpy`` fallback; names are case-insensitive and
    normalized to uppercase.
    """

    root: Path

    def resolve(self, name: str, library: str | None = None) -> Path | None:
        name = name.upper()
        candidates = []
        if library:
            candidates.append(Path(self.root) / library.upper() / f"{name}{COPYBOOK_SUFFIX}")
        candidates.append(Path(self.root) / f"{name}{COPYBOOK_SUFFIX}")
        for candidate in candidates:
            if candidate.is_file():
                return candidate
        return None


def _is_comment(line: str) -> bool:
    return len(line) > INDICATOR and line[INDICATOR] in COMMENT_INDICATORS


def strip_comments(src: FixedFormatSource) -> FixedFormatSource:
    """Drop every line whose indicator column is "*" or "/"; keep the rest
    unchanged and in order."""
    return FixedFormatSource(
        tuple(line for line in src.lines if not _is_comment(line)), src.origin
    )


def _find_terminator(text: str) -> int | None:
    """Index of the first period outside ``==`` pseudo-text, else None."""
    i = 0
    inside = False
    while i < len(text):
        if text.startswith("==", i):
            inside = not inside
            i += 2
            continue
        if text[i] == "." and not inside:
            return i
        i += 1
    return None


def _parse_pairs(segment: str, origin: str, line_no: int) -> tuple[tuple[str, str], ...]:
    pairs = []
    pos = 0
    while pos < len(segment):
        match = _PAIR_RE.match(segment, pos)
        if not match:
            if segment[pos:].strip():
                raise MalformedCopyError(
                    f"{origin}:{line_no}: REPLACING clause not understood: "
                    f"{segment[pos:].strip()!r}"
                )
            break
        frm = match.group("frm")
        if not frm:
            raise MalformedCopyError(
                f"{origin}:{line_no}: empty from-pseudo-text in REPLACING"
            )
        pairs.append((frm, match.group("to")))
        pos = match.end()
    if not pairs:
        raise MalformedCopyError(f"{origin}:{line_no}: REPLACING clause has no pairs")
    return tuple(pairs)


def _parse_directive(text: str, span: tuple[int, int], origin: str) -> CopyDirective:
    line_no = span[0] + 1
    match = _COPY_RE.match(text)
    if not match:
        raise MalformedCopyError(f"{origin}:{line_no}: cannot parse COPY directive: {text.strip()!r}")
    replacing = match.group("replacing")
    pairs = _parse_pairs(replacing, origin, line_no) if replacing else ()
    library = match.group("library")
    return CopyDirective(
        name=match.group("name").upper(),
        library=library.upper() if library else None,
        replacements=pairs,
        source_span=span,
    )


def scan_copies(src: FixedFormatSource) -> list[CopyDirective]:
    """Catalog all statement-initial COPY directives in order of appearance.

    Expects comments to be stripped already. A directive with no
    terminating period within ``MAX_COPY_LINES`` lines is malformed.
    """
    directives: list[CopyDirective] = []
    lines = src.lines
    i = 0
    while i < len(lines):
        code = lines[i][CODE_START:CODE_END]
        if not _COPY_START.match(code):
            i += 1
            continue
        parts: list[str] = []
        text = None
        j = i
        while j < len(lines) and j - i < MAX_COPY_LINES:
            parts.append(lines[j][CODE_START:CODE_END])
            joined = " ".join(parts)
            end = _find_terminator(joined)
            if end is not None:
                text = joined[:end]
                break
            j += 1
        if text is None:
            raise MalformedCopyError(
                f"{src.origin}:{i + 1}: COPY directive has no terminating period "
                f"within {MAX_COPY_LINES} lines"
            )
        directives.append(_parse_directive(text, span=(i, j), origin=src.origin))
        i = j + 1
    return directives


def _replace_single_pass(text: str, pairs: tuple[tuple[str, str], ...]) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        for frm, to in pairs:
            if frm and text.startswith(frm, i):
                out.append(to)
                i += len(frm)
                break
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


def apply_replacing(region: list[str], pairs) -> list[str]:
    """Apply ordered REPLACING pairs to a region of lines.

    Single pass over the original text: each original occurrence is
    matched against the pairs in order, first match wins, and the output
    is never re-scanned, so substitutions cannot cascade.
    """
    pairs = tuple(pairs)
    if not pairs:
        return list(region)
    return [_replace_single_pass(line, pairs) for line in region]


def _expand_lines(
    src: FixedFormatSource,
    store: CopybookStore,
    depth: int,
    stack: tuple[str, ...],
    used: set[str],
    max_depth: int,
) -> list[tuple[str, str, int]]:
    """Expand to a list of (text, origin id, 1-based original line) rows."""
    numbered = [
        (line, idx + 1) for idx, line in enumerate(src.lines) if not _is_comment(line)
    ]
    stripped = FixedFormatSource(tuple(line for line, _ in numbered), src.origin)
    result: list[tuple[str, str, int]] = []
    cursor = 0
    for directive in scan_copies(stripped):
        first, last = directive.source_span
        for k in range(cursor, first):
            line, original_no = numbered[k]
            result.append((line, src.origin, original_no))
        if directive.name in stack:
            raise CopyCycleError([*stack, directive.name])
        if depth + 1 > max_depth:
            raise DepthExceededError(
                f"{src.origin}: copybook nesting exceeds max depth {max_depth} "
                f"at {directive.name}"
            )
        path = store.resolve(directive.name, directive.library)
        if path is None:
            book = (
                f"{directive.library}/{directive.name}"
                if directive.library
                else directive.name
            )
            raise CopybookNotFoundError(book=book, requester=src.origin)
        origin_id = (
            f"{directive.library}/{directive.name}"
            if directive.library
            else directive.name
        )
        book_src = FixedFormatSource.from_text(
            path.read_text(encoding="utf-8"), origin=origin_id
        )
        used.add(directive.name)
        region = _expand_lines(
            book_src, store, depth + 1, (*stack, directive.name), used, max_depth
        )
        if directive.replacements:
            region = [
                (_replace_single_pass(text, directive.replacements), origin, no)
                for text, origin, no in region
            ]
        result.extend(region)
        cursor = last + 1
    for k in range(cursor, len(numbered)):
        line, original_no = numbered[k]
        result.append((line, src.origin, original_no))
    return result


def expand(
    src: FixedFormatSource,
    store: CopybookStore,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> ExpandedSource:
    """Strip comments and recursively embed every referenced copybook.

    Cycles are detected via the active expansion stack and reported with
    the full inclusion path; ``max_depth`` is a secondary guard.
    """
    if not Path(store.root).is_dir():
        raise StoreMissingError(f"copybook store root does not exist: {store.root}")
    used: set[str] = set()
    rows = _expand_lines(src, store, depth=0, stack=(), used=used, max_depth=max_depth)
    return ExpandedSource(
        lines=tuple(text for text, _, _ in rows),
        provenance=tuple((origin, no) for _, origin, no in rows),
        copybooks_used=frozenset(used),
    )


def expanded_output_path(source_path: Path) -> Path:
    """Default output location: ``<name>.expanded.cbl`` beside the source."""
    source_path = Path(source_path)
    return source_path.with_name(source_path.stem + ".expanded.cbl")
