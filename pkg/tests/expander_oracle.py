"""Independent brute-force reference for copybook expansion.

Deliberately naive: plain string walking, direct recursion, no shared
code with the package under test. Semantics covered: indicator-column
comment stripping, statement-initial COPY directives (multi-line up to
the terminating period, periods inside ``==`` pseudo-text ignored),
``OF``/``IN`` library qualifiers, and ordered single-pass REPLACING.
"""

from __future__ import annotations


def _keep_line(line: str) -> bool:
    return not (len(line) >= 7 and line[6] in ("*", "/"))


def _code_area(line: str) -> str:
    return line[7:72]


def _period_outside_pseudo_text(text: str) -> int:
    depth_open = False
    k = 0
    while k < len(text):
        if text[k : k + 2] == "==":
            depth_open = not depth_open
            k += 2
            continue
        if text[k] == "." and not depth_open:
            return k
        k += 1
    return -1


def _split_words(text: str) -> list[str]:
    return text.split()


def _parse_copy_text(text: str):
    """Return (name, library, pairs) for a directive body without its period."""
    words = _split_words(text)
    assert words[0].upper() == "COPY"
    name = words[1].upper()
    library = None
    rest = words[2:]
    if rest and rest[0].upper() in ("OF", "IN"):
        library = rest[1].upper()
        rest = rest[2:]
    pairs = []
    if rest:
        assert rest[0].upper() == "REPLACING"
        blob = " ".join(rest[1:])
        while blob.strip():
            first = blob.index("==")
            second = blob.index("==", first + 2)
            frm = blob[first + 2 : second]
            blob = blob[second + 2 :].lstrip()
            assert blob.upper().startswith("BY")
            blob = blob[2:].lstrip()
            third = blob.index("==")
            fourth = blob.index("==", third + 2)
            to = blob[third + 2 : fourth]
            blob = blob[fourth + 2 :].lstrip()
            pairs.append((frm, to))
    return name, library, pairs


def _single_pass_replace(line: str, pairs) -> str:
    result = ""
    k = 0
    while k < len(line):
        hit = None
        for frm, to in pairs:
            if line[k : k + len(frm)] == frm:
                hit = (frm, to)
                break
        if hit:
            result += hit[1]
            k += len(hit[0])
        else:
            result += line[k]
            k += 1
    return result


def oracle_expand(text: str, books: dict[str, str], depth: int = 0, max_depth: int = 10) -> list[str]:
    """Expand ``text`` against ``books`` (keys "NAME" or "LIB/NAME").

    Returns the expanded lines. Raises RuntimeError on missing books,
    cycles (via max depth) or malformed directives, since the oracle is
    only ever fed well-formed fixtures.
    """
    if depth > max_depth:
        raise RuntimeError("too deep")
    lines = [line for line in text.splitlines() if _keep_line(line)]
    output: list[str] = []
    i = 0
    while i < len(lines):
        code = _code_area(lines[i])
        if not code.strip().upper().startswith("COPY ") and code.strip().upper() != "COPY":
            output.append(lines[i])
            i += 1
            continue
        collected = code
        j = i
        while _period_outside_pseudo_text(collected) == -1:
            j += 1
            if j >= len(lines) or j - i >= 16:
                raise RuntimeError("no terminating period")
            collected = collected + " " + _code_area(lines[j])
        body = collected[: _period_outside_pseudo_text(collected)]
        name, library, pairs = _parse_copy_text(body)
        key = f"{library}/{name}" if library else name
        if key not in books and name not in books:
            raise RuntimeError(f"missing book {key}")
        book_text = books.get(key, books.get(name))
        region = oracle_expand(book_text, books, depth + 1, max_depth)
        if pairs:
            region = [_single_pass_replace(line, pairs) for line in region]
        output.extend(region)
        i = j + 1
    return output
