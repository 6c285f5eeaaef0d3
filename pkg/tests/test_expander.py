"""Tests for comment stripping, COPY scanning, REPLACING and expansion,
checked against the independent brute-force oracle."""

import random
import time

import pytest

from cblpipe.errors import (
    CopybookNotFoundError,
    CopyCycleError,
    DepthExceededError,
    MalformedCopyError,
    StoreMissingError,
)
from cblpipe.expander import (
    CopybookStore,
    CopyDirective,
    FixedFormatSource,
    apply_replacing,
    expand,
    expanded_output_path,
    scan_copies,
    strip_comments,
)

from expander_oracle import oracle_expand


def src(*lines, origin="main.cbl"):
    return FixedFormatSource(tuple(lines), origin)


def code(text):
    """Code line: 6-char sequence area + blank indicator + code from col 8."""
    return "       " + text


def comment(text):
    return "      *" + text


def write_store(tmp_path, books):
    """Write {name: text} / {"LIB/NAME": text} copybooks under tmp_path."""
    root = tmp_path / "books"
    root.mkdir(parents=True, exist_ok=True)
    for key, text in books.items():
        if "/" in key:
            lib, name = key.split("/")
            (root / lib).mkdir(exist_ok=True)
            (root / lib / f"{name}.cpy").write_text(text, encoding="utf-8")
        else:
            (root / f"{key}.cpy").write_text(text, encoding="utf-8")
    return CopybookStore(root)


class TestStripComments:
    def test_removes_indicator_comment(self):
        result = strip_comments(src(code("MOVE A TO B."), comment(" note")))
        assert result.lines == (code("MOVE A TO B."),)

    def test_no_comments_identity(self):
        original = src(code("MOVE A TO B."), code("STOP RUN."))
        assert strip_comments(original).lines == original.lines

    def test_star_in_column_8_is_not_a_comment(self):
        line = "       *NOT-A-COMMENT"  # "*" at column 8, indicator blank
        assert strip_comments(src(line)).lines == (line,)

    def test_slash_indicator_also_comment(self):
        assert strip_comments(src("      /page eject")).lines == ()

    def test_short_lines_kept(self):
        assert strip_comments(src("", "   ")).lines == ("", "   ")

    def test_order_preserved(self):
        result = strip_comments(src(code("A."), comment("x"), code("B.")))
        assert result.lines == (code("A."), code("B."))


class TestLineLengthCap:
    def test_line_over_255_rejected(self):
        with pytest.raises(ValueError):
            src("x" * 256)

    def test_line_at_255_accepted(self):
        src("x" * 255)


class TestScanCopies:
    def test_plain_copy(self):
        directives = scan_copies(src(code("COPY PAYROLL.")))
        assert directives == [CopyDirective(name="PAYROLL", source_span=(0, 0))]

    def test_copy_with_library(self):
        directives = scan_copies(src(code("COPY CUST OF FINLIB.")))
        assert len(directives) == 1
        assert directives[0].name == "CUST"
        assert directives[0].library == "FINLIB"

    def test_in_keyword_library(self):
        assert scan_copies(src(code("COPY CUST IN FINLIB.")))[0].library == "FINLIB"

    def test_no_copy_empty_list(self):
        assert scan_copies(src(code("MOVE A TO B."))) == []

    def test_replacing_pairs_in_order(self):
        directives = scan_copies(
            src(code("COPY LEDGER REPLACING ==:A:== BY ==X== ==:B:== BY ==Y==."))
        )
        assert directives[0].replacements == ((":A:", "X"), (":B:", "Y"))

    def test_multiline_directive(self):
        directives = scan_copies(
            src(code("COPY LEDGER"), code("    REPLACING ==:A:== BY ==X==."))
        )
        assert len(directives) == 1
        assert directives[0].source_span == (0, 1)
        assert directives[0].replacements == ((":A:", "X"),)

    def test_period_inside_pseudo_text_does_not_terminate(self):
        directives = scan_copies(
            src(code("COPY LEDGER REPLACING ==A.B== BY ==C.D==."))
        )
        assert directives[0].replacements == (("A.B", "C.D"),)

    def test_missing_period_is_malformed(self):
        lines = [code("COPY NEVERENDS")] + [code("FILLER") for _ in range(20)]
        with pytest.raises(MalformedCopyError):
            scan_copies(src(*lines))

    def test_copy_not_at_statement_start_ignored(self):
        # Only statement-initial directives are in the supported subset.
        assert scan_copies(src(code('DISPLAY "COPY THIS IS TEXT".'))) == []

    def test_name_normalized_to_uppercase(self):
        assert scan_copies(src(code("copy payroll.")))[0].name == "PAYROLL"

    def test_order_of_appearance(self):
        directives = scan_copies(src(code("COPY A."), code("X."), code("COPY B.")))
        assert [d.name for d in directives] == ["A", "B"]


class TestApplyReplacing:
    def test_direct_substitution(self):
        assert apply_replacing(["MOVE X TO Y."], (("X", "Z"),)) == ["MOVE Z TO Y."]

    def test_empty_pairs_identity(self):
        assert apply_replacing(["MOVE X TO Y."], ()) == ["MOVE X TO Y."]

    def test_ordered_single_pass_no_cascade(self):
        # Oracle for single-pass ordered substitution: each original
        # occurrence matched once, first pair wins, output not re-scanned.
        def one_pass(text, pairs):
            out, i = "", 0
            while i < len(text):
                for frm, to in pairs:
                    if text[i:i + len(frm)] == frm:
                        out, i = out + to, i + len(frm)
                        break
                else:
                    out, i = out + text[i], i + 1
            return out

        pairs = (("A", "B"), ("B", "C"))
        assert one_pass("A B", pairs) == "B C"
        assert apply_replacing(["A B"], pairs) == ["B C"]

    def test_first_pair_wins_on_overlap(self):
        assert apply_replacing(["AB"], (("AB", "1"), ("A", "2"))) == ["1"]
        assert apply_replacing(["AB"], (("A", "2"), ("AB", "1"))) == ["2B"]


class TestExpand:
    def test_no_copy_equals_strip(self, tmp_path):
        store = write_store(tmp_path, {})
        source = src(code("MOVE A TO B."), comment("gone"), code("STOP RUN."))
        result = expand(source, store)
        assert result.lines == strip_comments(source).lines
        assert result.copybooks_used == frozenset()
        assert all(origin == "main.cbl" for origin, _ in result.provenance)

    def test_depth_two_matches_hand_expansion(self, tmp_path):
        # Hand-expansion oracle: B's lines appear where A's COPY stood.
        book_b = code("LINE-B-1.") + "\n" + code("LINE-B-2.") + "\n"
        book_a = code("LINE-A-1.") + "\n" + code("COPY B.") + "\n" + code("LINE-A-2.") + "\n"
        store = write_store(tmp_path, {"A": book_a, "B": book_b})
        source = src(code("TOP."), code("COPY A."), code("BOTTOM."))
        result = expand(source, store)
        expected = [
            code("TOP."),
            code("LINE-A-1."),
            code("LINE-B-1."),
            code("LINE-B-2."),
            code("LINE-A-2."),
            code("BOTTOM."),
        ]
        assert list(result.lines) == expected
        assert result.copybooks_used == {"A", "B"}
        origins = [origin for origin, _ in result.provenance]
        assert origins == ["main.cbl", "A", "B", "B", "A", "main.cbl"]

    def test_cycle_reported_with_path(self, tmp_path):
        store = write_store(tmp_path, {"A": code("COPY B.") + "\n", "B": code("COPY A.") + "\n"})
        with pytest.raises(CopyCycleError) as excinfo:
            expand(src(code("COPY A.")), store)
        assert excinfo.value.path == ["A", "B", "A"]
        assert "A -> B -> A" in str(excinfo.value)

    def test_missing_book_names_book_and_requester(self, tmp_path):
        store = write_store(tmp_path, {})
        with pytest.raises(CopybookNotFoundError) as excinfo:
            expand(src(code("COPY GHOST."), origin="main.cbl"), store)
        assert excinfo.value.book == "GHOST"
        assert excinfo.value.requester == "main.cbl"
        assert "GHOST" in str(excinfo.value) and "main.cbl" in str(excinfo.value)

    def test_depth_limit(self, tmp_path):
        books = {f"B{i}": code(f"COPY B{i + 1}.") + "\n" for i in range(12)}
        books["B12"] = code("LEAF.") + "\n"
        store = write_store(tmp_path, books)
        with pytest.raises(DepthExceededError):
            expand(src(code("COPY B0.")), store)
        # A generous limit succeeds.
        expand(src(code("COPY B0.")), store, max_depth=20)

    def test_store_root_missing(self, tmp_path):
        with pytest.raises(StoreMissingError):
            expand(src(code("COPY A.")), CopybookStore(tmp_path / "nope"))

    def test_case_insensitive_lookup(self, tmp_path):
        store = write_store(tmp_path, {"PAYROLL": code("FIELDS.") + "\n"})
        result = expand(src(code("copy payroll.")), store)
        assert result.copybooks_used == {"PAYROLL"}

    def test_library_fallback_to_flat(self, tmp_path):
        store = write_store(tmp_path, {"BOOK": code("FLAT.") + "\n"})
        result = expand(src(code("COPY BOOK OF NOLIB.")), store)
        assert list(result.lines) == [code("FLAT.")]

    def test_replacing_applies_to_embedded_region_only(self, tmp_path):
        store = write_store(tmp_path, {"T": code("USE :TAG:.") + "\n"})
        source = src(code("KEEP :TAG:."), code("COPY T REPLACING ==:TAG:== BY ==REAL==."))
        result = expand(source, store)
        assert list(result.lines) == [code("KEEP :TAG:."), code("USE REAL.")]

    def test_fixed_point(self, tmp_path):
        store = write_store(
            tmp_path,
            {"A": code("ALPHA.") + "\n" + code("COPY B.") + "\n", "B": code("BETA.") + "\n"},
        )
        first = expand(src(code("COPY A."), code("TAIL.")), store)
        again = expand(FixedFormatSource(first.lines, "expanded"), store)
        assert again.lines == first.lines

    def test_determinism(self, tmp_path):
        store = write_store(tmp_path, {"A": code("ALPHA.") + "\n"})
        source = src(code("COPY A."), code("X."))
        assert expand(source, store) == expand(source, store)

    def test_provenance_reproduces_contiguous_runs(self, tmp_path):
        book = code("B-ONE.") + "\n" + comment("dropped") + "\n" + code("B-TWO.") + "\n"
        store = write_store(tmp_path, {"A": book})
        source = src(code("H1."), comment("x"), code("COPY A."), code("T1."))
        result = expand(source, store)
        assert len(result.provenance) == len(result.lines)
        # Book lines carry their original (pre-strip) line numbers.
        book_rows = [(n, line) for (o, n), line in zip(result.provenance, result.lines) if o == "A"]
        assert book_rows == [(1, code("B-ONE.")), (3, code("B-TWO."))]
        main_rows = [n for (o, n), _ in zip(result.provenance, result.lines) if o == "main.cbl"]
        assert main_rows == [1, 4]


def _random_fixture(rng: random.Random):
    """Random source + copybook set: nesting depth <= 5, <= 8 books,
    with and without REPLACING."""
    n_books = rng.randint(1, 8)
    names = [f"BK{i}" for i in range(n_books)]
    levels = {name: rng.randint(1, 5) for name in names}
    books = {}
    tokens = [":T1:", ":T2:", "AAA", "BBB"]

    def directive(target):
        text = f"COPY {target}"
        if rng.random() < 0.15:
            text += " OF MAINLIB"  # flat fallback: MAINLIB holds nothing
        if rng.random() < 0.4:
            frm = rng.choice(tokens)
            to = rng.choice(["XX", "YY", "Z-9"])
            text += f" REPLACING =={frm}== BY =={to}=="
        return text + "."

    for name in names:
        lines = []
        for _ in range(rng.randint(1, 4)):
            lines.append(code(f"FIELD-{rng.randint(0, 99)} {rng.choice(tokens)}."))
            if rng.random() < 0.3:
                lines.append(comment(" noise"))
        deeper = [n for n in names if levels[n] > levels[name]]
        for target in rng.sample(deeper, k=min(len(deeper), rng.randint(0, 2))):
            lines.append(code(directive(target)))
        books[name] = "\n".join(lines) + "\n"

    top_level = [n for n in names if levels[n] == min(levels.values())]
    main_lines = [code("START.")]
    for target in rng.sample(names, k=min(len(names), rng.randint(1, 3))):
        main_lines.append(code(directive(target)))
        if rng.random() < 0.3:
            main_lines.append(comment(" separator"))
        main_lines.append(code(f"AFTER-{target}."))
    # One multi-line directive case.
    if rng.random() < 0.5 and top_level:
        main_lines.append(code(f"COPY {top_level[0]}"))
        main_lines.append(code("    REPLACING ==AAA== BY ==QQ==."))
    main_lines.append(code("FINISH."))
    return "\n".join(main_lines) + "\n", books


class TestOracleEquivalence:
    def test_randomized_fixtures_match_oracle(self, tmp_path):
        rng = random.Random(20260810)
        start = time.monotonic()
        for case in range(24):
            text, books = _random_fixture(rng)
            store = write_store(tmp_path / f"case{case}", books)
            expected = oracle_expand(text, books)
            result = expand(FixedFormatSource.from_text(text, "main.cbl"), store)
            assert list(result.lines) == expected, f"case {case} diverged"
        assert time.monotonic() - start < 5.0


class TestOutputPath:
    def test_expanded_beside_source(self, tmp_path):
        assert expanded_output_path(tmp_path / "main.cbl") == tmp_path / "main.expanded.cbl"
