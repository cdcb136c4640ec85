"""Residue numbering translation between coordinate-file and database schemes.

A structure file numbers residues by author convention, sequence databases
number the full-length protein, and analysis tools often renumber from 1.
This module builds explicit translation tables between those schemes and
answers position queries against them, refusing to guess when the requested
scheme does not match the table.
"""

from __future__ import annotations

import io
import csv
import re
from dataclasses import dataclass, field

from gatewright.alignment import (
    Alignment,
    AlignmentParams,
    EmptySequence,
    needleman_wunsch,
)
from gatewright.errors import GatewrightError

__all__ = [
    "SCHEME_KINDS",
    "STRATEGIES",
    "Alignment",
    "AlignmentParams",
    "ChainNotFound",
    "ChainSequence",
    "DbrefSegment",
    "EmptySequence",
    "LookupResult",
    "MalformedToken",
    "MapEntry",
    "MappingTable",
    "NameMismatch",
    "NoDbrefRecord",
    "NumberingScheme",
    "OutOfRange",
    "ResidueQuery",
    "SchemeMismatch",
    "alignment_table",
    "arithmetic_table",
    "build_mapping",
    "dbref_segment_tables",
    "dbref_table",
    "emit_csv",
    "extract_sequence",
    "lookup",
    "needleman_wunsch",
    "parse_dbref_segments",
    "parse_mapping_csv",
    "parse_query",
    "resolve_scheme",
]


class MalformedToken(GatewrightError):
    """A position query token does not match any recognized form."""


class NoDbrefRecord(GatewrightError):
    """The structure file carries no database cross-reference records."""


class ChainNotFound(GatewrightError):
    """The requested chain identifier does not appear in the file."""


class OutOfRange(GatewrightError):
    """The queried position falls outside the mapped range."""


class NameMismatch(GatewrightError):
    """The residue at the mapped position differs from the queried name."""


class SchemeMismatch(GatewrightError):
    """The query's numbering scheme does not match the table side."""


SCHEME_KINDS = ("UniProt", "PdbAuthor", "ToolSequential", "AnalysisOutput")
STRATEGIES = ("Arithmetic", "Dbref", "Alignment")

THREE_TO_ONE = {
    "Ala": "A", "Arg": "R", "Asn": "N", "Asp": "D", "Cys": "C",
    "Gln": "Q", "Glu": "E", "Gly": "G", "His": "H", "Ile": "I",
    "Leu": "L", "Lys": "K", "Met": "M", "Phe": "F", "Pro": "P",
    "Ser": "S", "Thr": "T", "Trp": "W", "Tyr": "Y", "Val": "V",
}
ONE_TO_THREE = {one: three for three, one in THREE_TO_ONE.items()}


@dataclass(frozen=True)
class NumberingScheme:
    kind: str
    chain: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"unknown scheme kind: {self.kind!r}")


def resolve_scheme(scheme: NumberingScheme,
                   source: NumberingScheme) -> NumberingScheme:
    """Replace a derived-output scheme with the scheme of its input structure.

    Numbers reported by an analysis stage carry no convention of their own;
    they inherit whatever the structure fed into the stage used.
    """
    if scheme.kind == "AnalysisOutput":
        if source.kind == "AnalysisOutput":
            raise SchemeMismatch("source scheme is itself unresolved")
        return source
    return scheme


@dataclass(frozen=True)
class ResidueQuery:
    """One parsed position query.

    ``tag`` records how the position was written: ``Bare`` for name-plus-
    number forms such as ``Met793``, ``Pdb`` for ``pdb:769``, and ``Tool``
    for ``tool:76``. Only bare queries carry a residue name.
    """

    tag: str
    number: int
    residue_name: str | None = None

    def __post_init__(self) -> None:
        if self.tag not in ("Bare", "Pdb", "Tool"):
            raise ValueError(f"unknown query tag: {self.tag!r}")
        if self.tag == "Bare" and not self.residue_name:
            raise ValueError("bare queries must carry a residue name")
        if self.tag != "Bare" and self.residue_name is not None:
            raise ValueError("tagged queries must not carry a residue name")


_BARE_RE = re.compile(r"^([A-Za-z]{3})([0-9]+)$")
_TAGGED_RE = re.compile(r"^([A-Za-z]+):([0-9]+)$")


def parse_query(text: str) -> list[ResidueQuery]:
    """Parse a comma-separated list of position queries.

    Residue names are case-normalized, so ``GLY1`` and ``gly1`` both parse
    to ``Gly`` at position 1.
    """
    tokens = [tok.strip() for tok in text.split(",")]
    if not any(tokens):
        raise MalformedToken("empty query")
    queries = []
    for token in tokens:
        if not token:
            raise MalformedToken("empty token in query list")
        tagged = _TAGGED_RE.match(token)
        if tagged:
            tag, number = tagged.group(1).lower(), int(tagged.group(2))
            if tag == "pdb":
                queries.append(ResidueQuery("Pdb", number))
            elif tag == "tool":
                queries.append(ResidueQuery("Tool", number))
            else:
                raise MalformedToken(f"unknown scheme tag: {token!r}")
            continue
        bare = _BARE_RE.match(token)
        if bare:
            name = bare.group(1).title()
            if name not in THREE_TO_ONE:
                raise MalformedToken(f"unknown residue code: {token!r}")
            queries.append(ResidueQuery("Bare", int(bare.group(2)), name))
            continue
        raise MalformedToken(f"unrecognized query token: {token!r}")
    return queries


@dataclass(frozen=True)
class MapEntry:
    from_number: int
    to_number: int
    residue_code: str | None = None


@dataclass(frozen=True)
class MappingTable:
    """A translation table between two numbering schemes.

    Entries are strictly increasing on the source side and injective on
    the target side; a position never maps to two places. Source positions
    that have no counterpart are listed in ``unmapped``.
    """

    scheme_from: NumberingScheme
    scheme_to: NumberingScheme
    strategy: str
    entries: tuple[MapEntry, ...]
    offset: int | None = None
    unmapped: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy: {self.strategy!r}")
        if self.strategy in ("Arithmetic", "Dbref"):
            if self.offset is None:
                raise ValueError(f"{self.strategy} tables require an offset")
            for entry in self.entries:
                if entry.to_number - entry.from_number != self.offset:
                    raise ValueError(
                        f"entry {entry.from_number}->{entry.to_number} "
                        f"violates offset {self.offset:+d}")
        froms = [e.from_number for e in self.entries]
        if any(b <= a for a, b in zip(froms, froms[1:])):
            raise ValueError("entries must be strictly increasing")
        tos = [e.to_number for e in self.entries]
        if len(set(tos)) != len(tos):
            raise ValueError("target numbers must be unique")
        if set(self.unmapped) & set(froms):
            raise ValueError("unmapped positions overlap mapped entries")

    @property
    def strategy_token(self) -> str:
        if self.strategy == "Arithmetic":
            return f"arith:{self.offset:+d}"
        if self.strategy == "Dbref":
            return f"dbref:{self.offset:+d}"
        return "align"


@dataclass(frozen=True)
class LookupResult:
    number: int
    residue_code: str | None = None


def arithmetic_table(offset: int, numbers, *,
                     scheme_from: NumberingScheme,
                     scheme_to: NumberingScheme,
                     codes: dict[int, str] | None = None) -> MappingTable:
    """Build a constant-offset table over the given source positions."""
    codes = codes or {}
    ordered = sorted(set(int(n) for n in numbers))
    entries = tuple(MapEntry(n, n + offset, codes.get(n)) for n in ordered)
    return MappingTable(scheme_from, scheme_to, "Arithmetic", entries,
                        offset=offset)


@dataclass(frozen=True)
class DbrefSegment:
    chain: str
    seq_begin: int
    seq_end: int
    db_seq_begin: int
    db_seq_end: int

    @property
    def offset(self) -> int:
        return self.db_seq_begin - self.seq_begin


def parse_dbref_segments(pdb_text: str, chain: str) -> list[DbrefSegment]:
    """Read the cross-reference segments for one chain, in file order."""
    segments = []
    seen_any = False
    for line in pdb_text.splitlines():
        if line[:6].strip() != "DBREF":
            continue
        seen_any = True
        if len(line) < 67 or line[12] != chain:
            continue
        segment = DbrefSegment(
            chain=chain,
            seq_begin=int(line[14:18]),
            seq_end=int(line[20:24]),
            db_seq_begin=int(line[55:60]),
            db_seq_end=int(line[62:67]),
        )
        if (segment.db_seq_end - segment.db_seq_begin
                != segment.seq_end - segment.seq_begin):
            raise ValueError("cross-reference segment lengths differ")
        segments.append(segment)
    if not seen_any:
        raise NoDbrefRecord("file has no database cross-reference records")
    if not segments:
        raise ChainNotFound(f"no cross-reference record for chain {chain!r}")
    return segments


@dataclass(frozen=True)
class ChainSequence:
    """Residues of one chain in file order, deduplicated by position.

    Alternate-location copies of the same residue collapse to one letter;
    residues with insertion codes are kept (they matter for alignment) but
    are excluded from :meth:`author_codes`, since offset arithmetic cannot
    represent them.
    """

    chain: str
    sequence: str
    numbers: tuple[int, ...]
    icodes: tuple[str, ...]
    residue_names: tuple[str, ...]

    def author_codes(self) -> dict[int, str]:
        return {num: name
                for num, icode, name in zip(self.numbers, self.icodes,
                                            self.residue_names)
                if not icode}


def extract_sequence(pdb_text: str, chain: str) -> ChainSequence:
    """Collect the one-letter sequence and author numbering of a chain."""
    seen: set[tuple[int, str]] = set()
    letters: list[str] = []
    numbers: list[int] = []
    icodes: list[str] = []
    names: list[str] = []
    for line in pdb_text.splitlines():
        if not line.startswith("ATOM"):
            continue
        if len(line) < 27 or line[21] != chain:
            continue
        res_seq = int(line[22:26])
        icode = line[26].strip()
        if (res_seq, icode) in seen:
            continue
        seen.add((res_seq, icode))
        res_name = line[17:20].strip().title()
        letters.append(THREE_TO_ONE.get(res_name, "X"))
        numbers.append(res_seq)
        icodes.append(icode)
        names.append(res_name)
    if not letters:
        raise ChainNotFound(f"no residues found for chain {chain!r}")
    return ChainSequence(chain, "".join(letters), tuple(numbers),
                         tuple(icodes), tuple(names))


def dbref_table(pdb_text: str, chain: str) -> MappingTable:
    """Build an author-to-database table from the chain's first segment.

    Covers every position in the segment's declared range, annotated with
    residue codes where coordinates exist for the position.
    """
    segment = parse_dbref_segments(pdb_text, chain)[0]
    return _segment_table(pdb_text, segment)


def dbref_segment_tables(pdb_text: str, chain: str) -> list[MappingTable]:
    """One table per cross-reference segment, for chains with several."""
    return [_segment_table(pdb_text, seg)
            for seg in parse_dbref_segments(pdb_text, chain)]


def _segment_table(pdb_text: str, segment: DbrefSegment) -> MappingTable:
    try:
        codes = extract_sequence(pdb_text, segment.chain).author_codes()
    except ChainNotFound:
        codes = {}
    entries = tuple(
        MapEntry(n, n + segment.offset, codes.get(n))
        for n in range(segment.seq_begin, segment.seq_end + 1))
    return MappingTable(
        NumberingScheme("PdbAuthor", chain=segment.chain),
        NumberingScheme("UniProt"),
        "Dbref", entries, offset=segment.offset)


def alignment_table(seq_from: str, seq_to: str, *,
                    scheme_from: NumberingScheme,
                    scheme_to: NumberingScheme,
                    params: AlignmentParams | None = None,
                    from_numbers=None, to_numbers=None) -> MappingTable:
    """Build a table from the optimal global alignment of two sequences.

    Position numbers default to 1-based sequence indices; pass explicit
    number lists when either side uses author numbering.
    """
    from_numbers = (tuple(from_numbers) if from_numbers is not None
                    else tuple(range(1, len(seq_from) + 1)))
    to_numbers = (tuple(to_numbers) if to_numbers is not None
                  else tuple(range(1, len(seq_to) + 1)))
    if len(from_numbers) != len(seq_from):
        raise ValueError("source numbering length differs from sequence")
    if len(to_numbers) != len(seq_to):
        raise ValueError("target numbering length differs from sequence")
    result = needleman_wunsch(seq_from, seq_to, params)
    entries = tuple(
        MapEntry(from_numbers[i], to_numbers[j],
                 ONE_TO_THREE.get(seq_from[i]))
        for i, j in result.pairs)
    aligned = {i for i, _ in result.pairs}
    unmapped = tuple(from_numbers[i] for i in range(len(seq_from))
                     if i not in aligned)
    return MappingTable(scheme_from, scheme_to, "Alignment", entries,
                        unmapped=unmapped)


_ARITH_TOKEN_RE = re.compile(r"^arith:([+-]?\d+)$")


def build_mapping(strategy_token: str, **inputs) -> MappingTable:
    """Dispatch on a strategy token like ``arith:+24``, ``dbref``, ``align``."""
    arith = _ARITH_TOKEN_RE.match(strategy_token)
    if arith:
        return arithmetic_table(int(arith.group(1)), **inputs)
    if strategy_token == "dbref":
        return dbref_table(**inputs)
    if strategy_token == "align":
        return alignment_table(**inputs)
    raise ValueError(f"unknown strategy token: {strategy_token!r}")


_TAG_KINDS = {"Pdb": "PdbAuthor", "Tool": "ToolSequential"}


def lookup(table: MappingTable, query: ResidueQuery, *,
           direction: str = "Forward",
           reference_scheme: NumberingScheme | None = None) -> LookupResult:
    """Translate one queried position through the table.

    Forward lookups read the source side, reverse lookups the target side.
    Bare queries carry no scheme of their own, so the caller must say which
    scheme they were written in via ``reference_scheme``.
    """
    if direction not in ("Forward", "Reverse"):
        raise ValueError(f"unknown direction: {direction!r}")
    if query.tag == "Bare":
        if reference_scheme is None:
            raise SchemeMismatch("bare queries need a reference scheme")
        query_kind = reference_scheme.kind
    else:
        query_kind = _TAG_KINDS[query.tag]
    side = table.scheme_from if direction == "Forward" else table.scheme_to
    if side.kind == "AnalysisOutput":
        raise SchemeMismatch(
            "derived-output scheme must be resolved before lookup")
    if query_kind != side.kind:
        raise SchemeMismatch(
            f"query uses {query_kind}, table side uses {side.kind}")

    for entry in table.entries:
        key = entry.from_number if direction == "Forward" else entry.to_number
        if key != query.number:
            continue
        if (query.residue_name and entry.residue_code
                and query.residue_name != entry.residue_code):
            raise NameMismatch(
                f"position {query.number} holds {entry.residue_code}, "
                f"not {query.residue_name}")
        other = (entry.to_number if direction == "Forward"
                 else entry.from_number)
        return LookupResult(other, entry.residue_code)
    if direction == "Forward" and query.number in table.unmapped:
        raise OutOfRange(f"position {query.number} has no counterpart")
    raise OutOfRange(f"position {query.number} is outside the mapped range")


CSV_HEADER = ("from_scheme", "to_scheme", "strategy",
              "from_number", "to_number", "residue_code")


def emit_csv(table: MappingTable) -> str:
    """Render the table as CSV, one row per source position.

    Unmapped positions appear with an empty target column so a reader can
    tell "not covered" from "absent from the table".
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    rows = [(e.from_number, str(e.to_number), e.residue_code or "")
            for e in table.entries]
    rows.extend((n, "", "") for n in table.unmapped)
    for from_number, to_number, code in sorted(rows, key=lambda r: r[0]):
        writer.writerow((table.scheme_from.kind, table.scheme_to.kind,
                         table.strategy_token, from_number, to_number, code))
    return buf.getvalue()


def parse_mapping_csv(text: str) -> MappingTable:
    """Rebuild a table from its CSV rendering."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != list(CSV_HEADER):
        raise ValueError(f"unexpected header: {header!r}")
    entries: list[MapEntry] = []
    unmapped: list[int] = []
    schemes: tuple[str, str] | None = None
    token = None
    for row in reader:
        if not row:
            continue
        from_kind, to_kind, token, from_number, to_number, code = row
        schemes = (from_kind, to_kind)
        if to_number == "":
            unmapped.append(int(from_number))
        else:
            entries.append(MapEntry(int(from_number), int(to_number),
                                    code or None))
    if schemes is None or token is None:
        raise ValueError("table has no rows")
    strategy, offset = _parse_strategy_token(token)
    return MappingTable(NumberingScheme(schemes[0]), NumberingScheme(schemes[1]),
                        strategy, tuple(entries), offset=offset,
                        unmapped=tuple(unmapped))


def _parse_strategy_token(token: str) -> tuple[str, int | None]:
    arith = _ARITH_TOKEN_RE.match(token)
    if arith:
        return "Arithmetic", int(arith.group(1))
    dbref = re.match(r"^dbref:([+-]?\d+)$", token)
    if dbref:
        return "Dbref", int(dbref.group(1))
    if token == "align":
        return "Alignment", None
    raise ValueError(f"unknown strategy token: {token!r}")
