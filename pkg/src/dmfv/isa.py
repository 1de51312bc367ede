"""Fluidic instruction set: grammar, parser and serializer for .dmf programs.

A program is line oriented.  Header lines declare the electrode array
(``dim``), the concentration accuracy (``accuracy``), reservoirs
(``R``/``O``/``W``), optional on-chip detectors (``D``) and an optional
completion bound (``tmax``).  Every following line is ``<t> <instr>...``;
instructions sharing a line fire concurrently at tick t.  Error-recovery
routines appear after the main sequence as ``recovery <id>:`` blocks closed
by ``endrecovery``.

Two move/mix spellings are accepted, the arrow form ``m([3,1]->[3,2])`` /
``mix([3,1]<->[3,4],12,14)`` and the compact form ``m(3,1,3,2)`` /
``mix(3,1,3,4,12,14)``; both parse to the same AST and serialize back to
the arrow form.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, NamedTuple


class Loc(NamedTuple):
    row: int
    col: int

    def __str__(self) -> str:
        return f"({self.row},{self.col})"


class RKind(Enum):
    REAGENT = "R"
    OUTPUT = "O"
    WASTE = "W"


class MType(Enum):
    # 1x4 horizontal and 4x1 vertical linear mixers; extensible.
    H14 = "14"
    V41 = "41"


@dataclass(frozen=True)
class ReservoirDecl:
    loc: Loc
    kind: RKind
    name: str | None = None  # reagent name, only for RKind.REAGENT

    def text(self) -> str:
        if self.kind is RKind.REAGENT:
            return f"R({self.loc.row},{self.loc.col},{self.name})"
        return f"{self.kind.value}({self.loc.row},{self.loc.col})"


@dataclass(frozen=True)
class DetectorDecl:
    id: str
    loc: Loc
    duration: int

    def text(self) -> str:
        return f"D({self.id},{self.loc.row},{self.loc.col},{self.duration})"


@dataclass(frozen=True)
class ChipHeader:
    rows: int
    cols: int
    accuracy: int
    reservoirs: tuple[ReservoirDecl, ...]

    def in_bounds(self, loc: Loc) -> bool:
        return 1 <= loc.row <= self.rows and 1 <= loc.col <= self.cols

    @property
    def reagents(self) -> tuple[str, ...]:
        """Reagent names in declaration order (the CF component order)."""
        seen: list[str] = []
        for r in self.reservoirs:
            if r.kind is RKind.REAGENT and r.name not in seen:
                seen.append(r.name)
        return tuple(seen)


# --- instructions ---------------------------------------------------------

@dataclass(frozen=True)
class Dispense:
    loc: Loc

    def compact(self) -> str:
        return f"d({self.loc.row},{self.loc.col})"

    canonical = compact


@dataclass(frozen=True)
class Move:
    src: Loc
    dst: Loc

    def compact(self) -> str:
        return f"m({self.src.row},{self.src.col},{self.dst.row},{self.dst.col})"

    def canonical(self) -> str:
        return f"m([{self.src.row},{self.src.col}]->[{self.dst.row},{self.dst.col}])"


@dataclass(frozen=True)
class MixStart:
    a: Loc
    b: Loc
    t_mix: int
    mtype: MType

    def compact(self) -> str:
        return (f"mix({self.a.row},{self.a.col},{self.b.row},{self.b.col},"
                f"{self.t_mix},{self.mtype.value})")

    def canonical(self) -> str:
        return (f"mix([{self.a.row},{self.a.col}]<->[{self.b.row},{self.b.col}],"
                f"{self.t_mix},{self.mtype.value})")


@dataclass(frozen=True)
class Waste:
    loc: Loc

    def compact(self) -> str:
        return f"waste({self.loc.row},{self.loc.col})"

    canonical = compact


@dataclass(frozen=True)
class Output:
    loc: Loc

    def compact(self) -> str:
        return f"output({self.loc.row},{self.loc.col})"

    canonical = compact


@dataclass(frozen=True)
class DetectStart:
    detector: str

    def compact(self) -> str:
        return f"detect({self.detector})"

    canonical = compact


@dataclass(frozen=True)
class CondCall:
    detector: str
    recovery: str

    def compact(self) -> str:
        return f"if({self.detector}) call Recovery({self.recovery})"

    canonical = compact


@dataclass(frozen=True)
class End:
    def compact(self) -> str:
        return "end"

    canonical = compact


Instruction = Dispense | Move | MixStart | Waste | Output | DetectStart | CondCall | End


@dataclass(frozen=True)
class TimedLine:
    t: int
    instrs: tuple[Instruction, ...]

    def text(self) -> str:
        return f"{self.t} " + " ".join(i.canonical() for i in self.instrs)


@dataclass(frozen=True)
class Program:
    header: ChipHeader
    main: tuple[TimedLine, ...]
    detectors: tuple[DetectorDecl, ...] = ()
    recoveries: dict[str, tuple[TimedLine, ...]] = field(default_factory=dict)
    t_max: int | None = None

    @property
    def has_conditionals(self) -> bool:
        return any(isinstance(i, CondCall) for ln in self.main for i in ln.instrs)

    def detector(self, det_id: str) -> DetectorDecl | None:
        for d in self.detectors:
            if d.id == det_id:
                return d
        return None

    def line_at(self, t: int) -> TimedLine | None:
        for ln in self.main:
            if ln.t == t:
                return ln
        return None


# --- errors ----------------------------------------------------------------

class DmfError(Exception):
    pass


class ParseError(DmfError):
    def __init__(self, message: str, line: int, col: int = 0, expected: str = ""):
        self.line = line
        self.col = col
        self.expected = expected
        loc = f"line {line}" + (f", col {col}" if col else "")
        suffix = f" (expected {expected})" if expected else ""
        super().__init__(f"{loc}: {message}{suffix}")


@dataclass(frozen=True)
class SemanticError:
    code: str
    message: str
    t: int | None = None

    def __str__(self) -> str:
        at = f" at t={self.t}" if self.t is not None else ""
        return f"{self.code}{at}: {self.message}"


class ValidationError(DmfError):
    def __init__(self, issues: list[SemanticError]):
        self.issues = issues
        super().__init__("; ".join(str(i) for i in issues))


# --- parsing ----------------------------------------------------------------

_DIM_RE = re.compile(r"dim\s*(?:\(\s*(\d+)\s*,\s*(\d+)\s*\)|\s(\d+)\s+(\d+))\s*$")
_ACC_RE = re.compile(r"accuracy\s+(\d+)\s*$")
_TMAX_RE = re.compile(r"tmax\s+(\d+)\s*$")
_RECOVERY_RE = re.compile(r"recovery\s+(\w+)\s*:\s*$")
_TIMED_RE = re.compile(r"(\d+)\s+(\S.*)$")

_DECL_PATTERNS = [
    ("R", re.compile(r"R\((\d+),(\d+),([A-Za-z_]\w*)\)")),
    ("O", re.compile(r"O\((\d+),(\d+)\)")),
    ("W", re.compile(r"W\((\d+),(\d+)\)")),
    ("D", re.compile(r"D\(([A-Za-z_]\w*),(\d+),(\d+),(\d+)\)")),
]

_INSTR_PATTERNS = [
    ("mix_a", re.compile(r"mix\(\[(\d+),(\d+)\]\s*<->\s*\[(\d+),(\d+)\],(\d+),(\d+)\)")),
    ("mix_c", re.compile(r"mix\((\d+),(\d+),(\d+),(\d+),(\d+),(\d+)\)")),
    ("move_a", re.compile(r"m\(\[(\d+),(\d+)\]\s*->\s*\[(\d+),(\d+)\]\)")),
    ("move_c", re.compile(r"m\((\d+),(\d+),(\d+),(\d+)\)")),
    ("dispense", re.compile(r"d\((\d+),(\d+)\)")),
    ("waste", re.compile(r"waste\((\d+),(\d+)\)")),
    ("output", re.compile(r"output\((\d+),(\d+)\)")),
    ("detect", re.compile(r"detect\(([A-Za-z_]\w*)\)")),
    ("cond", re.compile(r"if\s*\(\s*([A-Za-z_]\w*)\s*\)\s*call\s*<?\s*Recovery\(\s*(\w+)\s*\)\s*>?")),
    ("end", re.compile(r"end\b")),
]


def _scan(line: str, lineno: int, patterns, build) -> list:
    """Scan a whole line as a whitespace-separated sequence of pattern matches."""
    out = []
    pos = 0
    n = len(line)
    while pos < n:
        if line[pos].isspace():
            pos += 1
            continue
        for name, pat in patterns:
            m = pat.match(line, pos)
            if m:
                out.append(build(name, m, lineno, pos))
                pos = m.end()
                break
        else:
            raise ParseError(f"unrecognized token {line[pos:pos + 24]!r}",
                             lineno, pos + 1, "an instruction or declaration")
    return out


def _mk_decl(name: str, m: re.Match, lineno: int, pos: int):
    if name == "R":
        return ReservoirDecl(Loc(int(m[1]), int(m[2])), RKind.REAGENT, m[3])
    if name == "O":
        return ReservoirDecl(Loc(int(m[1]), int(m[2])), RKind.OUTPUT)
    if name == "W":
        return ReservoirDecl(Loc(int(m[1]), int(m[2])), RKind.WASTE)
    return DetectorDecl(m[1], Loc(int(m[2]), int(m[3])), int(m[4]))


def _mk_instr(name: str, m: re.Match, lineno: int, pos: int) -> Instruction:
    col = pos + 1
    if name in ("move_a", "move_c"):
        src, dst = Loc(int(m[1]), int(m[2])), Loc(int(m[3]), int(m[4]))
        if abs(src.row - dst.row) + abs(src.col - dst.col) != 1:
            raise ParseError(f"move destination {dst} is not a 4-neighbor of {src}",
                             lineno, col)
        return Move(src, dst)
    if name in ("mix_a", "mix_c"):
        a, b = Loc(int(m[1]), int(m[2])), Loc(int(m[3]), int(m[4]))
        t_mix = int(m[5])
        if t_mix < 1:
            raise ParseError("mixing time must be at least 1", lineno, col)
        try:
            mtype = MType(m[6])
        except ValueError:
            raise ParseError(f"unknown mixer type {m[6]!r}", lineno, col, "14 or 41") from None
        return MixStart(a, b, t_mix, mtype)
    if name == "dispense":
        return Dispense(Loc(int(m[1]), int(m[2])))
    if name == "waste":
        return Waste(Loc(int(m[1]), int(m[2])))
    if name == "output":
        return Output(Loc(int(m[1]), int(m[2])))
    if name == "detect":
        return DetectStart(m[1])
    if name == "cond":
        return CondCall(m[1], m[2])
    return End()


def _content_lines(text: str) -> Iterator[tuple[int, str]]:
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield i, line


def parse_program(text: str, *, validate: bool = True) -> Program:
    """Parse a .dmf program.

    Raises ParseError on malformed tokens.  With ``validate`` (the default),
    structural invariants are also enforced and the first batch of semantic
    issues raises ValidationError; pass ``validate=False`` to obtain the raw
    parse and inspect issues via :func:`validate_structure`.
    """
    dim: tuple[int, int] | None = None
    accuracy: int | None = None
    t_max: int | None = None
    reservoirs: list[ReservoirDecl] = []
    detectors: list[DetectorDecl] = []
    main: list[TimedLine] = []
    recoveries: dict[str, tuple[TimedLine, ...]] = {}
    current_recovery: str | None = None
    recovery_lines: list[TimedLine] = []

    for lineno, line in _content_lines(text):
        m = _DIM_RE.match(line)
        if m:
            if dim is not None:
                raise ParseError("duplicate dim declaration", lineno)
            vals = [g for g in m.groups() if g is not None]
            dim = (int(vals[0]), int(vals[1]))
            if dim[0] < 1 or dim[1] < 1:
                raise ParseError("chip dimensions must be positive", lineno)
            continue
        m = _ACC_RE.match(line)
        if m:
            accuracy = int(m[1])
            continue
        m = _TMAX_RE.match(line)
        if m:
            t_max = int(m[1])
            continue
        m = _RECOVERY_RE.match(line)
        if m:
            if current_recovery is not None:
                raise ParseError("recovery block opened inside another recovery", lineno)
            current_recovery = m[1]
            recovery_lines = []
            continue
        if line == "endrecovery":
            if current_recovery is None:
                raise ParseError("endrecovery outside a recovery block", lineno)
            if current_recovery in recoveries:
                raise ParseError(f"duplicate recovery block {current_recovery!r}", lineno)
            recoveries[current_recovery] = tuple(recovery_lines)
            current_recovery = None
            continue
        m = _TIMED_RE.match(line)
        if m:
            instrs = _scan(m[2], lineno, _INSTR_PATTERNS, _mk_instr)
            tl = TimedLine(int(m[1]), tuple(instrs))
            (recovery_lines if current_recovery is not None else main).append(tl)
            continue
        if line[0] in "ROWD":
            if main or current_recovery is not None:
                raise ParseError("declarations must precede instruction lines", lineno)
            for decl in _scan(line, lineno, _DECL_PATTERNS, _mk_decl):
                (detectors if isinstance(decl, DetectorDecl) else reservoirs).append(decl)
            continue
        raise ParseError(f"unrecognized line {line[:32]!r}", lineno)

    if current_recovery is not None:
        raise ParseError(f"recovery block {current_recovery!r} not closed", 0, expected="endrecovery")
    if dim is None:
        raise ParseError("missing dim declaration", 0, expected="dim(r,c)")
    if accuracy is None:
        raise ParseError("missing accuracy declaration", 0, expected="accuracy n")

    header = ChipHeader(dim[0], dim[1], accuracy, tuple(reservoirs))
    program = Program(header, tuple(main), tuple(detectors), recoveries, t_max)
    if validate:
        issues = validate_structure(program)
        if issues:
            raise ValidationError(issues)
    return program


def serialize_program(p: Program) -> str:
    """Canonical text form; parse_program(serialize_program(p)) == p."""
    out = [f"dim({p.header.rows},{p.header.cols})", f"accuracy {p.header.accuracy}"]
    if p.header.reservoirs:
        out.append(" ".join(r.text() for r in p.header.reservoirs))
    if p.detectors:
        out.append(" ".join(d.text() for d in p.detectors))
    if p.t_max is not None:
        out.append(f"tmax {p.t_max}")
    out.extend(ln.text() for ln in p.main)
    for rid, lines in p.recoveries.items():
        out.append(f"recovery {rid}:")
        out.extend(ln.text() for ln in lines)
        out.append("endrecovery")
    return "\n".join(out) + "\n"


# --- structural validation ---------------------------------------------------

def _check_locs(p: Program, line: TimedLine, issues: list[SemanticError]) -> None:
    def bad(loc: Loc) -> bool:
        return not p.header.in_bounds(loc)

    for instr in line.instrs:
        locs: tuple[Loc, ...] = ()
        if isinstance(instr, (Dispense, Waste, Output)):
            locs = (instr.loc,)
        elif isinstance(instr, Move):
            locs = (instr.src, instr.dst)
        elif isinstance(instr, MixStart):
            locs = (instr.a, instr.b)
        for loc in locs:
            if bad(loc):
                issues.append(SemanticError(
                    "OutOfBounds", f"{instr.compact()} references {loc} outside the "
                    f"{p.header.rows}x{p.header.cols} array", line.t))


def validate_structure(p: Program) -> list[SemanticError]:
    """Return all structural invariant violations (empty list means valid)."""
    issues: list[SemanticError] = []
    hdr = p.header

    if hdr.accuracy < 1:
        issues.append(SemanticError("BadAccuracy", "accuracy must be at least 1"))
    if not any(r.kind is RKind.REAGENT for r in hdr.reservoirs):
        issues.append(SemanticError("NoReagentReservoir", "at least one reagent reservoir is required"))
    seen_locs: set[Loc] = set()
    for r in hdr.reservoirs:
        if r.loc in seen_locs:
            issues.append(SemanticError("DuplicateReservoir", f"two reservoirs declared at {r.loc}"))
        seen_locs.add(r.loc)
        if not hdr.in_bounds(r.loc):
            issues.append(SemanticError("OutOfBounds", f"reservoir at {r.loc} outside the array"))
    det_ids: set[str] = set()
    for d in p.detectors:
        if d.id in det_ids:
            issues.append(SemanticError("DuplicateDetector", f"detector {d.id} declared twice"))
        det_ids.add(d.id)
        if not hdr.in_bounds(d.loc):
            issues.append(SemanticError("OutOfBounds", f"detector {d.id} at {d.loc} outside the array"))
        if d.duration < 1:
            issues.append(SemanticError("BadDuration", f"detector {d.id} duration must be at least 1"))

    def check_lines(lines: tuple[TimedLine, ...], in_recovery: str | None) -> None:
        prev = None
        for ln in lines:
            if prev is not None and ln.t <= prev:
                issues.append(SemanticError(
                    "NonMonotonicTime", f"timestamp {ln.t} does not increase past {prev}", ln.t))
            prev = ln.t
            if ln.t < 0:
                issues.append(SemanticError("BadTimestamp", "timestamps must be non-negative", ln.t))
            _check_locs(p, ln, issues)
            for instr in ln.instrs:
                if isinstance(instr, (DetectStart, CondCall)) and instr.detector not in det_ids:
                    issues.append(SemanticError(
                        "UndeclaredDetector", f"detector {instr.detector!r} is not declared", ln.t))
                if isinstance(instr, CondCall):
                    if in_recovery is not None:
                        issues.append(SemanticError(
                            "NestedConditional", "recovery routines may not branch", ln.t))
                    elif instr.recovery not in p.recoveries:
                        issues.append(SemanticError(
                            "UndeclaredRecovery", f"Recovery({instr.recovery}) has no block", ln.t))
                    elif len(ln.instrs) != 1:
                        issues.append(SemanticError(
                            "CondNotAlone", "a conditional call must be alone on its line", ln.t))
                if isinstance(instr, End) and in_recovery is not None:
                    issues.append(SemanticError("EndInRecovery", "end is not allowed in a recovery", ln.t))

    check_lines(p.main, None)
    for rid, lines in p.recoveries.items():
        if not lines:
            issues.append(SemanticError("EmptyRecovery", f"Recovery({rid}) has no instruction lines"))
        check_lines(lines, rid)

    # end must be the final instruction of the final main line, nowhere else
    for i, ln in enumerate(p.main):
        for j, instr in enumerate(ln.instrs):
            if isinstance(instr, End):
                last = i == len(p.main) - 1 and j == len(ln.instrs) - 1
                if not last:
                    issues.append(SemanticError("EndNotLast", "end must be the final instruction", ln.t))

    # each recovery referenced by at most one conditional (fault model)
    used: dict[str, int] = {}
    for ln in p.main:
        for instr in ln.instrs:
            if isinstance(instr, CondCall):
                used[instr.recovery] = used.get(instr.recovery, 0) + 1
    for rid, count in used.items():
        if count > 1:
            issues.append(SemanticError(
                "RecoveryReused", f"Recovery({rid}) is referenced by {count} conditionals"))

    if p.t_max is not None and p.main and p.t_max < p.main[-1].t:
        issues.append(SemanticError(
            "TMaxTooSmall", f"tmax {p.t_max} precedes the final line at t={p.main[-1].t}"))
    return issues
