"""Shared-control-pin rules for pin-constrained chips.

One physical pin may drive several electrodes, so actuating a cell for one
droplet can tug at another.  The rules decompose into per-droplet checks
(distinct pins around every droplet) and pairwise checks between the time-t
and time-t+1 positions of every droplet pair; a droplet that stays put is
the degenerate case with both positions equal.

Consequence wording: a shared pin on the cell directly behind a moving
droplet fights the destination electrode and strands it ("Droplet stuck on
(r,c)"); any other shared cell pulls the droplet sideways ("Droplet
stretch"); duplicated pins inside one neighborhood split it ("Unintentional
droplet split").
"""

from __future__ import annotations

from dataclasses import dataclass

from .chip import ChipState, OutOfBounds, neighbors4
from .diag import Code, Report, Violation, classify
from .isa import Dispense, DmfError, Loc, Move, Output, Program, TimedLine, Waste

# test-support counters (reset via reset_stats)
stats = {"pair_checks": 0}


def reset_stats() -> None:
    stats["pair_checks"] = 0


@dataclass(frozen=True)
class PinMap:
    rows: int
    cols: int
    pin: dict[Loc, int]

    def __post_init__(self):
        for r in range(1, self.rows + 1):
            for c in range(1, self.cols + 1):
                if Loc(r, c) not in self.pin:
                    raise DmfError(f"pin map is missing cell ({r},{c})")

    def pin_of(self, loc: Loc) -> int:
        if not (1 <= loc.row <= self.rows and 1 <= loc.col <= self.cols):
            raise OutOfBounds(f"{loc} outside the {self.rows}x{self.cols} pin map")
        return self.pin[loc]

    def n4(self, loc: Loc) -> set[Loc]:
        return neighbors4(loc, self.rows, self.cols)

    def injective(self) -> bool:
        return len(set(self.pin.values())) == len(self.pin)

    def with_remap(self, remap: dict[Loc, int]) -> "PinMap":
        new = dict(self.pin)
        for loc, p in remap.items():
            if loc not in new:
                raise OutOfBounds(f"{loc} outside the pin map")
            new[loc] = p
        return PinMap(self.rows, self.cols, new)


def dedicated_map(rows: int, cols: int) -> PinMap:
    """One pin per electrode (fully reconfigurable chip)."""
    pin = {Loc(r, c): (r - 1) * cols + c for r in range(1, rows + 1)
           for c in range(1, cols + 1)}
    return PinMap(rows, cols, pin)


def parse_pins(text: str) -> PinMap:
    grid: list[list[int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            grid.append([int(tok) for tok in line.split()])
        except ValueError:
            raise DmfError(f"pin map line {lineno}: not a row of integers") from None
    if not grid:
        raise DmfError("pin map is empty")
    cols = len(grid[0])
    if any(len(row) != cols for row in grid):
        raise DmfError("pin map rows have differing lengths")
    pin = {Loc(r + 1, c + 1): grid[r][c] for r in range(len(grid)) for c in range(cols)}
    return PinMap(len(grid), cols, pin)


def serialize_pins(pmap: PinMap) -> str:
    width = max(len(str(p)) for p in pmap.pin.values())
    rows = []
    for r in range(1, pmap.rows + 1):
        rows.append(" ".join(str(pmap.pin[Loc(r, c)]).rjust(width)
                             for c in range(1, pmap.cols + 1)))
    return "\n".join(rows) + "\n"


def pins_of(pmap: PinMap, cells) -> set[int]:
    """Set image of the pin assignment over a cell set."""
    return {pmap.pin_of(c) for c in cells}


# --- rule checks ---------------------------------------------------------------

def check_case1(pmap: PinMap, loc: Loc) -> "PinFinding | None":
    """Distinct pins are required on the four neighborhood electrodes."""
    seen: dict[int, list[Loc]] = {}
    for cell in sorted(pmap.n4(loc)):
        seen.setdefault(pmap.pin_of(cell), []).append(cell)
    for p, cells in sorted(seen.items()):
        if len(cells) > 1:
            return PinFinding(Code.PIN_CASE1, "Unintentional droplet split",
                              pins={p}, cells=(loc, *cells),
                              detail=f"pin {p} drives {len(cells)} neighbors of {loc}")
    return None


@dataclass(frozen=True)
class PinFinding:
    code: Code
    response: str
    pins: set[int]
    cells: tuple[Loc, ...]
    detail: str


def _consequence(shared_cells: list[Loc], affected_old: Loc, affected_new: Loc) -> str:
    if affected_old != affected_new:
        behind = Loc(2 * affected_old.row - affected_new.row,
                     2 * affected_old.col - affected_new.col)
        if behind in shared_cells:
            return f"Droplet stuck on {affected_old}"
    return "Droplet stretch"


def check_pair(pmap: PinMap, d1_t: Loc, d1_t1: Loc, d2_t: Loc, d2_t1: Loc) -> "PinFinding | None":
    """Pairwise movement rules between two droplets (static = equal positions)."""
    stats["pair_checks"] += 1
    checks = [
        ("2(a)", Code.PIN_CASE2, d1_t, set(pmap.n4(d2_t)), (d2_t, d2_t1)),
        ("2(b)", Code.PIN_CASE2, d2_t, set(pmap.n4(d1_t)), (d1_t, d1_t1)),
        ("2(c)", Code.PIN_CASE2, d1_t1, set(pmap.n4(d2_t1)), (d2_t, d2_t1)),
        ("2(d)", Code.PIN_CASE2, d2_t1, set(pmap.n4(d1_t1)), (d1_t, d1_t1)),
        ("3(a)", Code.PIN_CASE3, d1_t1, set(pmap.n4(d2_t)) - {d2_t1}, (d2_t, d2_t1)),
        ("3(b)", Code.PIN_CASE3, d2_t1, set(pmap.n4(d1_t)) - {d1_t1}, (d1_t, d1_t1)),
    ]
    seen: set[tuple[Loc, frozenset[Loc]]] = set()
    for label, code, single, hood, affected in checks:
        key = (single, frozenset(hood))
        if key in seen:
            continue
        seen.add(key)
        single_pin = pmap.pin_of(single)
        shared_cells = sorted(c for c in hood if pmap.pin_of(c) == single_pin)
        if shared_cells:
            response = _consequence(shared_cells, *affected)
            return PinFinding(
                code, response, pins={single_pin},
                cells=(single, *shared_cells),
                detail=f"case {label}: Pin({{{single}}}) meets Pin(N4 region) on "
                       f"{{{single_pin}}}")
    return None


def check_dispense_pins(pmap: PinMap, state: ChipState, loc: Loc,
                        extra_droplets: tuple[Loc, ...] = ()) -> "PinFinding | None":
    """A dispensed droplet's pin must avoid its own and every droplet's N4 pins."""
    own = pmap.pin_of(loc)
    shared_self = sorted(c for c in pmap.n4(loc) if pmap.pin_of(c) == own)
    if shared_self:
        return PinFinding(Code.PIN_DISPENSE, "Droplet stretch", pins={own},
                          cells=(loc, *shared_self),
                          detail=f"pin {own} is repeated in N4({loc})")
    others = sorted(state.by_loc) + [c for c in extra_droplets if c != loc]
    for d in others:
        shared = sorted(c for c in pmap.n4(d) if pmap.pin_of(c) == own)
        if shared:
            return PinFinding(Code.PIN_DISPENSE, "Droplet stretch", pins={own},
                              cells=(loc, d, *shared),
                              detail=f"pin {own} of {loc} drives a neighbor of the "
                                     f"droplet at {d}")
    return None


# --- per-tick phase (driven by the fluidics engine) -----------------------------

def _finding_to_violation(f: PinFinding, t: int, instructions: tuple[str, ...],
                          consequence: str = "") -> Violation:
    return classify(f.code, f.response, t=t, instructions=instructions,
                    cells=f.cells, pins=tuple(sorted(f.pins)),
                    detail=f.detail, consequence=consequence or f.response)


def pin_phase(pmap: PinMap, snapshot: ChipState, committed: ChipState,
              line: TimedLine, effects, t: int) -> list[Violation]:
    """Pin rules for one tick: dispense checks, all droplet pairs, Case 1."""
    out: list[Violation] = []

    moved: dict[Loc, tuple[Loc, int]] = {}      # new loc -> (old loc, instr index)
    dispensed: list[tuple[Loc, int]] = []
    for i, instr in effects:
        if isinstance(instr, Move):
            moved[instr.dst] = (instr.src, i)
        elif isinstance(instr, Dispense):
            dispensed.append((instr.loc, i))

    for loc, i in dispensed:
        others = tuple(l for l, _ in dispensed if l != loc)
        f = check_dispense_pins(pmap, snapshot, loc, extra_droplets=others)
        if f is not None:
            out.append(_finding_to_violation(f, t, (line.instrs[i].compact(),)))

    # participants: (old, new, instr index or None); mixer endpoints excluded
    participants: list[tuple[Loc, Loc, int | None]] = []
    pinned_cells = {c for mx in committed.mixers for c in (mx.a, mx.b)}
    for loc in sorted(committed.by_loc):
        if loc in pinned_cells:
            continue
        if loc in moved:
            old, i = moved[loc]
            participants.append((old, loc, i))
        elif loc in {l for l, _ in dispensed}:
            continue  # covered by the dispense rule this tick
        else:
            participants.append((loc, loc, None))
    # droplets sent to waste/output this tick participate as static at t
    for i, instr in effects:
        if isinstance(instr, (Waste, Output)):
            participants.append((instr.loc, instr.loc, None))

    participants.sort(key=lambda p: p[0])
    for a in range(len(participants)):
        for b in range(a + 1, len(participants)):
            o1, n1, i1 = participants[a]
            o2, n2, i2 = participants[b]
            f = check_pair(pmap, o1, n1, o2, n2)
            if f is not None:
                idxs = tuple(sorted(i for i in (i1, i2) if i is not None))
                instrs = tuple(line.instrs[i].compact() for i in idxs)
                out.append(_finding_to_violation(f, t, instrs))

    for loc in sorted(committed.by_loc):
        f = check_case1(pmap, loc)
        if f is not None:
            idx = moved.get(loc)
            instrs = (line.instrs[idx[1]].compact(),) if idx else ()
            out.append(_finding_to_violation(f, t, instrs))
    return out


def verify_program_pins(program: Program, pmap: PinMap, *, policy: str = "first",
                        t_max: int | None = None) -> Report:
    """Fluidic verification plus the per-tick pin phase."""
    from . import fluidics

    if (pmap.rows, pmap.cols) != (program.header.rows, program.header.cols):
        raise DmfError(
            f"pin map is {pmap.rows}x{pmap.cols} but the chip is "
            f"{program.header.rows}x{program.header.cols}")
    _, report = fluidics.verify_program(program, pin_map=pmap, policy=policy,
                                        t_max=t_max)
    return report
