"""Error injection: reproducible mutations of a clean actuation program.

Each preset targets one error class.  The searching presets (e1..e4) replay
the clean program and pick the earliest mutation site deterministically;
e5/e6/e7 take the mutation site as parameters with simple defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import chip, fluidics
from .isa import (Dispense, DmfError, Instruction, Loc, MixStart, Move, MType,
                  Program, RKind, ReservoirDecl, TimedLine, serialize_program)


class MutationInapplicable(DmfError):
    pass


@dataclass(frozen=True)
class InjectionSpec:
    code: str                       # e1..e7 or "pin"
    line: int | None = None         # timestamp of the targeted line
    pos: int | None = None          # instruction index within that line
    move: tuple[Loc, Loc] | None = None
    to: Loc | None = None
    duration: int | None = None
    swap: tuple[str, str] | None = None
    remap: dict[Loc, int] = field(default_factory=dict)


# --- structural edits -----------------------------------------------------------

def _with_lines(program: Program, lines: list[TimedLine]) -> Program:
    lines = sorted(lines, key=lambda ln: ln.t)
    return Program(program.header, tuple(lines), program.detectors,
                   program.recoveries, program.t_max)


def add_instruction(program: Program, t: int, instr: Instruction) -> Program:
    lines = list(program.main)
    for i, ln in enumerate(lines):
        if ln.t == t:
            lines[i] = TimedLine(t, ln.instrs + (instr,))
            return _with_lines(program, lines)
    end_t = lines[-1].t if lines else 0
    if t > end_t:
        raise MutationInapplicable(f"t={t} is past the end of the program")
    lines.append(TimedLine(t, (instr,)))
    return _with_lines(program, lines)


def replace_instruction(program: Program, t: int, pos: int,
                        instr: Instruction) -> Program:
    lines = list(program.main)
    for i, ln in enumerate(lines):
        if ln.t == t:
            if not 0 <= pos < len(ln.instrs):
                raise MutationInapplicable(f"line {t} has no instruction #{pos}")
            instrs = list(ln.instrs)
            instrs[pos] = instr
            lines[i] = TimedLine(t, tuple(instrs))
            return _with_lines(program, lines)
    raise MutationInapplicable(f"no line at t={t}")


def remove_instruction(program: Program, t: int, pos: int) -> tuple[Program, Instruction]:
    lines = list(program.main)
    for i, ln in enumerate(lines):
        if ln.t == t:
            if not 0 <= pos < len(ln.instrs):
                raise MutationInapplicable(f"line {t} has no instruction #{pos}")
            instrs = list(ln.instrs)
            removed = instrs.pop(pos)
            if instrs:
                lines[i] = TimedLine(t, tuple(instrs))
            else:
                lines.pop(i)
            return _with_lines(program, lines), removed
    raise MutationInapplicable(f"no line at t={t}")


def shift_instruction(program: Program, t: int, pos: int, new_t: int) -> Program:
    program, instr = remove_instruction(program, t, pos)
    return add_instruction(program, new_t, instr)


def swap_reagent_names(program: Program, a: str, b: str) -> Program:
    decls = []
    hit = 0
    for r in program.header.reservoirs:
        if r.kind is RKind.REAGENT and r.name == a:
            decls.append(ReservoirDecl(r.loc, r.kind, b))
            hit += 1
        elif r.kind is RKind.REAGENT and r.name == b:
            decls.append(ReservoirDecl(r.loc, r.kind, a))
            hit += 1
        else:
            decls.append(r)
    if hit < 2:
        raise MutationInapplicable(f"reagents {a!r} and {b!r} not both declared")
    header = type(program.header)(program.header.rows, program.header.cols,
                                  program.header.accuracy, tuple(decls))
    return Program(header, program.main, program.detectors, program.recoveries,
                   program.t_max)


# --- searching presets -----------------------------------------------------------

_DIRS = (Loc(-1, 0), Loc(1, 0), Loc(0, -1), Loc(0, 1))


def _clean_trace(program: Program) -> fluidics.Trace:
    trace, report = fluidics.verify_program(program)
    if not report.ok:
        raise MutationInapplicable("program is not clean; cannot stage an injection")
    return trace


def _pre_line_state(program: Program, t: int) -> chip.ChipState:
    state = fluidics.state_at(program, t - 1)
    state, _ = chip.expire_mixers(state, t)
    return chip.expire_detections(state, t)


def _line_context(program: Program, t: int):
    line = program.line_at(t)
    move_srcs: set[Loc] = set()
    busy: set[Loc] = set()      # engaged by non-move instructions
    claimed: set[Loc] = set()
    if line is not None:
        for instr in line.instrs:
            if isinstance(instr, Move):
                move_srcs.add(instr.src)
                claimed.add(instr.dst)
            elif isinstance(instr, Dispense):
                claimed.add(instr.loc)
            elif isinstance(instr, MixStart):
                busy.update((instr.a, instr.b))
            elif hasattr(instr, "loc"):
                busy.add(instr.loc)
    return move_srcs, busy, claimed


def _move_candidates(program: Program, *, want_dynamic: bool):
    """Earliest (t, src, dst) whose added move trips the clearance rule."""
    final_t = program.main[-1].t if program.main else 0
    for t in range(1, final_t + 1):
        state = _pre_line_state(program, t)
        move_srcs, busy, claimed = _line_context(program, t)
        for src in sorted(state.by_loc):
            rec = state.droplets[state.by_loc[src]]
            if (src in busy or src in move_srcs or state.mixer_pinning(rec.key)
                    or state.detection_pinning(rec.key)):
                continue
            for d in _DIRS:
                dst = Loc(src.row + d.row, src.col + d.col)
                if not state.in_bounds(dst) or dst in state.by_loc or dst in claimed:
                    continue
                conflicts = fluidics.move_conflicts(state, src, dst)
                if not conflicts or any(c in busy for c in conflicts):
                    continue
                moving = [c for c in conflicts if c in move_srcs]
                if want_dynamic and moving:
                    yield t, src, dst
                elif not want_dynamic and not moving:
                    yield t, src, dst


def _find_move(program: Program, *, want_dynamic: bool) -> tuple[int, Loc, Loc]:
    for hit in _move_candidates(program, want_dynamic=want_dynamic):
        return hit
    raise MutationInapplicable("no suitable move-injection site found")


def _inject_e1(program: Program, spec: InjectionSpec) -> tuple[Program, str]:
    _clean_trace(program)
    if spec.move and spec.line:
        t, (src, dst) = spec.line, spec.move
    else:
        t, src, dst = _find_move(program, want_dynamic=False)
    p = add_instruction(program, t, Move(src, dst))
    return p, f"added {Move(src, dst).compact()} at t={t} (lands next to an idle droplet)"


def _inject_e2(program: Program, spec: InjectionSpec) -> tuple[Program, str]:
    _clean_trace(program)
    if spec.move and spec.line:
        t, (src, dst) = spec.line, spec.move
    else:
        t, src, dst = _find_move(program, want_dynamic=True)
    p = add_instruction(program, t, Move(src, dst))
    return p, f"added {Move(src, dst).compact()} at t={t} (interferes with a concurrent move)"


def _inject_e3(program: Program, spec: InjectionSpec) -> tuple[Program, str]:
    for ln in program.main:
        for pos, instr in enumerate(ln.instrs):
            if isinstance(instr, Dispense):
                if spec.to is not None:
                    bad = spec.to
                else:
                    bad = None
                    for d in _DIRS:
                        cand = Loc(instr.loc.row + d.row, instr.loc.col + d.col)
                        if program.header.in_bounds(cand) and not any(
                                r.loc == cand for r in program.header.reservoirs):
                            bad = cand
                            break
                    if bad is None:
                        continue
                p = replace_instruction(program, ln.t, pos, Dispense(bad))
                return p, (f"replaced {instr.compact()} with {Dispense(bad).compact()} "
                           f"at t={ln.t}")
    raise MutationInapplicable("no dispense instruction to corrupt")


def _inject_e4(program: Program, spec: InjectionSpec) -> tuple[Program, str]:
    last: tuple[int, MixStart] | None = None
    for ln in program.main:
        for instr in ln.instrs:
            if isinstance(instr, MixStart):
                last = (ln.t, instr)
    if last is None:
        raise MutationInapplicable("no mixing operation to disturb")
    t_s, mix = last
    a, b = mix.a, mix.b
    if mix.mtype is MType.H14:
        dst = Loc(a.row, a.col - 1) if a.col < b.col else Loc(a.row, a.col + 1)
    else:
        dst = Loc(a.row - 1, a.col) if a.row < b.row else Loc(a.row + 1, a.col)
    if not program.header.in_bounds(dst):
        raise MutationInapplicable("mixer endpoint sits on the array edge")
    t = spec.line if spec.line is not None else t_s + 1
    p = add_instruction(program, t, Move(a, dst))
    return p, f"added {Move(a, dst).compact()} at t={t} (droplet is mixing until t={t_s + mix.t_mix + 1})"


def _first_mix(program: Program) -> tuple[int, int, MixStart]:
    for ln in program.main:
        for pos, instr in enumerate(ln.instrs):
            if isinstance(instr, MixStart):
                return ln.t, pos, instr
    raise MutationInapplicable("no mixing operation present")


def _inject_e5(program: Program, spec: InjectionSpec) -> tuple[Program, str]:
    if spec.line is not None:
        t, pos = spec.line, spec.pos or 0
        line = program.line_at(t)
        if line is None or not isinstance(line.instrs[pos], MixStart):
            raise MutationInapplicable(f"no mix instruction at t={t} #{pos}")
        mix = line.instrs[pos]
    else:
        t, pos, mix = _first_mix(program)
    if t < 1:
        raise MutationInapplicable("cannot schedule the mixer any earlier")
    p = shift_instruction(program, t, pos, t - 1)
    return p, f"moved {mix.compact()} one tick early, from t={t} to t={t - 1}"


def _inject_e6(program: Program, spec: InjectionSpec) -> tuple[Program, str]:
    if spec.line is not None:
        t, pos = spec.line, spec.pos or 0
        line = program.line_at(t)
        if line is None or pos >= len(line.instrs) or not isinstance(line.instrs[pos], MixStart):
            raise MutationInapplicable(f"no mix instruction at t={t} #{pos}")
        mix = line.instrs[pos]
    else:
        t, pos, mix = _first_mix(program)
    duration = spec.duration if spec.duration is not None else max(1, mix.t_mix - 2)
    if duration >= mix.t_mix:
        raise MutationInapplicable("shortened duration must be below the original")
    p = replace_instruction(program, t, pos,
                            MixStart(mix.a, mix.b, duration, mix.mtype))
    return p, f"shortened {mix.compact()} at t={t} to t_mix={duration}"


def _inject_e7(program: Program, spec: InjectionSpec) -> tuple[Program, str]:
    if spec.swap is not None:
        a, b = spec.swap
    else:
        names = program.header.reagents
        if len(names) < 2:
            raise MutationInapplicable("need two reagents to swap")
        a, b = (names[1], names[2]) if len(names) >= 3 else (names[0], names[1])
    p = swap_reagent_names(program, a, b)
    return p, f"interchanged reagents {a} and {b} in the reservoir assignment"


def inject_error(program: Program, spec: InjectionSpec) -> tuple[Program, str]:
    """Apply the preset for spec.code; returns the mutated program and a note."""
    dispatch = {
        "e1": _inject_e1, "e2": _inject_e2, "e3": _inject_e3,
        "e4": _inject_e4, "e5": _inject_e5, "e6": _inject_e6, "e7": _inject_e7,
    }
    if spec.code not in dispatch:
        raise MutationInapplicable(f"unknown injection code {spec.code!r}")
    mutated, note = dispatch[spec.code](program, spec)
    serialize_program(mutated)  # must stay well formed
    return mutated, note
