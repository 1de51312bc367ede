"""Execution-path expansion for cyberphysical programs.

A program with k conditional recovery calls can execute in 2^k ways.  Each
path is spliced into a straight-line program: a taken branch inserts the
recovery block right after the conditional (internal gaps preserved) and
the main line resumes one tick after the block; a not-taken branch lets the
continuation fire on the very next tick.  Written timestamps therefore
match the all-faulty path; every other path is a compaction of it.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import fluidics, graph
from .chip import ChipState, DetectionEntry
from .diag import Code, Report, classify
from .isa import (CondCall, DetectorDecl, DetectStart, DmfError, Program,
                  TimedLine, validate_structure)


class PathLimitExceeded(DmfError):
    pass


class NestedConditional(DmfError):
    pass


@dataclass(frozen=True)
class PathSpec:
    outcomes: tuple[bool, ...]      # one entry per conditional, program order
    label: str                      # e.g. "10" (1 = recovery taken)
    program: Program                # spliced straight-line program


def _cond_of(line: TimedLine) -> CondCall | None:
    if len(line.instrs) == 1 and isinstance(line.instrs[0], CondCall):
        return line.instrs[0]
    return None


def _splice(program: Program, outcomes: tuple[bool, ...]) -> Program:
    lines: list[TimedLine] = []
    delta = 0
    cond_i = 0
    main = program.main
    for idx, line in enumerate(main):
        cond = _cond_of(line)
        if cond is None:
            lines.append(TimedLine(line.t + delta, line.instrs))
            continue
        tau = line.t + delta
        nxt = main[idx + 1] if idx + 1 < len(main) else None
        if outcomes[cond_i]:
            block = program.recoveries[cond.recovery]
            base = block[0].t
            for bl in block:
                lines.append(TimedLine(tau + 1 + (bl.t - base), bl.instrs))
            resume = lines[-1].t
            if nxt is not None:
                delta = resume + 1 - nxt.t
        else:
            if nxt is not None:
                delta = tau + 1 - nxt.t
        cond_i += 1
    return Program(program.header, tuple(lines), program.detectors, {}, program.t_max)


def enumerate_paths(program: Program, *, max_conditionals: int = 16) -> list[PathSpec]:
    """Expand every feasible execution path of a conditional program.

    Returns 2^k specs for k conditionals; a conditional-free program yields
    the single identity path labeled with the empty string.
    """
    issues = validate_structure(program)
    if any(i.code == "NestedConditional" for i in issues):
        raise NestedConditional("recovery routines may not branch")
    if issues:
        from .isa import ValidationError
        raise ValidationError(issues)
    conds = [ln for ln in program.main if _cond_of(ln) is not None]
    k = len(conds)
    if k > max_conditionals:
        raise PathLimitExceeded(
            f"{k} conditionals expand to 2^{k} paths; raise the limit explicitly")
    if k == 0:
        return [PathSpec((), "", program)]
    paths = []
    for mask in range(1 << k):
        outcomes = tuple(bool((mask >> (k - 1 - bit)) & 1) for bit in range(k))
        label = "".join("1" if o else "0" for o in outcomes)
        paths.append(PathSpec(outcomes, label, _splice(program, outcomes)))
    return paths


@dataclass
class PathReport:
    label: str
    outcomes: tuple[bool, ...]
    report: Report
    trace: fluidics.Trace
    graph: "graph.SeqGraph | None" = None


def _tagged(report: Report, label: str) -> Report:
    tagged = Report(final_t=report.final_t, t_max=report.t_max,
                    notes=[f"path {label}: {n}" for n in report.notes])
    for v in report.violations:
        tagged.violations.append(classify(
            v.code, v.response, t=v.t, instructions=v.instructions, cells=v.cells,
            pins=v.pins, path=label or None, detail=v.detail, secondary=v.secondary))
    return tagged


def verify_all_paths(program: Program, *, pin_map=None, input_sg=None,
                     policy: str = "first", t_max: int | None = None,
                     only: str | None = None,
                     max_conditionals: int = 16) -> list[PathReport]:
    """Verify every path (or the one selected by ``only``) independently.

    When an input graph is supplied, each clean path is additionally required
    to deliver the same multiset of output concentrations the input graph
    specifies; recovery detours must re-produce the same mixture.
    """
    out: list[PathReport] = []
    for spec in enumerate_paths(program, max_conditionals=max_conditionals):
        if only is not None and spec.label != only:
            continue
        trace, report = fluidics.verify_program(spec.program, pin_map=pin_map,
                                                policy=policy, t_max=t_max)
        report = _tagged(report, spec.label)
        sg = None
        if not any(v.phase == 1 for v in report.violations):
            sg = graph.reconstruct(trace)
            if input_sg is not None:
                _check_outputs(input_sg, sg, program.header.accuracy, report,
                               spec.label)
        out.append(PathReport(spec.label, spec.outcomes, report, trace, sg))
    if only is not None and not out:
        raise DmfError(f"no path labeled {only!r}")
    return out


def _check_outputs(input_sg, synth_sg, n: int, report: Report, label: str) -> None:
    input_sg.annotate_cfs()
    want = sorted(str(graph.round_cf(cf, n)) for cf in input_sg.terminal_cfs(graph.OUTPUT))
    got = sorted(str(graph.round_cf(cf, n)) for cf in synth_sg.terminal_cfs(graph.OUTPUT))
    if want != got:
        report.violations.append(classify(
            Code.E7, "Incorrect realization of input sequencing graph",
            path=label or None,
            detail=f"path outputs {got or ['none']} do not match specified "
                   f"{want or ['none']}"))


def merge_reports(path_reports: list[PathReport]) -> Report:
    merged = Report()
    for pr in path_reports:
        merged.violations.extend(pr.report.violations)
        merged.notes.extend(pr.report.notes)
        if pr.report.final_t is not None:
            if merged.final_t is None or pr.report.final_t > merged.final_t:
                merged.final_t = pr.report.final_t
        merged.t_max = pr.report.t_max
    return merged


def detect_semantics(state: ChipState, instr: DetectStart,
                     decl: DetectorDecl) -> ChipState:
    """Pin the droplet sitting on the detector cell for the detection window.

    The measured flag itself stays symbolic; only branching consumes it.
    """
    if any(d.detector == decl.id for d in state.detections):
        raise DmfError(f"detector {decl.id} is busy")
    rec = state.droplet_at(decl.loc)
    if rec is None:
        raise DmfError(f"no droplet on detector {decl.id} at {decl.loc}")
    if state.mixer_pinning(rec.key) is not None:
        raise DmfError(f"droplet on {decl.loc} is in an active mixer")
    new = state.copy()
    new.detections = state.detections + (
        DetectionEntry(decl.id, rec.key, decl.loc, state.t + decl.duration),)
    return new
