"""Command-line driver: verify | graph | paths | inject | render.

Exit codes: 0 all checks pass, 1 violations found, 2 unusable input
(parse/semantic/io errors).  All behavior is reachable through the library
modules with identical results; this file only wires them together.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import branches, fluidics, graph, inject, pins, render
from .diag import Report, format_report
from .isa import DmfError, Loc, ParseError, Program, ValidationError, parse_program


def _load_program(path: str) -> Program:
    return parse_program(Path(path).read_text(encoding="utf-8"))


def _parse_loc(text: str) -> Loc:
    r, c = (int(x) for x in text.split(","))
    return Loc(r, c)


def _fail_input(err: Exception) -> int:
    print(f"error: {err}", file=sys.stderr)
    return 2


def _emit(report: Report, fmt: str) -> int:
    sys.stdout.write(format_report(report, fmt))
    return report.exit_code


def cmd_verify(args) -> int:
    try:
        program = _load_program(args.program)
        pin_map = pins.parse_pins(Path(args.pins).read_text()) if args.pins else None
        input_sg = graph.parse_input_sg(Path(args.sg).read_text()) if args.sg else None
        if pin_map is not None and (pin_map.rows, pin_map.cols) != (
                program.header.rows, program.header.cols):
            raise DmfError(f"pin map is {pin_map.rows}x{pin_map.cols} but the chip "
                           f"is {program.header.rows}x{program.header.cols}")
    except (OSError, ParseError, ValidationError, DmfError) as err:
        return _fail_input(err)
    policy = "all" if args.all else "first"
    t_max = args.tmax

    if program.has_conditionals:
        try:
            path_reports = branches.verify_all_paths(
                program, pin_map=pin_map, input_sg=input_sg, policy=policy,
                t_max=t_max, only=args.path, max_conditionals=args.max_paths)
        except DmfError as err:
            return _fail_input(err)
        report = branches.merge_reports(path_reports)
        summaries = [
            f"path {pr.label}: {'PASS' if pr.report.ok else 'FAIL'}, "
            f"ends t={pr.report.final_t}" for pr in path_reports]
        report.notes = summaries + report.notes
        return _emit(report, args.format)

    trace, report = fluidics.verify_program(program, pin_map=pin_map,
                                            policy=policy, t_max=t_max)
    if args.events:
        Path(args.events).write_text(trace.event_log())
    phase1_clean = not any(v.phase == 1 for v in report.violations)
    if input_sg is not None and phase1_clean:
        synth = graph.reconstruct(trace)
        conf = graph.conformance(input_sg, synth, program.header.accuracy,
                                 ignore_waste=args.ignore_waste)
        report.violations.extend(conf.violations)
        report.notes.extend(conf.notes)
    return _emit(report, args.format)


def cmd_graph(args) -> int:
    try:
        program = _load_program(args.program)
    except (OSError, ParseError, ValidationError) as err:
        return _fail_input(err)
    if program.has_conditionals:
        print("error: conditional programs have one graph per path; "
              "use verify --all-paths", file=sys.stderr)
        return 2
    trace, report = fluidics.verify_program(program)
    if report.violations:
        sys.stdout.write(format_report(report, "text"))
        return 1
    dot = graph.to_dot(graph.reconstruct(trace), n=program.header.accuracy)
    if args.out:
        Path(args.out).write_text(dot)
    else:
        sys.stdout.write(dot)
    return 0


def cmd_paths(args) -> int:
    try:
        program = _load_program(args.program)
        specs = branches.enumerate_paths(program, max_conditionals=args.max_paths)
    except (OSError, ParseError, ValidationError, DmfError) as err:
        return _fail_input(err)
    for spec in specs:
        label = spec.label or "(linear)"
        final = spec.program.main[-1].t if spec.program.main else 0
        print(f"path {label}: {len(spec.program.main)} lines, ends at t={final}")
    return 0


def cmd_inject(args) -> int:
    try:
        program = _load_program(args.program)
    except (OSError, ParseError, ValidationError) as err:
        return _fail_input(err)
    stem = Path(args.program)

    if args.error == "pin":
        if not args.pins or not args.remap:
            print("error: pin injection needs --pins BASE and --remap 'r,c=P[;...]'",
                  file=sys.stderr)
            return 2
        try:
            base = pins.parse_pins(Path(args.pins).read_text())
            remap: dict[Loc, int] = {}
            for part in args.remap.split(";"):
                cell, pin_id = part.split("=")
                remap[_parse_loc(cell)] = int(pin_id)
            mutated = base.with_remap(remap)
        except (OSError, DmfError, ValueError) as err:
            return _fail_input(err)
        out = Path(args.out) if args.out else stem.with_name(stem.stem + "_pin.pins")
        out.write_text(pins.serialize_pins(mutated))
        print(f"wrote remapped pin assignment to {out}")
        return 0

    spec = inject.InjectionSpec(
        code=args.error, line=args.line, pos=args.pos,
        move=tuple(map(_parse_loc, args.move.split("->"))) if args.move else None,
        to=_parse_loc(args.to) if args.to else None,
        duration=args.duration,
        swap=tuple(args.swap.split(",")) if args.swap else None)
    try:
        mutated, note = inject.inject_error(program, spec)
    except inject.MutationInapplicable as err:
        return _fail_input(err)
    out = Path(args.out) if args.out else stem.with_name(f"{stem.stem}_{args.error}.dmf")
    from .isa import serialize_program
    out.write_text(serialize_program(mutated))
    print(f"{note}\nwrote {out}")
    return 0


def cmd_render(args) -> int:
    try:
        program = _load_program(args.program)
    except (OSError, ParseError, ValidationError) as err:
        return _fail_input(err)
    if program.has_conditionals:
        print("error: render works on straight-line programs; pick a path first",
              file=sys.stderr)
        return 2
    upto = args.at if args.at is not None else (
        program.main[-1].t if program.main else 0)

    # stop at the first violation and mark it
    _, report = fluidics.verify_program(program)
    bad_t = None
    if report.violations:
        bad_t = min(v.t for v in report.violations if v.t is not None)
        upto = min(upto, bad_t)

    def render_one(state) -> str:
        return render.svg_frame(state) if args.svg else render.ascii_frame(state)

    if args.animate:
        if args.svg:
            if not args.out:
                print("error: --animate --svg needs -o DIRECTORY", file=sys.stderr)
                return 2
            outdir = Path(args.out)
            outdir.mkdir(parents=True, exist_ok=True)
            for i, (t, state) in enumerate(render.frames(program, upto)):
                (outdir / f"frame_{i:04d}_t{t}.svg").write_text(render.svg_frame(state))
        else:
            body = "\n".join(render.ascii_frame(state)
                             for _, state in render.frames(program, upto))
            if args.out:
                Path(args.out).write_text(body)
            else:
                sys.stdout.write(body)
    else:
        state = fluidics.state_at(program, upto)
        body = render_one(state)
        if args.out:
            Path(args.out).write_text(body)
        else:
            sys.stdout.write(body)
    if bad_t is not None and (args.at is None or bad_t <= args.at):
        print(f"rendering stopped at t={upto}: violation at t={bad_t}", file=sys.stderr)
        sys.stdout.write(format_report(report, "text"))
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmfv", description="Verifier for digital microfluidic actuation programs")
    sub = parser.add_subparsers(dest="command", required=True)

    pv = sub.add_parser("verify", help="check design rules and protocol conformance")
    pv.add_argument("program", help=".dmf actuation program")
    pv.add_argument("--sg", help="input sequencing graph (.sg) for conformance")
    pv.add_argument("--pins", help="pin assignment (.pins); enables pin-constrained mode")
    pv.add_argument("--tmax", type=int, help="override the completion bound")
    pv.add_argument("--all-paths", action="store_true",
                    help="verify every execution path (default for conditional programs)")
    pv.add_argument("--path", help="verify a single path, e.g. --path 10")
    pv.add_argument("--max-paths", type=int, default=16,
                    help="conditional count guard (default 16)")
    pv.add_argument("--all", action="store_true",
                    help="report every violation instead of stopping at the first")
    pv.add_argument("--first-error", action="store_true",
                    help="stop at the first violation (default)")
    pv.add_argument("--ignore-waste", action="store_true",
                    help="exclude waste nodes from conformance matching")
    pv.add_argument("--events", metavar="FILE",
                    help="write a newline-delimited event log (debugging aid)")
    pv.add_argument("--format", choices=("text", "json"), default="text")
    pv.set_defaults(func=cmd_verify)

    pg = sub.add_parser("graph", help="reconstruct the realized sequencing graph (DOT)")
    pg.add_argument("program")
    pg.add_argument("-o", "--out")
    pg.set_defaults(func=cmd_graph)

    pp = sub.add_parser("paths", help="list the execution paths of a conditional program")
    pp.add_argument("program")
    pp.add_argument("--max-paths", type=int, default=16)
    pp.set_defaults(func=cmd_paths)

    pi = sub.add_parser("inject", help="write a mutated program reproducing an error class")
    pi.add_argument("program")
    pi.add_argument("--error", required=True,
                    choices=("e1", "e2", "e3", "e4", "e5", "e6", "e7", "pin"))
    pi.add_argument("--line", type=int, help="timestamp of the targeted line")
    pi.add_argument("--pos", type=int, help="instruction index within the line")
    pi.add_argument("--move", help="explicit move 'r1,c1->r2,c2' (e1/e2)")
    pi.add_argument("--to", help="wrong dispense cell 'r,c' (e3)")
    pi.add_argument("--duration", type=int, help="shortened mixing time (e6)")
    pi.add_argument("--swap", help="reagent pair 'A,B' to interchange (e7)")
    pi.add_argument("--pins", help="base pin map (pin injection)")
    pi.add_argument("--remap", help="pin remap 'r,c=P[;r,c=P...]' (pin injection)")
    pi.add_argument("-o", "--out")
    pi.set_defaults(func=cmd_inject)

    pr = sub.add_parser("render", help="ASCII or SVG snapshots of the chip")
    pr.add_argument("program")
    pr.add_argument("--at", type=int, help="render the state after tick T")
    pr.add_argument("--animate", action="store_true", help="render every line tick")
    pr.add_argument("--svg", action="store_true")
    pr.add_argument("-o", "--out")
    pr.set_defaults(func=cmd_render)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
