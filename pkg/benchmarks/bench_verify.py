#!/usr/bin/env python3
"""Per-tick cost benchmark: verification should scale as O(rows*cols + droplets^2).

Builds synthetic programs that park k droplets on an r x c array and then
shuttle one of them back and forth for many ticks, so each tick pays the
k-choose-2 pair scan plus the grid-linear bookkeeping.  Not a unit test;
run directly:  python3 benchmarks/bench_verify.py
"""

from __future__ import annotations

import time
from pathlib import Path

from dmfv.fluidics import verify_program
from dmfv.isa import parse_program
from dmfv.pins import dedicated_map, verify_program_pins


def synthetic(rows: int, droplets: int, ticks: int) -> str:
    cols = rows
    lines = [f"dim({rows},{cols})", "accuracy 5"]
    # reagent reservoirs two columns apart along the top rows
    cells = []
    r, c = 1, 1
    for _ in range(droplets):
        cells.append((r, c))
        c += 3
        if c > cols:
            c = 1 if r % 2 else 2
            r += 3
    lines.append(" ".join(f"R({r},{c},X{i})" for i, (r, c) in enumerate(cells)))
    lines.append("1 " + " ".join(f"d({r},{c})" for r, c in cells))
    # shuttle the last droplet up and down forever
    r, c = cells[-1]
    t = 1
    for _ in range(ticks // 2):
        t += 1
        lines.append(f"{t} m([{r},{c}]->[{r + 1},{c}])")
        t += 1
        lines.append(f"{t} m([{r + 1},{c}]->[{r},{c}])")
    lines.append(f"{t + 1} end")
    return "\n".join(lines) + "\n"


def timed(label: str, fn) -> float:
    t0 = time.perf_counter()
    fn()
    dt = time.perf_counter() - t0
    print(f"{label:<44} {dt * 1000:8.2f} ms")
    return dt


def main() -> None:
    pcr = (Path(__file__).resolve().parent.parent / "fixtures" / "pcr.dmf").read_text()
    prog = parse_program(pcr)
    timed("PCR (15x15, 16 lines), general mode", lambda: verify_program(prog))
    timed("PCR, pin mode (dedicated 225-pin map)",
          lambda: verify_program_pins(prog, dedicated_map(15, 15)))

    print("\nscaling in droplet count (30x30 array, 400 ticks):")
    base = None
    for k in (4, 8, 16):
        text = synthetic(30, k, 400)
        p = parse_program(text)
        pmap = dedicated_map(30, 30)
        dt = timed(f"  {k:>2} droplets, pin mode", lambda: verify_program_pins(p, pmap))
        if base is None:
            base = (k, dt)
    print("\nscaling in array size (4 droplets, 400 ticks):")
    for n in (15, 30, 60):
        text = synthetic(n, 4, 400)
        p = parse_program(text)
        timed(f"  {n:>2}x{n} array, general mode", lambda: verify_program(p))


if __name__ == "__main__":
    main()
