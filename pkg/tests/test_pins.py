import random

import pytest

from dmfv.chip import OutOfBounds, init_state
from dmfv.diag import Code
from dmfv.graph import CFVector
from dmfv.isa import ChipHeader, Loc, parse_program
from dmfv.pins import (PinMap, check_case1, check_dispense_pins, check_pair,
                       dedicated_map, parse_pins, pins_of, reset_stats,
                       serialize_pins, stats, verify_program_pins)

from conftest import load


def make_map(rows, cols, overrides):
    """Distinct high pin ids everywhere, with the given values overlaid."""
    pin = {Loc(r, c): 100 + (r - 1) * cols + c
           for r in range(1, rows + 1) for c in range(1, cols + 1)}
    pin.update({Loc(r, c): p for (r, c), p in overrides.items()})
    return PinMap(rows, cols, pin)


def droplets(rows, cols, locs):
    st = init_state(ChipHeader(rows, cols, 5, ()))
    for i, loc in enumerate(locs):
        st, _ = st.add_droplet(f"n{i}", loc, CFVector.unit("S"), 0)
    return st


def test_pins_of_neighborhood_sets():
    ahead_map = make_map(6, 6, {(2, 3): 4, (4, 4): 1, (5, 3): 4, (6, 4): 2,
                            (5, 5): 7, (5, 4): 6})
    assert pins_of(ahead_map, ahead_map.n4(Loc(5, 4))) == {1, 4, 2, 7}
    stretch_map = make_map(6, 6, {(2, 2): 3, (4, 5): 8, (5, 4): 6, (6, 5): 9,
                            (5, 6): 3, (5, 5): 7})
    assert pins_of(stretch_map, stretch_map.n4(Loc(5, 5))) == {8, 6, 9, 3}
    assert pins_of(stretch_map, ()) == set()
    with pytest.raises(OutOfBounds):
        pins_of(stretch_map, [Loc(9, 9)])


def test_case1_shared_pin_splits_droplet():
    split_map = make_map(6, 6, {(3, 3): 3, (3, 2): 2, (3, 4): 2})
    finding = check_case1(split_map, Loc(3, 3))
    assert finding is not None
    assert finding.pins == {2}
    assert finding.response == "Unintentional droplet split"
    assert check_case1(make_map(6, 6, {}), Loc(3, 3)) is None


def test_case1_matches_bruteforce_on_random_maps():
    rng = random.Random(3111)
    for _ in range(400):
        rows = cols = 6
        pin = {Loc(r, c): rng.randrange(1, 14)
               for r in range(1, rows + 1) for c in range(1, cols + 1)}
        pmap = PinMap(rows, cols, pin)
        loc = Loc(rng.randrange(1, rows + 1), rng.randrange(1, cols + 1))
        n4 = sorted(pmap.n4(loc))
        clash = any(pmap.pin_of(a) == pmap.pin_of(b)
                    for i, a in enumerate(n4) for b in n4[i + 1:])
        assert (check_case1(pmap, loc) is not None) == clash


def test_case2_shared_pin_at_t():
    stretch_map = make_map(6, 6, {(2, 2): 3, (4, 5): 8, (5, 4): 6, (6, 5): 9,
                            (5, 6): 3, (5, 5): 7})
    f = check_pair(stretch_map, Loc(2, 2), Loc(2, 2), Loc(5, 5), Loc(5, 5))
    assert f is not None and f.pins == {3}
    assert f.code is Code.PIN_CASE2
    assert f.response == "Droplet stretch"


def test_case2_shared_pin_at_t1():
    ahead_map = make_map(6, 6, {(2, 3): 4, (4, 4): 1, (5, 3): 4, (6, 4): 2,
                            (5, 5): 7, (5, 4): 6})
    f = check_pair(ahead_map, Loc(2, 2), Loc(2, 3), Loc(5, 5), Loc(5, 4))
    assert f is not None and f.pins == {4}
    assert f.code is Code.PIN_CASE2
    assert f.response == "Droplet stretch"   # shared cell sits ahead of the move


def test_case3_shared_pin_behind_move_strands_droplet():
    stuck_map = make_map(6, 6, {(2, 3): 4, (4, 5): 8, (6, 5): 9, (5, 6): 4,
                            (5, 4): 7, (5, 5): 6})
    f = check_pair(stuck_map, Loc(2, 2), Loc(2, 3), Loc(5, 5), Loc(5, 4))
    assert f is not None and f.pins == {4}
    assert f.code is Code.PIN_CASE3
    assert f.response == "Droplet stuck on (5,5)"  # pulled forward and back


MOVE_PINS = {(1, 2): 9, (1, 1): 10, (2, 2): 7, (1, 3): 4, (1, 4): 5, (2, 3): 2,
         (4, 1): 6, (3, 1): 5, (5, 1): 8, (4, 2): 7, (4, 4): 11, (5, 3): 12,
         (5, 4): 13}


def test_move_versus_static_droplet():
    pmap = make_map(5, 4, MOVE_PINS)
    ok = check_pair(pmap, Loc(1, 2), Loc(1, 3), Loc(4, 1), Loc(4, 1))
    assert ok is None
    bad = check_pair(pmap, Loc(1, 2), Loc(2, 2), Loc(4, 1), Loc(4, 1))
    assert bad is not None and bad.pins == {7}


def test_pair_symmetry_random():
    rng = random.Random(515)
    for _ in range(400):
        pin = {Loc(r, c): rng.randrange(1, 10) for r in range(1, 7) for c in range(1, 7)}
        pmap = PinMap(6, 6, pin)
        d1 = Loc(rng.randrange(2, 6), rng.randrange(2, 6))
        d2 = Loc(rng.randrange(2, 6), rng.randrange(2, 6))
        if max(abs(d1.row - d2.row), abs(d1.col - d2.col)) < 3:
            continue
        m1 = Loc(d1.row, d1.col + 1)
        m2 = Loc(d2.row, d2.col - 1)
        a = check_pair(pmap, d1, m1, d2, m2)
        b = check_pair(pmap, d2, m2, d1, m1)
        # the (a)/(b) constraint pairs swap roles, so the verdicts agree even
        # though the first rule to fire (and its pin set) may mirror
        assert (a is None) == (b is None)


DISPENSE_PINS = {(1, 1): 7, (1, 2): 3, (2, 1): 4, (2, 3): 2, (3, 2): 4, (4, 3): 5,
        (3, 4): 3, (3, 1): 2, (5, 1): 5, (4, 2): 3, (4, 4): 2, (5, 3): 4,
        (1, 4): 3}


def test_dispense_pin_examples():
    pmap = make_map(5, 4, DISPENSE_PINS)
    st = droplets(5, 4, [Loc(3, 3), Loc(4, 1), Loc(5, 4)])
    assert pins_of(pmap, pmap.n4(Loc(3, 3))) == {2, 4, 5, 3}
    assert pins_of(pmap, pmap.n4(Loc(4, 1))) == {2, 5, 3}
    assert pins_of(pmap, pmap.n4(Loc(5, 4))) == {2, 4}
    assert pins_of(pmap, pmap.n4(Loc(1, 1))) == {3, 4}
    assert check_dispense_pins(pmap, st, Loc(1, 1)) is None
    bad = check_dispense_pins(pmap, st, Loc(1, 4))
    assert bad is not None and bad.pins == {3}
    assert bad.response == "Droplet stretch"


def test_dispense_far_droplet_on_big_grid_is_safe():
    pmap = dedicated_map(12, 12)
    st = droplets(12, 12, [Loc(11, 11)])
    assert check_dispense_pins(pmap, st, Loc(1, 1)) is None


def test_injective_map_subsumes_general_mode():
    for name in ("twowaymix.dmf", "pcr.dmf"):
        prog = parse_program(load(name))
        pmap = dedicated_map(prog.header.rows, prog.header.cols)
        assert pmap.injective()
        report = verify_program_pins(prog, pmap)
        assert report.ok, report.violations


def test_injective_map_reports_match_general_mode_on_bad_program():
    from dmfv.fluidics import verify_program
    from dmfv.inject import InjectionSpec, inject_error
    prog = parse_program(load("pcr.dmf"))
    bad, _ = inject_error(prog, InjectionSpec("e1"))
    _, general = verify_program(bad)
    pinned = verify_program_pins(bad, dedicated_map(15, 15))
    rows = lambda r: [(v.code, v.t, v.instruction_text()) for v in r.violations]
    assert rows(general) == rows(pinned)


def test_pair_decomposition_count():
    text = ("dim(9,9)\naccuracy 5\nR(1,1,A) R(1,9,B) R(9,1,C)\n"
            "1 d(1,1) d(1,9) d(9,1)\n"
            "2 m([1,1]->[2,1]) m([1,9]->[2,9]) m([9,1]->[8,1])\n"
            "3 m([2,1]->[3,1])\n4 end\n")
    prog = parse_program(text)
    pmap = dedicated_map(9, 9)
    reset_stats()
    report = verify_program_pins(prog, pmap)
    assert report.ok
    # t=1: dispensed droplets are covered by the dispense rule (0 pairs);
    # t=2, t=3, t=4: three droplets each, k*(k-1)/2 = 3 pairs per tick
    assert stats["pair_checks"] == 9


def test_mplex_fixture_rows(fixtures):
    prog = parse_program(load("mplex.dmf"))
    base = parse_pins(load("mplex.pins"))
    assert verify_program_pins(prog, base).ok
    expected = {
        "mplex_pin1.pins": ("Droplet stretch", 4,
                            "m(3,3,4,3) m(13,3,13,4)", (6,)),
        "mplex_pin2.pins": ("Droplet stuck on (13,14)", 53,
                            "m(13,14,13,13) m(3,14,3,13)", (8,)),
        "mplex_pin3.pins": ("Droplet stuck on (13,11)", 56,
                            "m(5,13,6,13) m(13,11,13,10)", (7,)),
    }
    for name, (response, t, instr, shared) in expected.items():
        pmap = parse_pins(load(name))
        report = verify_program_pins(prog, pmap)
        v = report.violations[0]
        assert (v.response, v.t, v.instruction_text(), tuple(sorted(v.pins))) == (
            response, t, instr, shared)


def test_pin_map_roundtrip_and_dim_check():
    pmap = parse_pins(load("mplex.pins"))
    assert parse_pins(serialize_pins(pmap)) == pmap
    prog = parse_program(load("twowaymix.dmf"))
    from dmfv.isa import DmfError
    with pytest.raises(DmfError):
        verify_program_pins(prog, pmap)
