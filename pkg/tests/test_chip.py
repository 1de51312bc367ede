import random

import pytest

from dmfv.chip import (ChipState, DoubleClaim, MixerEntry, OutOfBounds,
                       expire_mixers, init_state, neighbors4, neighbors8)
from dmfv.graph import CFVector, cf_mix
from dmfv.isa import ChipHeader, Loc, MType, ReservoirDecl, RKind


def header(rows=5, cols=4, reservoirs=None):
    reservoirs = reservoirs or (ReservoirDecl(Loc(1, 1), RKind.REAGENT, "S"),)
    return ChipHeader(rows, cols, 5, tuple(reservoirs))


def test_init_state_blank():
    st = init_state(header(5, 4, (
        ReservoirDecl(Loc(1, 1), RKind.REAGENT, "S"),
        ReservoirDecl(Loc(1, 4), RKind.REAGENT, "B"),
        ReservoirDecl(Loc(5, 1), RKind.OUTPUT),
        ReservoirDecl(Loc(5, 4), RKind.WASTE))))
    assert st.t == 0
    assert not st.droplets and not st.mixers
    assert len(st.reservoirs) == 4
    assert st.header.rows * st.header.cols == 20
    for r in range(1, 6):
        for c in range(1, 5):
            assert not st.occupied(Loc(r, c))


def test_init_state_single_cell_and_pcr_sizes():
    st = init_state(ChipHeader(1, 1, 1, (ReservoirDecl(Loc(1, 1), RKind.REAGENT, "S"),)))
    assert not st.occupied(Loc(1, 1))
    st = init_state(ChipHeader(15, 15, 5, tuple(
        ReservoirDecl(Loc(3, k + 1), RKind.REAGENT, f"R{k}") for k in range(8))))
    assert st.header.rows * st.header.cols == 225
    assert len(st.reservoirs) == 8


def test_neighbors_truncation_and_center_sets():
    assert neighbors8(Loc(1, 1), 5, 4) == {Loc(1, 2), Loc(2, 1), Loc(2, 2)}
    assert neighbors4(Loc(3, 3), 6, 6) == {Loc(2, 3), Loc(3, 2), Loc(4, 3), Loc(3, 4)}


def test_occupied_out_of_bounds():
    with pytest.raises(OutOfBounds):
        init_state(header()).occupied(Loc(9, 9))


def test_claim_conflicts_and_release_inverse():
    st = init_state(header())
    once = st.claim(Loc(1, 1))
    with pytest.raises(DoubleClaim):
        once.claim(Loc(1, 1))
    undone = once.release(Loc(1, 1))
    assert undone.pending == st.pending
    assert undone.by_loc == st.by_loc


def test_claim_release_random_sequences_keep_bijection():
    rng = random.Random(4242)
    st = init_state(header(6, 6))
    for _ in range(300):
        loc = Loc(rng.randrange(1, 7), rng.randrange(1, 7))
        if rng.random() < 0.5:
            try:
                st = st.claim(loc)
            except DoubleClaim:
                pass
        else:
            if loc in st.by_loc or loc in st.pending:
                st = st.release(loc)
            if rng.random() < 0.3 and loc not in st.by_loc:
                st, _ = st.add_droplet("S", loc, CFVector.unit("S"), 0)
        st.check_consistency()


def _with_mixer(st: ChipState, a: Loc, b: Loc, t_s: int, t_e: int) -> ChipState:
    st, ra = st.add_droplet("S", a, CFVector.unit("S"), t_s)
    st, rb = st.add_droplet("B", b, CFVector.unit("B"), t_s)
    st = st.copy()
    st.mixers = (MixerEntry(a, b, t_s, t_e, MType.H14, (ra.key, rb.key),
                            (ra.node, rb.node)),)
    return st


def test_expire_mixers_places_two_droplets_with_shared_id():
    st = _with_mixer(init_state(header()), Loc(3, 1), Loc(3, 4), 4, 17)
    done, events = expire_mixers(st, 17)
    assert len(events) == 1
    ev = events[0]
    assert (ev.a, ev.b, ev.t_s, ev.t_e) == (Loc(3, 1), Loc(3, 4), 4, 17)
    assert ev.cf == cf_mix(CFVector.unit("S"), CFVector.unit("B"))
    assert done.occupied(Loc(3, 1)) and done.occupied(Loc(3, 4))
    d1, d2 = (done.droplets[done.by_loc[l]] for l in (Loc(3, 1), Loc(3, 4)))
    assert d1.node == d2.node == ev.node
    assert not done.mixers


def test_expire_mixers_identity_without_due_entries():
    st = _with_mixer(init_state(header()), Loc(3, 1), Loc(3, 4), 4, 17)
    same, events = expire_mixers(st, 10)
    assert events == [] and same is st
    done, _ = expire_mixers(st, 17)
    again, events = expire_mixers(done, 17)
    assert events == [] and again is done  # idempotent for a given t


def test_two_mixers_expiring_same_tick():
    st = init_state(header(15, 15))
    st = _with_mixer(st, Loc(4, 3), Loc(7, 3), 5, 12)
    st, ra = st.add_droplet("C", Loc(9, 13), CFVector.unit("C"), 5)
    st, rb = st.add_droplet("D", Loc(12, 13), CFVector.unit("D"), 5)
    st = st.copy()
    st.mixers = st.mixers + (MixerEntry(Loc(9, 13), Loc(12, 13), 5, 12, MType.V41,
                                        (ra.key, rb.key), ("C", "D")),)
    done, events = expire_mixers(st, 12)
    assert len(events) == 2
    assert len(done.droplets) == 4
    assert {l for l in done.by_loc} == {Loc(4, 3), Loc(7, 3), Loc(9, 13), Loc(12, 13)}


def test_grid_registry_bijection_after_operations():
    st = init_state(header(6, 6))
    st, rec = st.add_droplet("S", Loc(2, 2), CFVector.unit("S"), 0)
    st = st.move_droplet(rec.key, Loc(2, 3))
    st.check_consistency()
    assert st.droplet_at(Loc(2, 3)).key == rec.key
    st = st.remove_droplet(rec.key)
    st.check_consistency()
    assert not st.droplets
