"""Concentration-factor arithmetic, sequencing graphs and conformance checking.

Concentration vectors are exact dyadic rationals per reagent (the (1:1)
mix-split model only ever averages two vectors, so denominators stay powers
of two).  Rounding to the declared accuracy happens at comparison and
display time, never inside the arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd

from . import chip
from .diag import Code, Report, classify
from .isa import DmfError, ParseError


class CycleDetected(DmfError):
    pass


class BadArity(DmfError):
    pass


class OrphanDroplet(DmfError):
    pass


class ReagentUniverseMismatch(DmfError):
    pass


# --- concentration vectors ---------------------------------------------------

@dataclass(frozen=True)
class CFVector:
    """Mapping reagent -> exact fraction of unit volume; components sum to 1."""

    components: tuple[tuple[str, Fraction], ...]

    @staticmethod
    def of(mapping: dict[str, Fraction]) -> "CFVector":
        items = tuple(sorted((k, Fraction(v)) for k, v in mapping.items() if v != 0))
        return CFVector(items)

    @staticmethod
    def unit(reagent: str) -> "CFVector":
        return CFVector(((reagent, Fraction(1)),))

    def as_dict(self) -> dict[str, Fraction]:
        return dict(self.components)

    def get(self, reagent: str) -> Fraction:
        return dict(self.components).get(reagent, Fraction(0))

    def total(self) -> Fraction:
        return sum((v for _, v in self.components), Fraction(0))

    def reagents(self) -> set[str]:
        return {k for k, _ in self.components}

    def __str__(self) -> str:
        return "{" + ", ".join(f"{k}:{v}" for k, v in self.components) + "}"


def cf_mix(a: CFVector, b: CFVector) -> CFVector:
    """Balanced (1:1) mix-split: the component-wise average, exact."""
    out: dict[str, Fraction] = dict(a.components)
    for k, v in b.components:
        out[k] = out.get(k, Fraction(0)) + v
    return CFVector.of({k: v / 2 for k, v in out.items()})


def round_cf(cf: CFVector, n: int) -> CFVector:
    """Round each component to denominator 2^n; the residue lands on the
    largest component so the total stays exactly 1."""
    scale = 1 << n
    rounded: dict[str, int] = {}
    for k, v in cf.components:
        num, den = (v * scale).numerator, (v * scale).denominator
        rounded[k] = (2 * num + den) // (2 * den)  # half away from zero
    residue = scale - sum(rounded.values())
    if residue and rounded:
        largest = max(rounded, key=lambda k: (rounded[k], k))
        rounded[largest] += residue
    return CFVector.of({k: Fraction(v, scale) for k, v in rounded.items()})


def ratio_str(cf: CFVector, reagents: tuple[str, ...], n: int) -> str:
    """Render as an integer ratio over the reagent order, gcd-reduced."""
    scaled = round_cf(cf, n)
    nums = [int(scaled.get(r) * (1 << n)) for r in reagents]
    g = gcd(*nums) if any(nums) else 1
    return "(" + ":".join(str(v // max(g, 1)) for v in nums) + ")"


# --- sequencing graphs --------------------------------------------------------

DISPENSE, MIX, OUTPUT, WASTE = "dispense", "mix", "output", "waste"


@dataclass
class SGNode:
    id: str
    kind: str
    reagent: str | None = None
    t_mix: int | None = None       # specified duration (input graphs)
    t_s: int | None = None         # realized window (reconstructed graphs)
    t_e: int | None = None
    cf: CFVector | None = None

    @property
    def realized_duration(self) -> int | None:
        if self.t_s is None or self.t_e is None:
            return None
        return self.t_e - self.t_s - 1


@dataclass
class SeqGraph:
    reagents: tuple[str, ...] = ()
    nodes: dict[str, SGNode] = field(default_factory=dict)
    edges: list[tuple[str, str]] = field(default_factory=list)  # repeats = multiplicity

    def add_node(self, node: SGNode) -> SGNode:
        if node.id in self.nodes:
            raise BadArity(f"duplicate node id {node.id!r}")
        self.nodes[node.id] = node
        return node

    def add_edge(self, src: str, dst: str) -> None:
        if src not in self.nodes or dst not in self.nodes:
            raise OrphanDroplet(f"edge {src}->{dst} references an unknown node")
        self.edges.append((src, dst))

    def preds(self, nid: str) -> list[str]:
        return [s for s, d in self.edges if d == nid]

    def succs(self, nid: str) -> list[str]:
        return [d for s, d in self.edges if s == nid]

    def topo_order(self) -> list[str]:
        indeg = {nid: 0 for nid in self.nodes}
        for _, d in self.edges:
            indeg[d] += 1
        queue = [nid for nid, deg in indeg.items() if deg == 0]
        order: list[str] = []
        while queue:
            nid = queue.pop(0)
            order.append(nid)
            for d in self.succs(nid):
                indeg[d] -= 1
                if indeg[d] == 0:
                    queue.append(d)
        if len(order) != len(self.nodes):
            raise CycleDetected("sequencing graph has a cycle")
        return order

    def depths(self) -> dict[str, int]:
        """Longest-path depth from the dummy entry; sources sit at depth 1."""
        depth: dict[str, int] = {}
        for nid in self.topo_order():
            ps = self.preds(nid)
            depth[nid] = 1 if not ps else 1 + max(depth[p] for p in ps)
        return depth

    def annotate_cfs(self) -> None:
        """Propagate concentration vectors from dispense sources through mixes."""
        for nid in self.topo_order():
            node = self.nodes[nid]
            if node.kind == DISPENSE:
                node.cf = CFVector.unit(node.reagent)
            elif node.kind == MIX and node.cf is None:
                ps = self.preds(nid)
                if len(ps) != 2:
                    raise BadArity(f"mix node {nid!r} has in-degree {len(ps)}, needs 2")
                ca, cb = self.nodes[ps[0]].cf, self.nodes[ps[1]].cf
                if ca is None or cb is None:
                    raise BadArity(f"mix node {nid!r} fed by a node without a concentration")
                node.cf = cf_mix(ca, cb)

    def terminal_cfs(self, kind: str) -> list[CFVector]:
        """Concentrations arriving at output (or waste) nodes, one per edge."""
        out: list[CFVector] = []
        for nid, node in self.nodes.items():
            if node.kind != kind:
                continue
            for p in self.preds(nid):
                cf = self.nodes[p].cf
                if cf is not None:
                    out.append(cf)
        return out


def parse_input_sg(text: str) -> SeqGraph:
    """Parse the .sg input-graph format.

    Line oriented: a ``reagents`` header fixing the component order, then
    ``node <id> dispense <reagent>`` | ``node <id> mix <t_mix>`` |
    ``node <id> output|waste`` and ``edge <from> <to>`` lines (repeated edges
    carry multiplicity).
    """
    sg = SeqGraph()
    pending_edges: list[tuple[str, str, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "reagents":
            if len(parts) < 2:
                raise ParseError("reagents header needs at least one name", lineno)
            sg.reagents = tuple(parts[1:])
        elif parts[0] == "node":
            if len(parts) < 3:
                raise ParseError("node line needs an id and a kind", lineno)
            nid, kind = parts[1], parts[2]
            if kind == DISPENSE:
                if len(parts) != 4:
                    raise ParseError("dispense node needs a reagent name", lineno)
                if parts[3] not in sg.reagents:
                    raise ParseError(f"reagent {parts[3]!r} not in reagents header", lineno)
                sg.add_node(SGNode(nid, DISPENSE, reagent=parts[3]))
            elif kind == MIX:
                if len(parts) != 4 or not parts[3].isdigit() or int(parts[3]) < 1:
                    raise ParseError("mix node needs a positive mixing time", lineno)
                sg.add_node(SGNode(nid, MIX, t_mix=int(parts[3])))
            elif kind in (OUTPUT, WASTE):
                sg.add_node(SGNode(nid, kind))
            else:
                raise ParseError(f"unknown node kind {kind!r}", lineno)
        elif parts[0] == "edge":
            if len(parts) != 3:
                raise ParseError("edge line needs a source and a target", lineno)
            pending_edges.append((parts[1], parts[2], lineno))
        else:
            raise ParseError(f"unrecognized line {line[:32]!r}", lineno)
    for src, dst, lineno in pending_edges:
        if src not in sg.nodes or dst not in sg.nodes:
            raise ParseError(f"edge {src}->{dst} references an unknown node", lineno)
        sg.edges.append((src, dst))

    for nid, node in sg.nodes.items():
        if node.kind == DISPENSE and sg.preds(nid):
            raise BadArity(f"dispense node {nid!r} cannot have predecessors")
        if node.kind == MIX and len(sg.preds(nid)) != 2:
            raise BadArity(f"mix node {nid!r} has in-degree {len(sg.preds(nid))}, needs 2")
        if node.kind in (OUTPUT, WASTE):
            if sg.succs(nid):
                raise BadArity(f"{node.kind} node {nid!r} cannot have successors")
            if not sg.preds(nid):
                raise BadArity(f"{node.kind} node {nid!r} receives no droplets")
    sg.topo_order()  # raises CycleDetected
    sg.annotate_cfs()
    return sg


def reconstruct(trace) -> SeqGraph:
    """Rebuild the realized sequencing graph from a violation-free trace.

    Dispense sources merge per reagent; every mix completion adds a node
    annotated with its window and concentration and two incoming edges;
    waste/output transports add edges into single W / O sink nodes.
    """
    sg = SeqGraph(reagents=tuple(trace.reagents))

    def ensure_source(reagent: str) -> None:
        if reagent not in sg.nodes:
            sg.add_node(SGNode(reagent, DISPENSE, reagent=reagent, cf=CFVector.unit(reagent)))

    def ensure_sink(nid: str, kind: str) -> None:
        if nid not in sg.nodes:
            sg.add_node(SGNode(nid, kind))

    def require(node: str) -> None:
        if node not in sg.nodes:
            raise OrphanDroplet(f"event references unknown droplet origin {node!r}")

    for ev in trace.events:
        if isinstance(ev, chip.Dispensed):
            ensure_source(ev.node)
        elif isinstance(ev, chip.MixCompleted):
            for parent in ev.input_nodes:
                require(parent)
            sg.add_node(SGNode(ev.node, MIX, t_s=ev.t_s, t_e=ev.t_e, cf=ev.cf))
            for parent in ev.input_nodes:
                sg.add_edge(parent, ev.node)
        elif isinstance(ev, chip.Wasted):
            require(ev.node)
            ensure_sink("W", WASTE)
            sg.add_edge(ev.node, "W")
        elif isinstance(ev, chip.Outputted):
            require(ev.node)
            ensure_sink("O", OUTPUT)
            sg.add_edge(ev.node, "O")
    return sg


# --- conformance ---------------------------------------------------------------

def _cf_key(cf: CFVector, n: int):
    return tuple((k, int(v * (1 << n))) for k, v in round_cf(cf, n).components)


def _signature(sg: SeqGraph, nid: str, n: int):
    node = sg.nodes[nid]
    if node.kind in (OUTPUT, WASTE):
        incoming = sorted(_cf_key(sg.nodes[p].cf, n) for p in sg.preds(nid)
                          if sg.nodes[p].cf is not None)
        return (node.kind, tuple(incoming))
    return (node.kind, _cf_key(node.cf, n) if node.cf is not None else ())


def _describe(sg: SeqGraph, nid: str, reagents: tuple[str, ...], n: int) -> str:
    node = sg.nodes[nid]
    if node.kind in (OUTPUT, WASTE):
        ratios = sorted(ratio_str(sg.nodes[p].cf, reagents, n) for p in sg.preds(nid)
                        if sg.nodes[p].cf is not None)
        return " + ".join(ratios) if ratios else "(empty)"
    return ratio_str(node.cf, reagents, n) if node.cf is not None else "(none)"


def _duration_check(spec_node: SGNode, real_node: SGNode, report: Report) -> None:
    spec, realized = spec_node.t_mix, real_node.realized_duration
    if spec is None or realized is None:
        return
    if realized < spec:
        report.violations.append(classify(
            Code.E6, "Inhomogeneous mixing",
            detail=f"{real_node.id} mixed for {realized} < {spec} time units"))
    elif realized > spec:
        report.notes.append(
            f"{real_node.id} mixed for {realized} > {spec} time units (allowed)")


def conformance(input_sg: SeqGraph, synth_sg: SeqGraph, n: int,
                t_max: int | None = None, final_t: int | None = None, *,
                ignore_waste: bool = False) -> Report:
    """Level-order conformance of the realized graph against the input graph.

    Nodes are matched per depth and kind by (kind, rounded concentration)
    signature; mismatched signatures or counts raise e7, matched mixes whose
    realized window is shorter than the specified mixing time raise e6.
    """
    report = Report(final_t=final_t, t_max=t_max)
    reagents = input_sg.reagents or synth_sg.reagents
    if set(input_sg.reagents) != set(synth_sg.reagents) and input_sg.reagents and synth_sg.reagents:
        report.violations.append(classify(
            Code.E7, "Incorrect realization of input sequencing graph",
            detail=f"reagent universes differ: specified {sorted(input_sg.reagents)}, "
                   f"realized {sorted(synth_sg.reagents)}"))
        return report

    input_sg.annotate_cfs()
    synth_sg.annotate_cfs()
    d_in, d_sy = input_sg.depths(), synth_sg.depths()
    kinds = [DISPENSE, MIX, OUTPUT] + ([] if ignore_waste else [WASTE])

    for depth in sorted(set(d_in.values()) | set(d_sy.values())):
        for kind in kinds:
            spec_ids = sorted(nid for nid, d in d_in.items()
                              if d == depth and input_sg.nodes[nid].kind == kind)
            real_ids = sorted(nid for nid, d in d_sy.items()
                              if d == depth and synth_sg.nodes[nid].kind == kind)
            if not spec_ids and not real_ids:
                continue
            if len(spec_ids) != len(real_ids):
                report.violations.append(classify(
                    Code.E7, "Incorrect realization of input sequencing graph",
                    detail=f"depth {depth}: specified {len(spec_ids)} {kind} node(s), "
                           f"realized {len(real_ids)}"))
            # multiset match on signatures
            unmatched_spec = list(spec_ids)
            matched: list[tuple[str, str]] = []
            leftovers: list[str] = []
            for rid in real_ids:
                sig = _signature(synth_sg, rid, n)
                hit = next((sid for sid in unmatched_spec
                            if _signature(input_sg, sid, n) == sig), None)
                if hit is None:
                    leftovers.append(rid)
                else:
                    unmatched_spec.remove(hit)
                    matched.append((hit, rid))
            for sid, rid in matched:
                if kind == MIX:
                    _duration_check(input_sg.nodes[sid], synth_sg.nodes[rid], report)
            # pair leftovers of the same kind for ratio evidence
            for rid, sid in zip(sorted(leftovers), sorted(unmatched_spec)):
                report.violations.append(classify(
                    Code.E7, "Incorrect realization of input sequencing graph",
                    detail=f"ratio {_describe(synth_sg, rid, reagents, n)} produced, "
                           f"{_describe(input_sg, sid, reagents, n)} specified"))
                if kind == MIX:
                    _duration_check(input_sg.nodes[sid], synth_sg.nodes[rid], report)
    return report


def to_dot(sg: SeqGraph, n: int | None = None) -> str:
    """DOT rendering of a sequencing graph for external viewers."""
    lines = ["digraph sg {", "  rankdir=TB;"]
    for nid, node in sg.nodes.items():
        label = nid
        if node.kind == MIX:
            window = f" [{node.t_s},{node.t_e}]" if node.t_s is not None else ""
            spec = f" t_mix={node.t_mix}" if node.t_mix is not None else ""
            label += f"\\nmix{spec}{window}"
        if node.cf is not None and n is not None and sg.reagents:
            label += f"\\n{ratio_str(node.cf, sg.reagents, n)}"
        shape = "box" if node.kind == DISPENSE else "ellipse"
        lines.append(f'  "{nid}" [label="{label}", shape={shape}];')
    for src, dst in sg.edges:
        lines.append(f'  "{src}" -> "{dst}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
