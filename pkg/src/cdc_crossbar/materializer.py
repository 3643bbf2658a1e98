"""Compile a domain algebra into a crossbar topology and check the result.

One array per domain holds a square concept-by-concept plane for each
relation; covering pairs of the prefix order become directed inter-array
edges; relation typing is unfolded into one gate per (relation, edge);
bridges become entries in a register bank.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .device import DeviceParams, decode, target_resistance
from .domain_algebra import (
    AlgebraError,
    Domain,
    DomainAlgebraStar,
    MaterializationError,
    QuadKey,
    TruthValue,
    comparable,
    heyting_implication,
    meet,
    parse_domain,
    refines,
)

FORMAT_NAME = "cdc-crossbar-topology"
FORMAT_VERSION = 1
DEFAULT_FAN_OUT = 4
DEFAULT_TREE_DELAY_NS = 1.0

ON, OFF = "ON", "OFF"


class CompileError(ValueError):
    pass


class TopologyError(RuntimeError):
    pass


@dataclass
class ArraySpec:
    domain: Domain
    concepts: tuple[str, ...]
    relations: tuple[str, ...]
    # relation -> {(head, tail): explicit target state}
    states: dict[str, dict[tuple[str, str], TruthValue]] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.concepts)) != len(self.concepts):
            raise CompileError(f"duplicate concepts in array {self.domain}")

    @property
    def junction_count(self) -> int:
        return sum(len(plane) for plane in self.states.values())


class GateKey(NamedTuple):
    rel: str
    parent: Domain
    child: Domain


@dataclass(frozen=True)
class BufferTreePlan:
    fan_out: int
    stages: int
    propagation_delay_ns: float
    driven_gates: int = 0


@dataclass
class CrossbarTopology:
    arrays: dict[Domain, ArraySpec]
    hasse_edges: frozenset[tuple[Domain, Domain]]
    gates: dict[GateKey, str]
    meta_states: dict[str, TruthValue]
    buffer_plan: BufferTreePlan
    bridge_bank: dict[tuple[str, Domain], list[tuple[str, Domain]]]
    device_params: DeviceParams
    transitive: frozenset[str] = frozenset()
    provenance: dict = field(default_factory=dict)

    @property
    def junction_count(self) -> int:
        return sum(a.junction_count for a in self.arrays.values())

    @property
    def bridge_entry_count(self) -> int:
        return sum(len(v) for v in self.bridge_bank.values())

    def parent_of(self, d: Domain) -> Domain | None:
        return self._parents().get(d)

    def children_of(self, d: Domain) -> list[Domain]:
        return sorted(c for p, c in self.hasse_edges if p == d)

    def _parents(self) -> dict[Domain, Domain]:
        cache = self.__dict__.get("_parent_cache")
        if cache is None or cache[0] is not self.hasse_edges:
            cache = (self.hasse_edges, {c: p for p, c in self.hasse_edges})
            self.__dict__["_parent_cache"] = cache
        return cache[1]

    def monotone(self, rel: str) -> bool:
        # unknown relations read as 0 in the meta-array: no inheritance
        return self.meta_states.get(rel, TruthValue.UNDEFINED) == TruthValue.HOLDS

    def top_down(self) -> list[Domain]:
        return sorted(self.arrays, key=lambda d: (d.depth, d.segments))


# ---------------------------------------------------------------------------
# sub-mappings


def hasse_edges(delta) -> frozenset[tuple[Domain, Domain]]:
    """Covering pairs (parent, child) of the prefix order restricted to delta."""
    delta = set(delta)
    edges = set()
    for c in delta:
        p = next((q for q in c.prefixes() if q in delta), None)
        if p is not None:
            edges.add((p, c))
    return frozenset(edges)


def unfold_tau(da: DomainAlgebraStar, edges=None) -> dict[GateKey, str]:
    edges = hasse_edges(da.domains) if edges is None else edges
    gates = {}
    for rel, meta in sorted(da.relations.items()):
        for p, c in sorted(edges):
            gates[GateKey(rel, p, c)] = ON if meta.monotone else OFF
    return gates


def gates_from_meta(meta_states: dict[str, TruthValue], edges) -> dict[GateKey, str]:
    return {
        GateKey(rel, p, c): ON if state == TruthValue.HOLDS else OFF
        for rel, state in sorted(meta_states.items())
        for p, c in sorted(edges)
    }


def buffer_tree_plan(
    gate_count: int, fan_out: int = DEFAULT_FAN_OUT, per_stage_delay_ns: float | None = None
) -> BufferTreePlan:
    if gate_count < 0:
        raise ValueError("gate_count must be non-negative")
    if fan_out < 2:
        raise ValueError("fan_out must be at least 2")
    stages, reach = 0, 1
    while reach < gate_count:
        reach *= fan_out
        stages += 1
    if per_stage_delay_ns is None:
        delay = DEFAULT_TREE_DELAY_NS if stages else 0.0
    else:
        delay = stages * per_stage_delay_ns
    return BufferTreePlan(fan_out, stages, delay, gate_count)


def compile_topology(
    da: DomainAlgebraStar, params: DeviceParams | None = None, provenance: dict | None = None
) -> CrossbarTopology:
    problems = da.violations()
    if problems:
        raise CompileError("invariant violated: " + "; ".join(problems))
    params = params or DeviceParams()
    edges = hasse_edges(da.domains)
    parent = {c: p for p, c in edges}

    states: dict[Domain, dict[str, dict[tuple[str, str], TruthValue]]] = {d: {} for d in da.domains}
    for key, q in sorted(da.quads.items()):
        states[key.domain].setdefault(key.rel, {})[(key.head, key.tail)] = q.value

    arrays: dict[Domain, ArraySpec] = {}
    # a child addresses every concept its parent does, so any parent junction can be inherited
    for d in sorted(da.domains, key=lambda d: (d.depth, d.segments)):
        space = set(da.concepts(d))
        if d in parent:
            space.update(arrays[parent[d]].concepts)
        planes = {rel: dict(sorted(plane.items())) for rel, plane in sorted(states[d].items())}
        arrays[d] = ArraySpec(d, tuple(sorted(space)), tuple(planes), planes)
    arrays = dict(sorted(arrays.items()))

    bank: dict[tuple[str, Domain], list[tuple[str, Domain]]] = {}
    for b in da.bridges:
        bank.setdefault((b.concept, b.from_domain), []).append((b.to_concept, b.to_domain))

    meta_states = {
        rel: TruthValue.HOLDS if m.monotone else TruthValue.NEGATED for rel, m in sorted(da.relations.items())
    }
    return CrossbarTopology(
        arrays=arrays,
        hasse_edges=edges,
        gates=unfold_tau(da, edges),
        meta_states=meta_states,
        buffer_plan=buffer_tree_plan(len(edges)),
        bridge_bank=dict(sorted(bank.items())),
        device_params=params,
        transitive=frozenset(r for r, m in da.relations.items() if m.transitive),
        provenance=dict(provenance or {}),
    )


# ---------------------------------------------------------------------------
# graph-side lattice operations


def _ancestor_sets(ct: CrossbarTopology) -> dict[Domain, frozenset[Domain]]:
    cache = ct.__dict__.get("_ancestor_cache")
    if cache is not None and cache[0] is ct.hasse_edges:
        return cache[1]
    parents: dict[Domain, list[Domain]] = {d: [] for d in ct.arrays}
    for p, c in ct.hasse_edges:
        parents.setdefault(c, []).append(p)
    out = {}
    for d in parents:
        seen = {d}
        queue = deque([d])
        while queue:
            for p in parents.get(queue.popleft(), ()):
                if p not in seen:
                    seen.add(p)
                    queue.append(p)
        out[d] = frozenset(seen)
    ct.__dict__["_ancestor_cache"] = (ct.hasse_edges, out)
    return out


def reaches(ct: CrossbarTopology, src: Domain, dst: Domain) -> bool:
    """True iff dst is reachable from src along directed inter-array wiring (or equal)."""
    return src in _ancestor_sets(ct).get(dst, frozenset((dst,)))


def _most_specific(ct: CrossbarTopology, candidates) -> Domain:
    anc = _ancestor_sets(ct)
    tops = [d for d in candidates if all(e in anc[d] for e in candidates)]
    if len(tops) != 1:
        raise TopologyError(f"no unique most-specific array among {sorted(map(str, candidates))}")
    return tops[0]


def array_ancestor(ct: CrossbarTopology, a1: Domain, a2: Domain) -> Domain | None:
    anc = _ancestor_sets(ct)
    for a in (a1, a2):
        if a not in ct.arrays:
            raise TopologyError(f"no array for {a}")
    common = anc[a1] & anc[a2]
    if not common:
        return None
    return _most_specific(ct, common)


def array_implication(ct: CrossbarTopology, a1: Domain, a2: Domain) -> Domain:
    """Join of every array whose common ancestor with a1 feeds a2."""
    found = []
    for d in ct.arrays:
        g = array_ancestor(ct, d, a1)
        if g is not None and reaches(ct, g, a2):
            found.append(d)
    if not found:
        raise MaterializationError(f"{a1} -> {a2}: no array satisfies the wiring condition")
    anc = _ancestor_sets(ct)
    tops = [d for d in found if all(e in anc[d] for e in found)]
    if len(tops) != 1:
        maximal = sorted(d for d in found if not any(d != e and d in anc[e] for e in found))
        raise MaterializationError(f"no unique maximum: {maximal[0]} and {maximal[1]} are both maximal")
    return tops[0]


# ---------------------------------------------------------------------------
# homomorphism checks


@dataclass
class CheckResult:
    name: str
    passed: bool
    counterexamples: list[str] = field(default_factory=list)


@dataclass
class VerificationReport:
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_document(self) -> dict:
        return {
            "passed": self.passed,
            "summary": f"{sum(c.passed for c in self.checks)}/{len(self.checks)} checks pass",
            "checks": [
                {"name": c.name, "passed": c.passed, "counterexamples": c.counterexamples[:20]}
                for c in self.checks
            ],
        }


CHECK_NAMES = (
    "L1_fiber_isolation",
    "L2_ternary_bijection",
    "L3_order_preservation",
    "L4_meet",
    "L5_implication",
    "L6_gates",
    "L7_closure",
    "L8_bridges",
)


def _check_fibers(da, ct):
    bad = []
    if set(ct.arrays) != set(da.domains):
        bad.append("array keys differ from the domain set")
    placed = set()
    for d, arr in ct.arrays.items():
        index = set(arr.concepts)
        for rel, plane in arr.states.items():
            for (h, t), v in plane.items():
                if h not in index or t not in index:
                    bad.append(f"{d}: junction ({h}, {rel}, {t}) outside the array index space")
                if da.explicit(QuadKey(h, rel, t, d)) != v:
                    bad.append(f"{d}: junction ({h}, {rel}, {t})={int(v)} is not in fiber F({d})")
                placed.add(QuadKey(h, rel, t, d))
    for key in da.quads:
        if key not in placed:
            bad.append(f"quad ({key.head}, {key.rel}, {key.tail}) of F({key.domain}) has no junction in its array")
    return bad


def _check_ternary(da, ct):
    p = ct.device_params
    bad = []
    levels = {v: target_resistance(v, p) for v in TruthValue}
    if len(set(levels.values())) != 3:
        bad.append("resistance targets are not distinct")
    for v, r in levels.items():
        if decode(p.V_read / r, p) != v:
            bad.append(f"state {int(v)} does not decode back from {r:g} ohm")
    for d, arr in ct.arrays.items():
        for rel, plane in arr.states.items():
            for key, v in plane.items():
                if v not in levels:
                    bad.append(f"{d}/{rel}/{key}: target {v!r} is not ternary")
    return bad


def _check_order(da, ct):
    bad = []
    doms = sorted(da.domains)
    for a in doms:
        for b in doms:
            if reaches(ct, b, a) != refines(a, b):
                bad.append(f"reach({b} -> {a}) != refines({a}, {b})")
    return bad


def _check_meet(da, ct):
    bad = []
    doms = sorted(da.domains)
    for i, a in enumerate(doms):
        for b in doms[i:]:
            try:
                got = array_ancestor(ct, a, b)
            except TopologyError as exc:
                bad.append(f"ancestor({a}, {b}): {exc}")
                continue
            if got != meet(a, b):
                bad.append(f"ancestor({a}, {b}) = {got} but meet = {meet(a, b)}")
    return bad


def _check_implication(da, ct):
    bad = []
    doms = sorted(da.domains)
    for a in doms:
        for b in doms:
            try:
                want = heyting_implication(a, b, da.domains)
            except MaterializationError:
                want = None
            try:
                got = array_implication(ct, a, b)
            except (MaterializationError, TopologyError):
                got = None
            if got != want:
                bad.append(f"({a} -> {b}): wiring gives {got}, algebra gives {want}")
    return bad


def _check_gates(da, ct):
    bad = []
    edges = hasse_edges(da.domains)
    expected = {GateKey(r, p, c) for r in da.relations for p, c in edges}
    if set(ct.gates) != expected:
        missing = sorted(expected - set(ct.gates))
        extra = sorted(set(ct.gates) - expected)
        bad += [f"missing gate {g}" for g in missing] + [f"unexpected gate {g}" for g in extra]
    for g, state in sorted(ct.gates.items()):
        meta = da.relations.get(g.rel)
        want = ON if meta is not None and meta.monotone else OFF
        if state != want:
            bad.append(f"gate G({g.rel}, {g.parent}, {g.child}) is {state}, tau requires {want}")
    return bad


def _check_closure(da, ct):
    from .engine import ChipState, inherit_pass

    state = ChipState.program(ct, seed=0)
    before = state.target_snapshot()
    changed = inherit_pass(state)
    if changed or state.target_snapshot() != before:
        return [f"second inheritance pass changed {changed} junctions"]
    return []


def _check_bridges(da, ct):
    bad = []
    want = sorted((b.concept, str(b.from_domain), b.to_concept, str(b.to_domain)) for b in da.bridges)
    got = sorted(
        (c, str(d), c2, str(d2)) for (c, d), targets in ct.bridge_bank.items() for c2, d2 in targets
    )
    if want != got:
        for entry in sorted(set(got) - set(want)):
            bad.append(f"register entry {entry} has no bridge")
        for entry in sorted(set(want) - set(got)):
            bad.append(f"bridge {entry} has no register entry")
        if len(got) != len(set(got)):
            bad.append("duplicate register entries")
    for (c, d), targets in ct.bridge_bank.items():
        for c2, d2 in targets:
            if comparable(d, d2):
                bad.append(f"register ({c}, {d}) -> ({c2}, {d2}) links comparable domains")
    return bad


def verify_homomorphism(da: DomainAlgebraStar, ct: CrossbarTopology) -> VerificationReport:
    checks = (
        _check_fibers,
        _check_ternary,
        _check_order,
        _check_meet,
        _check_implication,
        _check_gates,
        _check_closure,
        _check_bridges,
    )
    results = []
    for name, fn in zip(CHECK_NAMES, checks):
        try:
            bad = fn(da, ct)
        except (AlgebraError, TopologyError, KeyError) as exc:
            bad = [f"check raised {type(exc).__name__}: {exc}"]
        results.append(CheckResult(name, not bad, bad))
    return VerificationReport(results)


# ---------------------------------------------------------------------------
# serialization


def topology_to_document(ct: CrossbarTopology) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "provenance": ct.provenance,
        "device_params": ct.device_params.to_dict(),
        "arrays": [
            {
                "domain": str(d),
                "concepts": list(a.concepts),
                "relations": list(a.relations),
                "states": {
                    rel: [[h, t, int(v)] for (h, t), v in sorted(plane.items())]
                    for rel, plane in sorted(a.states.items())
                },
            }
            for d, a in sorted(ct.arrays.items())
        ],
        "hasse_edges": [[str(p), str(c)] for p, c in sorted(ct.hasse_edges)],
        "gates": [[g.rel, str(g.parent), str(g.child), s] for g, s in sorted(ct.gates.items())],
        "meta_states": {rel: int(v) for rel, v in sorted(ct.meta_states.items())},
        "transitive": sorted(ct.transitive),
        "buffer_plan": {
            "fan_out": ct.buffer_plan.fan_out,
            "stages": ct.buffer_plan.stages,
            "propagation_delay_ns": ct.buffer_plan.propagation_delay_ns,
            "driven_gates": ct.buffer_plan.driven_gates,
        },
        "bridge_bank": [
            {"concept": c, "domain": str(d), "targets": [[c2, str(d2)] for c2, d2 in targets]}
            for (c, d), targets in sorted(ct.bridge_bank.items())
        ],
        "summary": {
            "arrays": len(ct.arrays),
            "junctions": ct.junction_count,
            "hasse_edges": len(ct.hasse_edges),
            "gates": len(ct.gates),
            "meta_states": len(ct.meta_states),
            "bridge_entries": ct.bridge_entry_count,
        },
    }


def dumps_document(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def dump_topology(ct: CrossbarTopology, path) -> None:
    Path(path).write_text(dumps_document(topology_to_document(ct)), encoding="utf-8")


def topology_from_document(doc: dict) -> CrossbarTopology:
    if doc.get("format") != FORMAT_NAME:
        raise CompileError("not a crossbar topology document")
    arrays = {}
    for rec in doc["arrays"]:
        d = parse_domain(rec["domain"])
        states = {
            rel: {(h, t): TruthValue.parse(v) for h, t, v in triples} for rel, triples in rec["states"].items()
        }
        arrays[d] = ArraySpec(d, tuple(rec["concepts"]), tuple(rec["relations"]), states)
    edges = frozenset((parse_domain(p), parse_domain(c)) for p, c in doc["hasse_edges"])
    meta = {rel: TruthValue.parse(v) for rel, v in doc["meta_states"].items()}
    bank = {
        (e["concept"], parse_domain(e["domain"])): [(c2, parse_domain(d2)) for c2, d2 in e["targets"]]
        for e in doc["bridge_bank"]
    }
    bp = doc["buffer_plan"]
    return CrossbarTopology(
        arrays=arrays,
        hasse_edges=edges,
        # gates are re-derived from the meta-array, never trusted from storage
        gates=gates_from_meta(meta, edges),
        meta_states=meta,
        buffer_plan=BufferTreePlan(bp["fan_out"], bp["stages"], bp["propagation_delay_ns"], bp["driven_gates"]),
        bridge_bank=bank,
        device_params=DeviceParams.from_dict(doc["device_params"]),
        transitive=frozenset(doc.get("transitive", ())),
        provenance=doc.get("provenance", {}),
    )


def load_topology(path) -> CrossbarTopology:
    return topology_from_document(json.loads(Path(path).read_text(encoding="utf-8")))
