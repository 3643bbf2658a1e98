"""Reasoning on a compiled crossbar: reads, cascades, inheritance, CRUD, bridges.

Junction keys are :class:`~cdc_crossbar.domain_algebra.QuadKey` tuples
``(head, rel, tail, domain)``; head indexes the row and tail the column of
the relation's plane in the domain's array. Positions never written sit at
the nominal R_mid and decode 0.
"""

from __future__ import annotations

import hashlib
import logging
from collections import Counter, deque
from dataclasses import dataclass, field
from graphlib import CycleError as _GraphCycle
from graphlib import TopologicalSorter

import numpy as np

from .device import (
    DeviceInstance,
    DeviceParams,
    decode,
    decode_array,
    read_current,
    sense_currents,
    write_junction,
)
from .domain_algebra import (
    ACCEPT,
    Domain,
    Quad,
    QuadKey,
    RejectReason,
    TruthValue,
    Verdict,
    reject,
)
from .materializer import ON, OFF, CrossbarTopology, GateKey

log = logging.getLogger(__name__)

_TV = {1: TruthValue.HOLDS, 0: TruthValue.UNDEFINED, -1: TruthValue.NEGATED}


class AddressError(LookupError):
    pass


class CycleFault(RuntimeError):
    """A cascade latched a concept that closes a +1 loop."""


class ChipState:
    """Junction contents of a compiled topology.

    ``origin`` records, for every junction holding a non-0 target, whether
    it was written explicitly (``None``) or copied from a parent array (the
    parent's domain). The write controller uses it to honour child overrides;
    sensing never looks at it.
    """

    def __init__(self, topology: CrossbarTopology, params: DeviceParams | None = None, rng=None):
        self.topology = topology
        self.params = params or topology.device_params
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.planes: dict[tuple[Domain, str], dict[str, dict[str, DeviceInstance]]] = {}
        self.origin: dict[QuadKey, Domain | None] = {}
        self.meta: dict[str, DeviceInstance] = {}
        self.access_log: Counter = Counter()
        self._index = {d: {c: i for i, c in enumerate(a.concepts)} for d, a in topology.arrays.items()}

    @classmethod
    def program(
        cls, topology: CrossbarTopology, seed=0, params: DeviceParams | None = None, inherit: bool = True
    ) -> "ChipState":
        state = cls(topology, params, np.random.default_rng(seed))
        for d, arr in topology.arrays.items():
            for rel, plane in arr.states.items():
                for (h, t), v in plane.items():
                    state.write(QuadKey(h, rel, t, d), v)
        state.program_meta()
        if inherit:
            inherit_pass(state)
        state.access_log.clear()
        return state

    # -- physical primitives ------------------------------------------------

    def check_address(self, key: QuadKey) -> None:
        index = self._index.get(key.domain)
        if index is None:
            raise AddressError(f"no array for domain {key.domain}")
        if key.rel not in self.topology.meta_states:
            raise AddressError(f"relation {key.rel!r} has no plane")
        for c in (key.head, key.tail):
            if c not in index:
                raise AddressError(f"concept {c!r} is not addressable in {key.domain}")

    def device(self, key: QuadKey) -> DeviceInstance | None:
        return self.planes.get((key.domain, key.rel), {}).get(key.head, {}).get(key.tail)

    def target(self, key: QuadKey) -> TruthValue:
        inst = self.device(key)
        return inst.target if inst is not None else TruthValue.UNDEFINED

    def is_explicit(self, key: QuadKey) -> bool:
        return key in self.origin and self.origin[key] is None

    def write(self, key: QuadKey, value, rng=None, origin: Domain | None = None) -> DeviceInstance:
        """Issue one programming pulse; no validation."""
        value = TruthValue(value)
        inst = write_junction(value, self.params, rng if rng is not None else self.rng)
        self.planes.setdefault((key.domain, key.rel), {}).setdefault(key.head, {})[key.tail] = inst
        if value == TruthValue.UNDEFINED:
            self.origin.pop(key, None)
        else:
            self.origin[key] = origin
        self.access_log[key.domain] += 1
        return inst

    def sense(self, key: QuadKey, rng=None) -> TruthValue:
        """One addressed read, decoded."""
        self.access_log[key.domain] += 1
        rng = rng if rng is not None else self.rng
        inst = self.device(key)
        if inst is None:
            inst = DeviceInstance(TruthValue.UNDEFINED, self.params.R_mid)
        return decode(read_current(inst, self.params, rng), self.params)

    def program_meta(self, rng=None) -> None:
        rng = rng if rng is not None else self.rng
        for rel, v in sorted(self.topology.meta_states.items()):
            self.meta[rel] = write_junction(v, self.params, rng)

    def read_gate(self, rel: str, rng=None) -> str:
        """Gate level driven by the relation's meta-junction, read under noise."""
        rng = rng if rng is not None else self.rng
        inst = self.meta.get(rel)
        if inst is None:
            return OFF
        return ON if decode(read_current(inst, self.params, rng), self.params) == TruthValue.HOLDS else OFF

    def reprogram(self, domain: Domain | None = None, rel: str | None = None, rng=None) -> int:
        """Rewrite every programmed junction in the selection to its own target."""
        rng = rng if rng is not None else self.rng
        n = 0
        for (d, r), rows in self.planes.items():
            if (domain is not None and d != domain) or (rel is not None and r != rel):
                continue
            for row in rows.values():
                for t, inst in row.items():
                    row[t] = write_junction(inst.target, self.params, rng)
                    n += 1
        return n

    def clone(self, params: DeviceParams | None = None, rng=None) -> "ChipState":
        other = ChipState(self.topology, params or self.params, rng if rng is not None else self.rng)
        other.planes = {
            k: {h: dict(row) for h, row in rows.items()} for k, rows in self.planes.items()
        }
        other.origin = dict(self.origin)
        other.meta = dict(self.meta)
        return other

    # -- views ---------------------------------------------------------------

    @property
    def junctions(self) -> dict[QuadKey, DeviceInstance]:
        return {
            QuadKey(h, r, t, d): inst
            for (d, r), rows in self.planes.items()
            for h, row in rows.items()
            for t, inst in row.items()
        }

    def target_snapshot(self) -> dict[QuadKey, int]:
        """Semantic content: every junction whose target is non-0."""
        return dict(sorted((k, int(v.target)) for k, v in self.junctions.items() if v.target != 0))

    def snapshot_hash(self) -> str:
        h = hashlib.sha256()
        for k, v in self.target_snapshot().items():
            h.update(f"{k.domain}|{k.rel}|{k.head}|{k.tail}|{v}\n".encode())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# read cycles and cascades


@dataclass
class CycleRecord:
    driven_row: str
    decoded: dict[str, TruthValue]
    latched: tuple[str, ...]
    elapsed_ns: float


@dataclass
class CascadeTrace:
    axis_domain: Domain
    relation: str
    start: str
    cycles: list[CycleRecord] = field(default_factory=list)
    chain: list[str] = field(default_factory=list)

    @property
    def total_ns(self) -> float:
        return sum(c.elapsed_ns for c in self.cycles)


def read_cycle(state: ChipState, domain: Domain, rel: str, row: str, rng=None) -> CycleRecord:
    state.check_address(QuadKey(row, rel, row, domain))
    p = state.params
    concepts = state.topology.arrays[domain].concepts
    index = state._index[domain]
    resistances = np.full(len(concepts), p.R_mid)
    for t, inst in state.planes.get((domain, rel), {}).get(row, {}).items():
        resistances[index[t]] = inst.sampled_R
    codes = decode_array(sense_currents(resistances, p, rng if rng is not None else state.rng), p).tolist()
    state.access_log[domain] += 1
    decoded = {c: _TV[code] for c, code in zip(concepts, codes)}
    latched = tuple(c for c, code in zip(concepts, codes) if code == 1)
    return CycleRecord(row, decoded, latched, p.cycle_ns)


def cascade(state: ChipState, domain: Domain, rel: str, start: str, rng=None) -> CascadeTrace:
    """Transitive classification: one driven row per cycle, FIFO frontier.

    Only columns decoded +1 enter the frontier. Raises CycleFault if the
    latched +1 edges contain a loop.
    """
    if rel not in state.topology.transitive:
        raise ValueError(f"relation {rel!r} is not transitive")
    trace = CascadeTrace(domain, rel, start)
    seen = {start}
    frontier = deque([start])
    trace.chain.append(start)
    latched_edges: dict[str, tuple[str, ...]] = {}
    while frontier:
        row = frontier.popleft()
        rec = read_cycle(state, domain, rel, row, rng)
        trace.cycles.append(rec)
        latched_edges[row] = rec.latched
        for c in rec.latched:
            if c not in seen:
                seen.add(c)
                trace.chain.append(c)
                frontier.append(c)
    try:
        TopologicalSorter(latched_edges).prepare()
    except _GraphCycle as exc:
        raise CycleFault(f"+1 loop in {domain}/{rel}: {exc.args[1]}") from None
    return trace


# ---------------------------------------------------------------------------
# inheritance


def _gate(state: ChipState, rel: str, parent: Domain, child: Domain) -> str:
    return state.topology.gates.get(GateKey(rel, parent, child), OFF)


def inherit_pass(state: ChipState, rng=None) -> int:
    """Copy parent targets through ON gates into child planes, top-down.

    A child junction with an explicit non-0 target is left alone. Inherited
    junctions whose source has gone are reset to 0. Returns the number of
    junctions whose target changed; a second pass returns 0.
    """
    ct = state.topology
    written = 0
    rels = sorted(set(ct.meta_states) | {r for _, r in state.planes})
    for child in ct.top_down():
        parent = ct.parent_of(child)
        if parent is None:
            continue
        for rel in rels:
            wanted: dict[tuple[str, str], TruthValue] = {}
            if _gate(state, rel, parent, child) == ON:
                for h, row in state.planes.get((parent, rel), {}).items():
                    for t, inst in row.items():
                        if inst.target != TruthValue.UNDEFINED:
                            wanted[(h, t)] = inst.target
            stale = [
                (h, t)
                for h, row in state.planes.get((child, rel), {}).items()
                for t in row
                if state.origin.get(QuadKey(h, rel, t, child)) is not None
            ]
            for h, t in sorted(set(wanted) | set(stale)):
                key = QuadKey(h, rel, t, child)
                if state.is_explicit(key):
                    continue
                want = wanted.get((h, t), TruthValue.UNDEFINED)
                if state.target(key) != want:
                    state.write(key, want, rng, origin=parent if want else None)
                    written += 1
    return written


def _resync(state: ChipState, key: QuadKey, rng=None) -> None:
    """Re-derive inherited copies of one key in its domain's subtree."""
    ct = state.topology
    queue = deque([key.domain])
    while queue:
        d = queue.popleft()
        k = key._replace(domain=d)
        if not state.is_explicit(k):
            parent = ct.parent_of(d)
            want = TruthValue.UNDEFINED
            if parent is not None and _gate(state, key.rel, parent, d) == ON:
                want = state.target(k._replace(domain=parent))
            if state.target(k) != want:
                state.write(k, want, rng, origin=parent if want else None)
        queue.extend(ct.children_of(d))


# ---------------------------------------------------------------------------
# CRUD


def _derived_value(state: ChipState, key: QuadKey, rng=None) -> TruthValue:
    """What the key would hold without its own explicit write: a read of the
    parent array's copy, reachable only through an ON gate."""
    parent = state.topology.parent_of(key.domain)
    if parent is None or _gate(state, key.rel, parent, key.domain) != ON:
        return TruthValue.UNDEFINED
    return state.sense(key._replace(domain=parent), rng)


def _effective_domains(state: ChipState, key: QuadKey) -> list[Domain]:
    out = [key.domain]
    queue = deque([key.domain])
    while queue:
        d = queue.popleft()
        for child in state.topology.children_of(d):
            if _gate(state, key.rel, d, child) == ON and not state.is_explicit(key._replace(domain=child)):
                out.append(child)
                queue.append(child)
    return out


def _validate(state: ChipState, key: QuadKey, value: TruthValue, rng, same_pair: bool) -> Verdict:
    here = state.sense(key, rng)
    if same_pair and state.is_explicit(key) and here != TruthValue.UNDEFINED and here != value:
        return reject(RejectReason.DUPLICATE_CONFLICT)
    derived = _derived_value(state, key, rng)
    if derived != TruthValue.UNDEFINED and value == -derived:
        return reject(RejectReason.DERIVED_CONTRADICTION)
    if key.rel in state.topology.transitive and value == TruthValue.HOLDS:
        if key.head == key.tail:
            return reject(RejectReason.CYCLE)
        for d in _effective_domains(state, key):
            try:
                trace = cascade(state, d, key.rel, key.tail, rng)
            except CycleFault:
                return reject(RejectReason.CYCLE)
            if key.head in trace.chain:
                return reject(RejectReason.CYCLE)
    return ACCEPT


def _commit(state: ChipState, key: QuadKey, value: TruthValue, rng) -> None:
    state.write(key, value, rng, origin=None)
    _resync(state, key, rng)


def crud_create(state: ChipState, q: Quad, rng=None) -> Verdict:
    key = q.key
    state.check_address(key)
    verdict = _validate(state, key, TruthValue(q.value), rng, same_pair=True)
    if verdict:
        _commit(state, key, TruthValue(q.value), rng)
    else:
        log.debug("write %s rejected: %s", key, verdict.reason)
    return verdict


def crud_read(state: ChipState, key: QuadKey, rng=None) -> TruthValue:
    state.check_address(key)
    return state.sense(key, rng)


def crud_update(state: ChipState, key: QuadKey, value, rng=None) -> Verdict:
    state.check_address(key)
    value = TruthValue(value)
    verdict = _validate(state, key, value, rng, same_pair=False)
    if verdict:
        _commit(state, key, value, rng)
    return verdict


def crud_delete(state: ChipState, key: QuadKey, rng=None) -> Verdict:
    state.check_address(key)
    if state.device(key) is not None or state.is_explicit(key):
        _commit(state, key, TruthValue.UNDEFINED, rng)
    return ACCEPT


# ---------------------------------------------------------------------------
# bridges and cross-axis queries


def bridge_lookup(state: ChipState, concept: str, domain: Domain) -> list[tuple[str, Domain]]:
    return list(state.topology.bridge_bank.get((concept, domain), ()))


@dataclass
class CrossAxisResult:
    start: str
    start_domain: Domain
    relation: str
    traces: list[CascadeTrace]
    bridge_targets: list[tuple[str, Domain]]
    register_reads: int
    register_read_ns: float

    @property
    def total_cycles(self) -> int:
        return sum(len(t.cycles) for t in self.traces)

    @property
    def total_ns(self) -> float:
        return sum(t.total_ns for t in self.traces) + self.register_reads * self.register_read_ns


def cross_axis_query(state: ChipState, start: str, start_domain: Domain, rel: str, rng=None) -> CrossAxisResult:
    traces = [cascade(state, start_domain, rel, start, rng)]
    targets = bridge_lookup(state, start, start_domain)
    for concept, domain in targets:
        traces.append(cascade(state, domain, rel, concept, rng))
    return CrossAxisResult(start, start_domain, rel, traces, targets, 1, state.params.register_read_ns)


def timing_report(result, params: DeviceParams | None = None) -> dict:
    """Per-stage, per-cycle and total nanoseconds for a trace or cross-axis result."""
    if isinstance(result, CrossAxisResult):
        traces, reads, read_ns = result.traces, result.register_reads, result.register_read_ns
    else:
        traces, reads, read_ns = [result], 0, 0.0
    params = params or DeviceParams()
    per_axis = []
    for t in traces:
        per_axis.append(
            {
                "domain": str(t.axis_domain),
                "cycles": len(t.cycles),
                "per_cycle_ns": [c.elapsed_ns for c in t.cycles],
                "cascade_ns": t.total_ns,
            }
        )
    cycles = sum(a["cycles"] for a in per_axis)
    cascade_ns = sum(a["cascade_ns"] for a in per_axis)
    return {
        "stage_budget_ns": dict(params.cycle_stage_ns),
        "stage_totals_ns": {k: v * cycles for k, v in params.cycle_stage_ns.items()},
        "per_axis": per_axis,
        "cycles": cycles,
        "cascade_ns": cascade_ns,
        "register_reads": reads,
        "register_ns": reads * read_ns,
        "total_ns": cascade_ns + reads * read_ns,
    }


def trace_to_document(trace: CascadeTrace) -> dict:
    return {
        "domain": str(trace.axis_domain),
        "relation": trace.relation,
        "start": trace.start,
        "chain": list(trace.chain),
        "cycles": [
            {
                "driven_row": c.driven_row,
                "decoded": {k: int(v) for k, v in c.decoded.items()},
                "latched": list(c.latched),
                "elapsed_ns": c.elapsed_ns,
            }
            for c in trace.cycles
        ],
        "total_ns": trace.total_ns,
    }


def query_to_document(result: CrossAxisResult) -> dict:
    return {
        "start": result.start,
        "start_domain": str(result.start_domain),
        "relation": result.relation,
        "bridge_targets": [[c, str(d)] for c, d in result.bridge_targets],
        "traces": [trace_to_document(t) for t in result.traces],
        "total_cycles": result.total_cycles,
        "register_reads": result.register_reads,
        "total_ns": result.total_ns,
    }
