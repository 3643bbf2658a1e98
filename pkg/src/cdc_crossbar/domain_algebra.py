"""Materialized domain algebra: domains, fibers, relation typing, bridges.

Domains are ``@``-separated strings ordered by prefix. Two orientations of
that order are exposed as separate predicates:

* :func:`refines` (child, parent) -- the wiring direction, a child domain
  extends its parent's string.
* :func:`generalizes` (general, specific) -- the lattice direction used by
  :func:`meet`, :func:`join_within` and :func:`heyting_implication`, in which
  the longest common prefix is the greatest lower bound.

The ``oracle_*`` functions are a noise-free software reasoner used as ground
truth for the crossbar simulator.
"""

from __future__ import annotations

import enum
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple


class AlgebraError(ValueError):
    """A domain algebra invariant does not hold."""


class DomainParseError(AlgebraError):
    pass


class MaterializationError(AlgebraError):
    """A lattice operation has no defined result inside the finite domain set."""


class CycleError(AlgebraError):
    """A transitive relation contains a +1 cycle."""


# ---------------------------------------------------------------------------
# domains


@dataclass(frozen=True, order=True)
class Domain:
    segments: tuple[str, ...]

    def __post_init__(self):
        if not self.segments:
            raise DomainParseError("a domain needs at least one segment")
        for seg in self.segments:
            if not seg or "@" in seg or any(ch.isspace() for ch in seg):
                raise DomainParseError(f"invalid domain segment {seg!r}")

    @classmethod
    def parse(cls, text: str) -> "Domain":
        return parse_domain(text)

    def __str__(self) -> str:
        return "@" + "@".join(self.segments)

    def __repr__(self) -> str:
        return f"Domain({str(self)!r})"

    @property
    def depth(self) -> int:
        return len(self.segments)

    def child(self, segment: str) -> "Domain":
        return Domain(self.segments + (segment,))

    def prefixes(self) -> Iterator["Domain"]:
        """Proper prefixes, longest first."""
        for n in range(len(self.segments) - 1, 0, -1):
            yield Domain(self.segments[:n])


def parse_domain(text: str) -> Domain:
    if not isinstance(text, str) or not text.startswith("@"):
        raise DomainParseError(f"domain {text!r} must start with '@' (position 0)")
    segments = text[1:].split("@")
    pos = 1
    for seg in segments:
        if not seg:
            raise DomainParseError(f"empty segment in domain {text!r} at position {pos}")
        bad = next((i for i, ch in enumerate(seg) if ch.isspace()), None)
        if bad is not None:
            raise DomainParseError(f"whitespace in domain {text!r} at position {pos + bad}")
        pos += len(seg) + 1
    return Domain(tuple(segments))


def refines(d_child: Domain, d_parent: Domain) -> bool:
    """True iff ``d_parent`` is a (not necessarily proper) prefix of ``d_child``."""
    n = len(d_parent.segments)
    return len(d_child.segments) >= n and d_child.segments[:n] == d_parent.segments


def generalizes(d_general: Domain, d_specific: Domain) -> bool:
    """Lattice order: ``d_general <= d_specific``. Inverse reading of :func:`refines`."""
    return refines(d_specific, d_general)


def comparable(d1: Domain, d2: Domain) -> bool:
    return refines(d1, d2) or refines(d2, d1)


def meet(d1: Domain, d2: Domain) -> Domain | None:
    """Longest common prefix, or None when the first segments differ."""
    common = []
    for a, b in zip(d1.segments, d2.segments):
        if a != b:
            break
        common.append(a)
    return Domain(tuple(common)) if common else None


def join_within(ds: Iterable[Domain], delta: Iterable[Domain] = ()) -> Domain:
    """The most specific element of ``ds`` that every other element generalizes.

    ``delta`` is accepted for symmetry with the other lattice operations; the
    result is always drawn from ``ds`` itself.
    """
    ds = sorted(set(ds))
    if not ds:
        raise MaterializationError("join of an empty set of domains")
    maximal = [d for d in ds if not any(e != d and generalizes(d, e) for e in ds)]
    if len(maximal) != 1:
        a, b = maximal[0], maximal[1]
        raise MaterializationError(f"no unique maximum: {a} and {b} are both maximal")
    return maximal[0]


def heyting_implication(d1: Domain, d2: Domain, delta: Iterable[Domain]) -> Domain:
    """Relative pseudo-complement ``d1 -> d2`` by enumeration over ``delta``."""
    delta = set(delta)
    if d1 not in delta or d2 not in delta:
        raise MaterializationError(f"{d1} and {d2} must both belong to the domain set")
    candidates = []
    for d in delta:
        m = meet(d, d1)
        if m is not None and generalizes(m, d2):
            candidates.append(d)
    if not candidates:
        raise MaterializationError(f"{d1} -> {d2}: no domain satisfies the defining condition")
    return join_within(candidates, delta)


def meet_closure(domains: Iterable[Domain]) -> frozenset[Domain]:
    closed = set(domains)
    while True:
        ordered = sorted(closed)
        extra = set()
        for i, a in enumerate(ordered):
            for b in ordered[i + 1:]:
                m = meet(a, b)
                if m is not None and m not in closed:
                    extra.add(m)
        if not extra:
            return frozenset(closed)
        closed |= extra


# ---------------------------------------------------------------------------
# assertions


class TruthValue(enum.IntEnum):
    NEGATED = -1
    UNDEFINED = 0
    HOLDS = 1

    @classmethod
    def parse(cls, raw) -> "TruthValue":
        # bool is an int subclass; refuse it along with 1.0, "1", etc.
        if isinstance(raw, TruthValue):
            return raw
        if type(raw) is not int or raw not in (-1, 0, 1):
            raise AlgebraError(f"truth value must be one of 1, 0, -1, got {raw!r}")
        return cls(raw)


class Tau(str, enum.Enum):
    MONOTONE = "monotone"
    NON_MONOTONE = "non_monotone"


@dataclass(frozen=True)
class RelationMeta:
    name: str
    tau: Tau
    transitive: bool = False

    @property
    def monotone(self) -> bool:
        return self.tau is Tau.MONOTONE


class QuadKey(NamedTuple):
    head: str
    rel: str
    tail: str
    domain: Domain


@dataclass(frozen=True)
class Quad:
    head: str
    rel: str
    tail: str
    domain: Domain
    value: TruthValue

    @property
    def key(self) -> QuadKey:
        return QuadKey(self.head, self.rel, self.tail, self.domain)


@dataclass(frozen=True)
class Bridge:
    concept: str
    from_domain: Domain
    to_concept: str
    to_domain: Domain
    kind: str = "same_entity_across"


class RejectReason(str, enum.Enum):
    DUPLICATE_CONFLICT = "duplicate_conflict"
    DERIVED_CONTRADICTION = "derived_contradiction"
    CYCLE = "cycle"


@dataclass(frozen=True)
class Verdict:
    """Outcome of a write admissibility decision."""

    accepted: bool
    reason: RejectReason | None = None

    def __bool__(self) -> bool:
        return self.accepted

    @property
    def committed(self) -> bool:
        return self.accepted


ACCEPT = Verdict(True)


def reject(reason: RejectReason) -> Verdict:
    return Verdict(False, reason)


# ---------------------------------------------------------------------------
# the algebra


@dataclass
class DomainAlgebraStar:
    """Finite domain set, fibers of explicit quads, relation table and bridges.

    Quads are stored by key, so each key has at most one explicit value. An
    explicit 0 is the same as no assertion and is never stored.
    """

    domains: frozenset[Domain]
    relations: dict[str, RelationMeta]
    quads: dict[QuadKey, Quad] = field(default_factory=dict)
    bridges: tuple[Bridge, ...] = ()

    def __post_init__(self):
        self._succ: dict[tuple[Domain, str, str], set[str]] = defaultdict(set)
        for key in self.quads:
            self._succ[(key.domain, key.rel, key.head)].add(key.tail)

    @classmethod
    def build(
        cls,
        quads: Iterable[Quad],
        relations: Iterable[RelationMeta],
        bridges: Iterable[Bridge] = (),
        domains: Iterable[Domain] = (),
    ) -> "DomainAlgebraStar":
        """Assemble and validate; the domain set is inferred and meet-closed."""
        rels = {}
        for meta in relations:
            if meta.name in rels:
                raise AlgebraError(f"relation {meta.name!r} declared twice")
            rels[meta.name] = meta
        stored: dict[QuadKey, Quad] = {}
        seen: dict[QuadKey, TruthValue] = {}
        for q in quads:
            if q.key in seen and seen[q.key] != q.value:
                raise AlgebraError(f"conflicting explicit values for {_fmt_key(q.key)}")
            seen[q.key] = q.value
            if q.value != TruthValue.UNDEFINED:
                stored[q.key] = q
        bridge_list = list(dict.fromkeys(bridges))
        delta = set(domains)
        delta.update(k.domain for k in seen)
        for b in bridge_list:
            delta.update((b.from_domain, b.to_domain))
        da = cls(meet_closure(delta), rels, dict(sorted(stored.items())), tuple(bridge_list))
        da.check()
        return da

    # invariants ----------------------------------------------------------

    def violations(self) -> list[str]:
        out = []
        for key in self.quads:
            if key.rel not in self.relations:
                out.append(f"quad relation known: {key.rel!r} is not in the relation table")
            if key.domain not in self.domains:
                out.append(f"quad domain in domain set: {key.domain} is missing")
        for b in self.bridges:
            for d in (b.from_domain, b.to_domain):
                if d not in self.domains:
                    out.append(f"bridge domain in domain set: {d} is missing")
            if comparable(b.from_domain, b.to_domain):
                out.append(
                    f"bridge endpoints incomparable: {b.from_domain} and {b.to_domain} are comparable"
                )
        if meet_closure(self.domains) != self.domains:
            missing = sorted(meet_closure(self.domains) - self.domains)
            out.append(f"domain set meet-closed: missing {', '.join(map(str, missing))}")
        return out

    def check(self) -> None:
        problems = self.violations()
        if problems:
            raise AlgebraError("; ".join(problems))

    # structure -----------------------------------------------------------

    def parent(self, d: Domain) -> Domain | None:
        """Nearest proper ancestor inside the domain set."""
        return next((p for p in d.prefixes() if p in self.domains), None)

    def ancestors(self, d: Domain) -> list[Domain]:
        """Proper ancestors inside the domain set, nearest first."""
        return [p for p in d.prefixes() if p in self.domains]

    def children(self, d: Domain) -> list[Domain]:
        return sorted(c for c in self.domains if c != d and self.parent(c) == d)

    def descendants(self, d: Domain) -> list[Domain]:
        return sorted((c for c in self.domains if c != d and refines(c, d)), key=_depth_order)

    def fiber(self, d: Domain) -> list[Quad]:
        return [q for k, q in self.quads.items() if k.domain == d]

    def concepts(self, d: Domain) -> set[str]:
        out = set()
        for k in self.quads:
            if k.domain == d:
                out.update((k.head, k.tail))
        return out

    def explicit(self, key: QuadKey) -> TruthValue:
        q = self.quads.get(key)
        return q.value if q is not None else TruthValue.UNDEFINED

    # mutation (unchecked; see admissible_insert) -----------------------------

    def put(self, q: Quad) -> None:
        if q.rel not in self.relations:
            raise AlgebraError(f"unknown relation {q.rel!r}")
        if q.domain not in self.domains:
            raise AlgebraError(f"domain {q.domain} is not in the domain set")
        if q.value == TruthValue.UNDEFINED:
            self.remove(q.key)
            return
        self.quads[q.key] = q
        self._succ[(q.domain, q.rel, q.head)].add(q.tail)

    def remove(self, key: QuadKey) -> None:
        if self.quads.pop(key, None) is not None:
            self._succ[(key.domain, key.rel, key.head)].discard(key.tail)

    def copy(self) -> "DomainAlgebraStar":
        return DomainAlgebraStar(self.domains, dict(self.relations), dict(self.quads), self.bridges)

    def canonical(self) -> "DomainAlgebraStar":
        return DomainAlgebraStar(
            self.domains, dict(sorted(self.relations.items())), dict(sorted(self.quads.items())), self.bridges
        )

    def _tails(self, d: Domain, rel: str, head: str) -> set[str]:
        return self._succ.get((d, rel, head), set())


def _depth_order(d: Domain):
    return (d.depth, d.segments)


def _fmt_key(key: QuadKey) -> str:
    return f"<{key.head}, {key.rel}, {key.tail}, {key.domain}>"


# ---------------------------------------------------------------------------
# software oracle


def oracle_truth(da: DomainAlgebraStar, c: str, r: str, c2: str, d: Domain) -> TruthValue:
    """Explicit value in d, else the nearest ancestor's value for monotone r, else 0."""
    if d not in da.domains:
        raise AlgebraError(f"domain {d} is not in the domain set")
    value = da.explicit(QuadKey(c, r, c2, d))
    if value != TruthValue.UNDEFINED:
        return value
    meta = da.relations.get(r)
    if meta is None or not meta.monotone:
        return TruthValue.UNDEFINED
    for p in da.ancestors(d):
        value = da.explicit(QuadKey(c, r, c2, p))
        if value != TruthValue.UNDEFINED:
            return value
    return TruthValue.UNDEFINED


def oracle_successors(da: DomainAlgebraStar, c: str, r: str, d: Domain) -> list[str]:
    """Concepts x with oracle_truth(c, r, x, d) = +1, sorted."""
    candidates = set(da._tails(d, r, c))
    meta = da.relations.get(r)
    if meta is not None and meta.monotone:
        for p in da.ancestors(d):
            candidates |= da._tails(p, r, c)
    return sorted(x for x in candidates if oracle_truth(da, c, r, x, d) == TruthValue.HOLDS)


def oracle_reach(da: DomainAlgebraStar, c: str, r: str, d: Domain) -> set[str]:
    """Every concept reachable from c over +1 edges, c included."""
    seen = {c}
    stack = [c]
    while stack:
        for x in oracle_successors(da, stack.pop(), r, d):
            if x not in seen:
                seen.add(x)
                stack.append(x)
    return seen


def oracle_classify(da: DomainAlgebraStar, c: str, r: str, d: Domain) -> list[list[str]]:
    """All maximal +1 paths starting at c. A linear taxonomy yields one path.

    Raises CycleError if a path revisits a concept.
    """
    meta = da.relations.get(r)
    if meta is None or not meta.transitive:
        raise AlgebraError(f"relation {r!r} is not transitive")
    paths: list[list[str]] = []

    def walk(path: list[str]) -> None:
        nxt = oracle_successors(da, path[-1], r, d)
        if not nxt:
            paths.append(list(path))
            return
        for x in nxt:
            if x in path:
                raise CycleError(f"+1 cycle through {x!r} for {r!r} in {d}")
            path.append(x)
            walk(path)
            path.pop()

    walk([c])
    return paths


def _effective_domains(da: DomainAlgebraStar, key: QuadKey) -> list[Domain]:
    """Domains where a write at key would be the visible value: the key's own
    domain plus descendants reached through monotone inheritance without an
    explicit override."""
    out = [key.domain]
    meta = da.relations[key.rel]
    if not meta.monotone:
        return out
    frontier = [key.domain]
    while frontier:
        d = frontier.pop()
        for child in da.children(d):
            if da.explicit(key._replace(domain=child)) == TruthValue.UNDEFINED:
                out.append(child)
                frontier.append(child)
    return out


def admissible_insert(da: DomainAlgebraStar, q: Quad) -> Verdict:
    """Write-time consistency check against the explicit and derived state."""
    if q.rel not in da.relations:
        raise AlgebraError(f"unknown relation {q.rel!r}")
    if q.domain not in da.domains:
        raise AlgebraError(f"domain {q.domain} is not in the domain set")
    existing = da.explicit(q.key)
    if existing != TruthValue.UNDEFINED and existing != q.value:
        return reject(RejectReason.DUPLICATE_CONFLICT)
    derived = oracle_truth(da, q.head, q.rel, q.tail, q.domain)
    if derived != TruthValue.UNDEFINED and q.value == -derived:
        return reject(RejectReason.DERIVED_CONTRADICTION)
    meta = da.relations[q.rel]
    if meta.transitive and q.value == TruthValue.HOLDS:
        if q.head == q.tail:
            return reject(RejectReason.CYCLE)
        for d in _effective_domains(da, q.key):
            if q.head in oracle_reach(da, q.tail, q.rel, d):
                return reject(RejectReason.CYCLE)
    return ACCEPT


# ---------------------------------------------------------------------------
# line-delimited file formats


def _read_records(path: Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AlgebraError(f"{path}:{lineno}: {exc}") from exc
            if not isinstance(rec, dict):
                raise AlgebraError(f"{path}:{lineno}: expected an object")
            yield lineno, rec


def _field(path, lineno, rec, name):
    try:
        return rec[name]
    except KeyError:
        raise AlgebraError(f"{path}:{lineno}: missing field {name!r}") from None


def read_quads(path: Path) -> list[Quad]:
    out = []
    for lineno, rec in _read_records(path):
        try:
            out.append(
                Quad(
                    str(_field(path, lineno, rec, "from")),
                    str(_field(path, lineno, rec, "rel")),
                    str(_field(path, lineno, rec, "to")),
                    parse_domain(_field(path, lineno, rec, "domain")),
                    TruthValue.parse(_field(path, lineno, rec, "value")),
                )
            )
        except AlgebraError as exc:
            raise AlgebraError(f"{path}:{lineno}: {exc}") from None
    return out


def read_relations(path: Path) -> list[RelationMeta]:
    out = []
    for lineno, rec in _read_records(path):
        try:
            tau = Tau(_field(path, lineno, rec, "tau"))
        except ValueError:
            raise AlgebraError(f"{path}:{lineno}: tau must be 'monotone' or 'non_monotone'") from None
        out.append(RelationMeta(str(_field(path, lineno, rec, "rel")), tau, bool(rec.get("transitive", False))))
    return out


def read_bridges(path: Path) -> list[Bridge]:
    out = []
    for lineno, rec in _read_records(path):
        out.append(
            Bridge(
                str(_field(path, lineno, rec, "concept")),
                parse_domain(_field(path, lineno, rec, "from_domain")),
                str(_field(path, lineno, rec, "to_concept")),
                parse_domain(_field(path, lineno, rec, "to_domain")),
                str(rec.get("kind", "same_entity_across")),
            )
        )
    return out


def read_domains(path: Path) -> list[Domain]:
    with open(path, encoding="utf-8") as fh:
        return [parse_domain(line.strip()) for line in fh if line.strip()]


def load_algebra(kb, relations, bridges=None, domains=None) -> DomainAlgebraStar:
    return DomainAlgebraStar.build(
        read_quads(Path(kb)),
        read_relations(Path(relations)),
        read_bridges(Path(bridges)) if bridges else (),
        read_domains(Path(domains)) if domains else (),
    )


def _dumps(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, ensure_ascii=False)


def dump_algebra(da: DomainAlgebraStar, directory) -> dict[str, Path]:
    """Write the four canonical files; the output is byte-stable for equal inputs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {name: directory / f"{name}.jsonl" for name in ("kb", "relations", "bridges", "domains")}
    kb_lines = [
        _dumps({"from": k.head, "rel": k.rel, "to": k.tail, "domain": str(k.domain), "value": int(q.value)})
        for k, q in sorted(da.quads.items())
    ]
    rel_lines = [
        _dumps({"rel": m.name, "tau": m.tau.value, "transitive": m.transitive})
        for _, m in sorted(da.relations.items())
    ]
    bridge_lines = [
        _dumps(
            {
                "concept": b.concept,
                "from_domain": str(b.from_domain),
                "to_concept": b.to_concept,
                "to_domain": str(b.to_domain),
                "kind": b.kind,
            }
        )
        for b in da.bridges
    ]
    domain_lines = [str(d) for d in sorted(da.domains)]
    for name, lines in (("kb", kb_lines), ("relations", rel_lines), ("bridges", bridge_lines), ("domains", domain_lines)):
        paths[name].write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return paths
