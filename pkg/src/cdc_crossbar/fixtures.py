"""Bundled and synthetic knowledge bases.

``load_icd11_mini`` returns the respiratory worked example: three axis
chains for CA40.00 plus a non-inheritable dosage decoy. ``generate_fixture``
builds chapter-scale three-axis taxonomies, and ``random_algebra`` produces
small arbitrary algebras for property tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .domain_algebra import (
    Bridge,
    Domain,
    DomainAlgebraStar,
    Quad,
    RelationMeta,
    Tau,
    TruthValue,
    admissible_insert,
    comparable,
    load_algebra,
)

MINI_RELATION = "is_a"
MINI_DECOY = "has_dosage"
MINI_START = "CA40.00"
ANATOMICAL = Domain(("ICD11", "Anatomical"))
ETIOLOGICAL = Domain(("ICD11", "Etiological"))
CLINICAL = Domain(("ICD11", "Clinical"))
PEDIATRIC = Domain(("ICD11", "Clinical", "Pediatric"))

# classification chains of CA40.00 in each axis
MINI_CHAINS = {
    ANATOMICAL: ["CA40.00", "Pneumonia", "Lower_Resp_Infection", "Respiratory_Disease"],
    ETIOLOGICAL: ["CA40.00", "Bacterial_Infection", "Infectious_Disease"],
    CLINICAL: ["CA40.00", "Acute_Lower_Respiratory"],
}


class GenerationError(ValueError):
    pass


def mini_fixture_paths() -> dict[str, str]:
    root = resources.files("cdc_crossbar") / "data" / "icd11_mini"
    return {name: str(root / f"{name}.jsonl") for name in ("kb", "relations", "bridges", "domains")}


def load_icd11_mini() -> DomainAlgebraStar:
    paths = mini_fixture_paths()
    return load_algebra(paths["kb"], paths["relations"], paths["bridges"], paths["domains"])


# ---------------------------------------------------------------------------
# chapter-scale generator

AXIS_NAMES = ("Anatomical", "Etiological", "Clinical")

# (name, tau, transitive); the first n are used
RELATION_POOL = (
    ("is_a", Tau.MONOTONE, True),
    ("part_of", Tau.MONOTONE, True),
    ("has_site", Tau.MONOTONE, False),
    ("has_manifestation", Tau.MONOTONE, False),
    ("caused_by", Tau.MONOTONE, False),
    ("has_dosage", Tau.NON_MONOTONE, False),
    ("treated_by", Tau.NON_MONOTONE, False),
    ("contraindicated_with", Tau.NON_MONOTONE, False),
)


@dataclass(frozen=True)
class FixtureSpec:
    entities: int = 1247
    arrays: int = 47
    axes: int = 3
    depth_range: tuple[int, int] = (4, 6)
    # fraction of addressable slots filled; None calibrates to target_junctions
    density: float | None = None
    seed: int = 1
    relations: int = 8
    target_junctions: int = 136_000
    shared_fraction: float = 0.4
    max_domain_depth: int = 3
    p_holds: float = 0.7


def _check_spec(spec: FixtureSpec) -> None:
    lo, hi = spec.depth_range
    if min(spec.entities, spec.arrays, spec.axes, spec.relations) < 1:
        raise GenerationError("entities, arrays, axes and relations must be positive")
    if spec.axes > spec.arrays:
        raise GenerationError(f"{spec.axes} axes need at least as many arrays, got {spec.arrays}")
    if not 1 <= lo <= hi:
        raise GenerationError(f"bad depth range {spec.depth_range}")
    if spec.relations > len(RELATION_POOL):
        raise GenerationError(f"at most {len(RELATION_POOL)} relations are available")
    if spec.density is not None and not 0 <= spec.density <= 1:
        raise GenerationError("density must lie in [0, 1]")
    if not 0 <= spec.shared_fraction <= 1:
        raise GenerationError("shared_fraction must lie in [0, 1]")
    if spec.max_domain_depth < 1:
        raise GenerationError("max_domain_depth must be at least 1")
    shared = round(spec.entities * spec.shared_fraction) if spec.axes > 1 else 0
    per_axis_min = shared + (spec.entities - shared) // spec.axes
    if per_axis_min < lo:
        raise GenerationError(
            f"taxonomy depth {lo} exceeds the {per_axis_min} entities available per axis"
        )


def _axis_name(i: int) -> str:
    return AXIS_NAMES[i] if i < len(AXIS_NAMES) else f"Axis{i + 1}"


def _domain_tree(root: Domain, n: int, max_depth: int) -> list[Domain]:
    """n domains under root (root included), breadth-first, depth-limited."""
    out = [root]
    frontier = [root]
    width = max(1, round(math.sqrt(n - 1))) if n > 1 else 0
    while len(out) < n and frontier:
        nxt = []
        slots = [(p, k) for k in range(max(width, 1)) for p in frontier]
        for parent, k in slots:
            if len(out) == n:
                break
            child = parent.child(f"{parent.segments[-1][:3]}{k + 1}" if parent == root else f"{parent.segments[-1]}_{k + 1}")
            out.append(child)
            if child.depth - root.depth + 1 < max_depth:
                nxt.append(child)
        frontier = nxt
        width = max(width, math.ceil((n - len(out)) / max(len(frontier), 1)))
    if len(out) < n:
        raise GenerationError(f"cannot fit {n} arrays into an axis of depth {max_depth}")
    return out


def _level_sizes(n: int, depth: int) -> list[int]:
    weights = np.array([2.0**k for k in range(depth)])
    sizes = np.maximum(1, np.floor(n * weights / weights.sum())).astype(int)
    sizes[-1] += n - sizes.sum()
    return sizes.tolist()


def generate_fixture(spec: FixtureSpec) -> DomainAlgebraStar:
    """Synthetic multi-axis taxonomy, deterministic per spec."""
    _check_spec(spec)
    rng = np.random.default_rng(spec.seed)
    relations = [RelationMeta(n, t, tr) for n, t, tr in RELATION_POOL[: spec.relations]]
    transitive = {m.name for m in relations if m.transitive}

    n_shared = round(spec.entities * spec.shared_fraction) if spec.axes > 1 else 0
    shared = [f"E{i:05d}" for i in range(n_shared)]
    n_unique = spec.entities - n_shared
    per_axis_unique = [n_unique // spec.axes + (1 if i < n_unique % spec.axes else 0) for i in range(spec.axes)]
    per_axis_arrays = [spec.arrays // spec.axes + (1 if i < spec.arrays % spec.axes else 0) for i in range(spec.axes)]

    domains: list[Domain] = []
    quads: dict = {}
    value_of: dict[tuple[int, str, str, str], TruthValue] = {}
    level_of: dict[tuple[int, str], int] = {}
    home: dict[tuple[int, str], Domain] = {}
    space_of: dict[Domain, list[str]] = {}
    axis_of_domain: dict[Domain, int] = {}

    for a in range(spec.axes):
        name = _axis_name(a)
        root = Domain((name,))
        tree = _domain_tree(root, per_axis_arrays[a], spec.max_domain_depth)
        domains.extend(tree)
        kids: dict[Domain, list[Domain]] = {d: [] for d in tree}
        for d in tree[1:]:
            kids[Domain(d.segments[:-1])].append(d)
        for d in tree:
            axis_of_domain[d] = a

        concepts = [f"{name[:3].upper()}{i:05d}" for i in range(per_axis_unique[a])] + shared
        concepts = [concepts[i] for i in rng.permutation(len(concepts))]
        depth = int(rng.integers(spec.depth_range[0], spec.depth_range[1] + 1))
        depth = min(depth, len(concepts))
        if depth < spec.depth_range[0]:
            raise GenerationError(f"axis {name} has too few concepts for depth {spec.depth_range[0]}")
        levels, start = [], 0
        for size in _level_sizes(len(concepts), depth):
            levels.append(concepts[start : start + size])
            start += size
        for c in levels[0]:
            level_of[(a, c)] = 0
            home[(a, c)] = root
        for k in range(1, depth):
            parents = levels[k - 1]
            for c in levels[k]:
                p = parents[int(rng.integers(len(parents)))]
                options = [home[(a, p)]] + kids[home[(a, p)]]
                d = options[int(rng.integers(len(options)))]
                level_of[(a, c)] = k
                home[(a, c)] = d
                value_of[(a, c, "is_a", p)] = TruthValue.HOLDS
                quads[(c, "is_a", p, d)] = TruthValue.HOLDS

        members: dict[Domain, set[str]] = {d: set() for d in tree}
        for (ax, c), d in home.items():
            if ax == a:
                members[d].add(c)
        for c, _, p, d in [k for k in quads if axis_of_domain.get(k[3]) == a]:
            members[d].update((c, p))
        for d in tree:
            space = set(members[d])
            if d != root:
                space.update(space_of[Domain(d.segments[:-1])])
            space_of[d] = sorted(space)

    rel_names = [m.name for m in relations]
    slots = {d: len(space_of[d]) * max(len(space_of[d]) - 1, 0) * len(rel_names) for d in domains}
    total_slots = sum(slots.values())
    if spec.density is not None:
        target = round(spec.density * total_slots)
    else:
        target = spec.target_junctions
    extra = max(0, target - len(quads))
    if extra > total_slots - len(quads):
        raise GenerationError(f"{target} junctions do not fit in {total_slots} addressable slots")

    # proportional quota per domain, largest remainders first
    raw = {d: extra * slots[d] / total_slots if total_slots else 0.0 for d in domains}
    quota = {d: int(raw[d]) for d in domains}
    for d in sorted(domains, key=lambda d: (-(raw[d] - quota[d]), d))[: extra - sum(quota.values())]:
        quota[d] += 1

    for d in domains:
        need = quota[d]
        space = space_of[d]
        n = len(space)
        if need == 0 or n < 2:
            continue
        a = axis_of_domain[d]
        per_rel = n * n
        picks = rng.choice(per_rel * len(rel_names), size=min(per_rel * len(rel_names), need * 2 + 16), replace=False)
        for flat in picks:
            if need == 0:
                break
            r_i, rest = divmod(int(flat), per_rel)
            h_i, t_i = divmod(rest, n)
            if h_i == t_i:
                continue
            h, t, rel = space[h_i], space[t_i], rel_names[r_i]
            if (h, rel, t, d) in quads:
                continue
            v = value_of.get((a, h, rel, t))
            if v is None:
                v = TruthValue.HOLDS if rng.random() < spec.p_holds else TruthValue.NEGATED
                # transitive +1 edges only point down the level order, which keeps every plane acyclic
                if rel in transitive and level_of[(a, h)] <= level_of[(a, t)]:
                    v = TruthValue.NEGATED
                value_of[(a, h, rel, t)] = v
            quads[(h, rel, t, d)] = v
            need -= 1
        if need:
            raise GenerationError(f"could not place {quota[d]} junctions in {d}")

    bridges = []
    for c in shared:
        for a in range(spec.axes):
            for b in range(spec.axes):
                if a != b:
                    bridges.append(Bridge(c, home[(a, c)], c, home[(b, c)]))

    return DomainAlgebraStar.build(
        (Quad(h, r, t, d, v) for (h, r, t, d), v in sorted(quads.items())),
        relations,
        bridges,
        domains,
    )


# ---------------------------------------------------------------------------
# small random algebras


def random_algebra(seed: int, max_domains: int = 12, concepts: int = 6, quads: int = 30) -> DomainAlgebraStar:
    """A small admissible algebra: random prefix forest, random typing, admissible quads.

    The domain count never exceeds ``max_domains`` after meet closure.
    """
    rng = np.random.default_rng(seed)
    n_roots = int(rng.integers(1, 3))
    domains = [Domain((f"R{i}",)) for i in range(n_roots)]
    target = int(rng.integers(n_roots, max(n_roots, max_domains) + 1))
    while len(domains) < target:
        parent = domains[int(rng.integers(len(domains)))]
        if parent.depth >= 4:
            continue
        child = parent.child(f"s{len(domains)}")
        domains.append(child)

    n_rel = int(rng.integers(1, 4))
    relations = [RelationMeta("is_a", Tau.MONOTONE, True)]
    for i in range(1, n_rel):
        tau = Tau.MONOTONE if rng.random() < 0.5 else Tau.NON_MONOTONE
        relations.append(RelationMeta(f"r{i}", tau, bool(rng.random() < 0.5)))
    names = [f"c{i}" for i in range(concepts)]

    da = DomainAlgebraStar.build([], relations, [], domains)
    for _ in range(quads):
        q = Quad(
            names[int(rng.integers(concepts))],
            relations[int(rng.integers(len(relations)))].name,
            names[int(rng.integers(concepts))],
            domains[int(rng.integers(len(domains)))],
            TruthValue.HOLDS if rng.random() < 0.7 else TruthValue.NEGATED,
        )
        if q.head != q.tail and admissible_insert(da, q):
            da.put(q)

    bridges = []
    for _ in range(int(rng.integers(0, 4))):
        d1, d2 = (domains[int(rng.integers(len(domains)))] for _ in range(2))
        if not comparable(d1, d2):
            bridges.append(Bridge(names[int(rng.integers(concepts))], d1, names[int(rng.integers(concepts))], d2))
    return DomainAlgebraStar.build(da.quads.values(), relations, bridges, domains)
