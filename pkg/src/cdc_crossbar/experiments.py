"""Capability tests C1-C6, the variability sweep and report emission.

Every trial draws from its own stream ``default_rng([seed, salt, trial])``,
so results do not depend on how trials are scheduled. The sweep reuses the
same per-trial stream at every sigma (common random numbers), which keeps
the error columns comparable across the grid.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .device import DeviceParams, decode, read_current, write_junction
from .domain_algebra import (
    Domain,
    DomainAlgebraStar,
    Quad,
    QuadKey,
    RejectReason,
    TruthValue,
    admissible_insert,
    oracle_truth,
)
from .engine import ChipState, CycleFault, bridge_lookup, cascade, crud_create
from .fixtures import ANATOMICAL, MINI_CHAINS, MINI_RELATION, MINI_START
from .materializer import ON, OFF

CAPABILITY_TESTS = ("C1", "C2", "C3", "C4", "C5", "C6")
DEFAULT_SIGMA_GRID = (0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.50)
SWEEP_HEADER = ("sigma_log", "err_plus", "err_zero", "err_minus", "err_cascade")
_SALT = {name: i + 1 for i, name in enumerate(CAPABILITY_TESTS)} | {"sweep": 101}
_STATES = (TruthValue.HOLDS, TruthValue.UNDEFINED, TruthValue.NEGATED)


def trial_rng(seed: int, salt: str, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, _SALT[salt], trial])


@dataclass(frozen=True)
class ErrorStats:
    trials: int
    errors: int

    def __post_init__(self):
        if self.trials < 0 or not 0 <= self.errors <= max(self.trials, 0):
            raise ValueError("need 0 <= errors <= trials")

    @property
    def rate(self) -> float:
        return self.errors / self.trials if self.trials else 0.0

    @property
    def ci_95(self) -> tuple[float, float]:
        """Wilson score interval."""
        n = self.trials
        if n == 0:
            return (0.0, 1.0)
        z = 1.959963984540054
        p = self.rate
        denom = 1 + z * z / n
        centre = (p + z * z / (2 * n)) / denom
        half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
        # clamp rounding so the bounds always bracket the rate
        return (min(p, max(0.0, centre - half)), max(p, min(1.0, centre + half)))

    def __add__(self, other: "ErrorStats") -> "ErrorStats":
        return ErrorStats(self.trials + other.trials, self.errors + other.errors)

    def to_dict(self) -> dict:
        lo, hi = self.ci_95
        return {"trials": self.trials, "errors": self.errors, "rate": self.rate, "ci_95": [lo, hi]}


@dataclass
class SweepRow:
    sigma_log: float
    per_state_error: dict[TruthValue, ErrorStats]
    cascade_error: ErrorStats

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        e = self.per_state_error
        return (
            self.sigma_log,
            e[TruthValue.HOLDS].rate,
            e[TruthValue.UNDEFINED].rate,
            e[TruthValue.NEGATED].rate,
            self.cascade_error.rate,
        )


@dataclass(frozen=True)
class CascadeProbe:
    """Which cascade C3 and the sweep run, and the chain it must return."""

    domain: Domain = ANATOMICAL
    relation: str = MINI_RELATION
    start: str = MINI_START
    expected: tuple[str, ...] = tuple(MINI_CHAINS[ANATOMICAL])


# ---------------------------------------------------------------------------
# capability tests


def _c1(state: ChipState, da: DomainAlgebraStar, trials: int, seed: int) -> ErrorStats:
    # 4 random reads per trial inside one array; any access elsewhere or a wrong decode is an error
    arrays = [d for d, a in sorted(state.topology.arrays.items()) if a.concepts]
    rels = sorted(state.topology.meta_states)
    errors = 0
    for t in range(trials):
        rng = trial_rng(seed, "C1", t)
        d = arrays[int(rng.integers(len(arrays)))]
        concepts = state.topology.arrays[d].concepts
        state.access_log.clear()
        for _ in range(4):
            h = concepts[int(rng.integers(len(concepts)))]
            c = concepts[int(rng.integers(len(concepts)))]
            r = rels[int(rng.integers(len(rels)))]
            got = state.sense(QuadKey(h, r, c, d), rng)
            if got != oracle_truth(da, h, r, c, d):
                errors += 1
        errors += sum(n for dom, n in state.access_log.items() if dom != d)
    return ErrorStats(4 * trials, errors)


def _c2(state: ChipState, trials: int, seed: int) -> ErrorStats:
    p = state.params
    errors = 0
    for t in range(trials):
        rng = trial_rng(seed, "C2", t)
        for v in _STATES:
            if decode(read_current(write_junction(v, p, rng), p, rng), p) != v:
                errors += 1
    return ErrorStats(3 * trials, errors)


def _cascade_wrong(state: ChipState, probe: CascadeProbe, rng) -> bool:
    state.reprogram(probe.domain, probe.relation, rng)
    try:
        trace = cascade(state, probe.domain, probe.relation, probe.start, rng)
    except CycleFault:
        return True
    return tuple(trace.chain) != probe.expected


def _c3(state: ChipState, trials: int, seed: int, probe: CascadeProbe) -> ErrorStats:
    work = state.clone()
    errors = sum(_cascade_wrong(work, probe, trial_rng(seed, "C3", t)) for t in range(trials))
    return ErrorStats(trials, errors)


def _c4(state: ChipState, trials: int, seed: int) -> ErrorStats:
    # rewrite each meta-junction with fresh variability, then read the gate level it drives
    work = state.clone()
    rels = sorted(work.topology.meta_states)
    expected = {r: ON if work.topology.monotone(r) else OFF for r in rels}
    errors = 0
    for t in range(trials):
        rng = trial_rng(seed, "C4", t)
        work.program_meta(rng)
        errors += sum(work.read_gate(r, rng) != expected[r] for r in rels)
    return ErrorStats(len(rels) * trials, errors)


def contradiction_pool(da: DomainAlgebraStar, state: ChipState) -> list[tuple[Quad, RejectReason]]:
    """Writes the oracle rejects, each with the reason it gives."""
    pool = []
    for key, q in sorted(da.quads.items()):
        flipped = Quad(q.head, q.rel, q.tail, q.domain, -q.value)
        verdict = admissible_insert(da, flipped)
        if not verdict:
            pool.append((flipped, verdict.reason))
        for child in state.topology.children_of(key.domain):
            k = key._replace(domain=child)
            if da.explicit(k) == TruthValue.UNDEFINED:
                w = Quad(q.head, q.rel, q.tail, child, -q.value)
                verdict = admissible_insert(da, w)
                if not verdict:
                    pool.append((w, verdict.reason))
        if q.value == TruthValue.HOLDS and q.rel in state.topology.transitive:
            back = Quad(q.tail, q.rel, q.head, q.domain, TruthValue.HOLDS)
            if da.explicit(back.key) == TruthValue.UNDEFINED:
                verdict = admissible_insert(da, back)
                if not verdict:
                    pool.append((back, verdict.reason))
    return pool


def _c5(state: ChipState, da: DomainAlgebraStar, trials: int, seed: int) -> ErrorStats:
    pool = contradiction_pool(da, state)
    if not pool:
        raise ValueError("fixture offers no contradicting write")
    errors = 0
    for t in range(trials):
        rng = trial_rng(seed, "C5", t)
        q, reason = pool[int(rng.integers(len(pool)))]
        verdict = crud_create(state, q, rng)
        if verdict.accepted or verdict.reason != reason:
            errors += 1
            if verdict.accepted:
                raise RuntimeError(f"contradicting write {q} was committed; state is no longer the fixture")
    return ErrorStats(trials, errors)


def _c6(state: ChipState, da: DomainAlgebraStar, trials: int, seed: int) -> ErrorStats:
    truth: dict[tuple[str, Domain], list[tuple[str, Domain]]] = {}
    for b in da.bridges:
        truth.setdefault((b.concept, b.from_domain), []).append((b.to_concept, b.to_domain))
    keys = sorted(truth) or [(c, d) for d, a in sorted(state.topology.arrays.items()) for c in a.concepts[:1]]
    errors = 0
    for t in range(trials):
        rng = trial_rng(seed, "C6", t)
        for _ in range(3):
            key = keys[int(rng.integers(len(keys)))]
            if bridge_lookup(state, *key) != truth.get(key, []):
                errors += 1
    return ErrorStats(3 * trials, errors)


def run_capability(
    test_id: str,
    state: ChipState,
    algebra: DomainAlgebraStar,
    trials: int,
    seed: int = 0,
    probe: CascadeProbe | None = None,
) -> ErrorStats:
    if test_id == "C1":
        return _c1(state, algebra, trials, seed)
    if test_id == "C2":
        return _c2(state, trials, seed)
    if test_id == "C3":
        return _c3(state, trials, seed, probe or CascadeProbe())
    if test_id == "C4":
        return _c4(state, trials, seed)
    if test_id == "C5":
        return _c5(state, algebra, trials, seed)
    if test_id == "C6":
        return _c6(state, algebra, trials, seed)
    raise ValueError(f"unknown capability test {test_id!r}; expected one of {', '.join(CAPABILITY_TESTS)}")


def run_suite(
    state: ChipState, algebra: DomainAlgebraStar, trials: int, seed: int = 0, tests=CAPABILITY_TESTS
) -> dict[str, ErrorStats]:
    return {tid: run_capability(tid, state, algebra, trials, seed) for tid in tests}


# ---------------------------------------------------------------------------
# variability sweep


def variability_sweep(
    state: ChipState,
    sigma_grid=DEFAULT_SIGMA_GRID,
    trials: int = 10_000,
    seed: int = 0,
    probe: CascadeProbe | None = None,
) -> list[SweepRow]:
    """Per-state decode error and cascade error at each sigma_log."""
    grid = list(sigma_grid)
    if not grid:
        raise ValueError("sigma grid is empty")
    probe = probe or CascadeProbe()
    rows = []
    for sigma in grid:
        params = state.params.replace(sigma_log=float(sigma))
        work = state.clone(params=params)
        state_err = {v: 0 for v in _STATES}
        cascade_err = 0
        for t in range(trials):
            rng = trial_rng(seed, "sweep", t)
            for v in _STATES:
                if decode(read_current(write_junction(v, params, rng), params, rng), params) != v:
                    state_err[v] += 1
            cascade_err += _cascade_wrong(work, probe, rng)
        rows.append(
            SweepRow(
                float(sigma),
                {v: ErrorStats(trials, state_err[v]) for v in _STATES},
                ErrorStats(trials, cascade_err),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# reports


def _fmt(x: float) -> str:
    return format(x, ".10g")


def sweep_rows_text(rows: list[SweepRow], meta: dict | None = None) -> str:
    buf = io.StringIO()
    for k, v in sorted((meta or {}).items()):
        buf.write(f"# {k}: {json.dumps(v, sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for row in rows:
        writer.writerow([_fmt(x) for x in row.as_tuple()])
    return buf.getvalue()


def sweep_document(rows: list[SweepRow], meta: dict | None = None) -> dict:
    names = {TruthValue.HOLDS: "plus", TruthValue.UNDEFINED: "zero", TruthValue.NEGATED: "minus"}
    return {
        **(meta or {}),
        "rows": [
            {
                "sigma_log": r.sigma_log,
                **{names[v]: s.to_dict() for v, s in r.per_state_error.items()},
                "cascade": r.cascade_error.to_dict(),
            }
            for r in rows
        ],
    }


def suite_document(results: dict[str, ErrorStats], meta: dict | None = None) -> dict:
    return {**(meta or {}), "tests": [{"test": k, **v.to_dict()} for k, v in results.items()]}


def report_meta(seed: int, params: DeviceParams, **extra) -> dict:
    return {"tool_version": __version__, "seed": seed, "parameters": params.to_dict(), **extra}


def emit_report(results, fmt: str = "document", path=None, meta: dict | None = None) -> str:
    """Render sweep rows or a capability suite; write to ``path`` when given.

    ``rows`` format applies to sweep results only.
    """
    is_sweep = isinstance(results, list)
    if fmt == "rows":
        if not is_sweep:
            raise ValueError("rows format needs sweep results")
        text = sweep_rows_text(results, meta)
    elif fmt == "document":
        doc = sweep_document(results, meta) if is_sweep else suite_document(results, meta)
        text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
