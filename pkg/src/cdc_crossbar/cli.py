"""cdc-crossbar: compile, verify, query and benchmark crossbar knowledge bases.

Every command reads the algebra from --kb/--relations (plus optional
--bridges/--domains) and falls back to the bundled ICD-11 mini fixture when
--kb is absent. Reports go to stdout, or to --out; diagnostics go to stderr.

Exit status: 0 success, 1 failed verification or unreadable input, 2 usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .device import DeviceParams
from .domain_algebra import (
    AlgebraError,
    DomainAlgebraStar,
    Quad,
    QuadKey,
    TruthValue,
    dump_algebra,
    load_algebra,
    parse_domain,
)
from .engine import (
    AddressError,
    ChipState,
    CycleFault,
    cascade,
    crud_create,
    crud_delete,
    crud_read,
    crud_update,
    cross_axis_query,
    query_to_document,
    timing_report,
    trace_to_document,
)
from .experiments import (
    CAPABILITY_TESTS,
    DEFAULT_SIGMA_GRID,
    emit_report,
    report_meta,
    run_suite,
    variability_sweep,
)
from .fixtures import ANATOMICAL, FixtureSpec, GenerationError, generate_fixture, load_icd11_mini
from .materializer import (
    CompileError,
    compile_topology,
    dump_topology,
    dumps_document,
    load_topology,
    topology_to_document,
    verify_homomorphism,
)

log = logging.getLogger("cdc_crossbar")


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# shared plumbing


def _device_params(args) -> DeviceParams:
    params = DeviceParams.load(args.params) if args.params else DeviceParams()
    changes = {}
    if args.sigma_log is not None:
        changes["sigma_log"] = args.sigma_log
    if args.snr_db is not None:
        changes["snr_db"] = args.snr_db
    if args.v_read is not None:
        changes["V_read"] = args.v_read
        # thresholds follow the read voltage unless the parameter file pins them
        if not args.params:
            changes["I_high_threshold"] = None
            changes["I_low_threshold"] = None
    return params.replace(**changes) if changes else params


def _algebra(args) -> DomainAlgebraStar:
    if args.kb is None:
        if args.relations:
            raise InputError("--relations given without --kb")
        return load_icd11_mini()
    if not args.relations:
        raise InputError("--kb needs --relations")
    return load_algebra(args.kb, args.relations, args.bridges, args.domains)


def _topology(args, da: DomainAlgebraStar):
    params = _device_params(args)
    if args.topology:
        ct = load_topology(args.topology)
        ct.device_params = params
        return ct
    return compile_topology(da, params)


def _state(args, da: DomainAlgebraStar) -> ChipState:
    return ChipState.program(_topology(args, da), seed=args.seed)


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        log.info("wrote %s", args.out)
    else:
        sys.stdout.write(text)


def _json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_compile(args) -> int:
    da = _algebra(args)
    ct = compile_topology(da, _device_params(args), provenance={"tool_version": __version__})
    if args.out:
        dump_topology(ct, args.out)
        log.info("wrote %s", args.out)
    else:
        sys.stdout.write(dumps_document(topology_to_document(ct)))
    return 0


def cmd_verify(args) -> int:
    da = _algebra(args)
    report = verify_homomorphism(da, _topology(args, da))
    _emit(args, _json(report.to_document()))
    for r in report.checks:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}", file=sys.stderr)
    passed = sum(r.passed for r in report.checks)
    print(f"{passed}/{len(report.checks)} checks pass", file=sys.stderr)
    return 0 if report.passed else 1


def cmd_query(args) -> int:
    da = _algebra(args)
    state = _state(args, da)
    domain = parse_domain(args.domain) if args.domain else ANATOMICAL
    if args.cross_axis:
        result = cross_axis_query(state, args.start, domain, args.rel)
        doc = query_to_document(result)
        doc["timing"] = timing_report(result, state.params)
    else:
        trace = cascade(state, domain, args.rel, args.start)
        doc = trace_to_document(trace)
        doc["timing"] = timing_report(trace, state.params)
    doc["seed"] = args.seed
    _emit(args, _json(doc))
    return 0


def cmd_crud(args) -> int:
    da = _algebra(args)
    state = _state(args, da)
    key = QuadKey(args.head, args.rel, args.tail, parse_domain(args.domain))
    doc = {"action": args.action, "key": [key.head, key.rel, key.tail, str(key.domain)], "seed": args.seed}
    if args.action == "read":
        doc["value"] = int(crud_read(state, key))
        _emit(args, _json(doc))
        return 0
    if args.action in ("create", "update") and args.value is None:
        raise InputError(f"{args.action} needs --value")
    if args.action == "create":
        verdict = crud_create(state, Quad(key.head, key.rel, key.tail, key.domain, TruthValue.parse(args.value)))
    elif args.action == "update":
        verdict = crud_update(state, key, TruthValue.parse(args.value))
    else:
        verdict = crud_delete(state, key)
    doc["committed"] = verdict.accepted
    doc["reason"] = verdict.reason.value if verdict.reason else None
    if verdict.accepted:
        if args.action == "delete":
            da.remove(key)
        else:
            da.put(Quad(key.head, key.rel, key.tail, key.domain, TruthValue.parse(args.value)))
        if args.kb_out:
            dump_algebra(da, args.kb_out)
            log.info("wrote updated algebra to %s", args.kb_out)
    _emit(args, _json(doc))
    return 0


def cmd_bench(args) -> int:
    da = _algebra(args)
    state = _state(args, da)
    tests = args.tests or list(CAPABILITY_TESTS)
    results = run_suite(state, da, args.trials, args.seed, tests)
    for name, stats in results.items():
        print(f"{name}: {stats.errors} errors / {stats.trials}", file=sys.stderr)
    meta = report_meta(args.seed, state.params, trials=args.trials)
    _emit(args, emit_report(results, "document", meta=meta))
    return 0


def cmd_sweep(args) -> int:
    da = _algebra(args)
    state = _state(args, da)
    grid = args.sigma_grid or list(DEFAULT_SIGMA_GRID)
    rows = variability_sweep(state, grid, args.trials, args.seed)
    meta = report_meta(args.seed, state.params, trials=args.trials)
    _emit(args, emit_report(rows, args.format, meta=meta))
    return 0


def cmd_gen(args) -> int:
    spec = FixtureSpec(
        entities=args.entities,
        arrays=args.arrays,
        axes=args.axes,
        depth_range=(args.depth_min, args.depth_max),
        density=args.density,
        seed=args.seed,
        relations=args.relations_count,
        target_junctions=args.junctions,
    )
    da = generate_fixture(spec)
    if not args.out:
        raise InputError("gen needs --out DIRECTORY")
    paths = dump_algebra(da, args.out)
    summary = {
        "domains": len(da.domains),
        "quads": len(da.quads),
        "bridges": len(da.bridges),
        "relations": len(da.relations),
        "files": {k: str(v) for k, v in sorted(paths.items())},
    }
    sys.stdout.write(_json(summary))
    return 0


def _chain_text(chain) -> str:
    return " -> ".join(chain)


def cmd_demo(args) -> int:
    da = load_icd11_mini()
    state = ChipState.program(compile_topology(da, _device_params(args)), seed=args.seed)
    result = cross_axis_query(state, "CA40.00", ANATOMICAL, "is_a")
    lines = []
    first, rest = result.traces[0], result.traces[1:]

    def trace_lines(step: int, trace) -> None:
        lines.append(f"STEP {step}: axis {trace.axis_domain}, drive row {trace.start}")
        for i, c in enumerate(trace.cycles, 1):
            out = ", ".join(c.latched) if c.latched else "no +1 column, stop"
            lines.append(f"  cycle {i}: row {c.driven_row} -> {out}")
        lines.append(f"  chain: {_chain_text(trace.chain)} ({len(trace.cycles)} cycles, {trace.total_ns:g} ns)")

    trace_lines(1, first)
    targets = ", ".join(f"({c}, {d})" for c, d in result.bridge_targets)
    lines.append(f"STEP 2: bridge register ({result.start}, {result.start_domain}) -> {targets}")
    for step, trace in enumerate(rest, 3):
        trace_lines(step, trace)
    cascade_ns = sum(t.total_ns for t in result.traces)
    reg_ns = result.register_reads * result.register_read_ns
    lines.append(
        f"TOTAL: {result.total_cycles} cascade cycles + {result.register_reads} register read"
        f" = {cascade_ns:g} ns + {reg_ns:g} ns = {result.total_ns:g} ns"
    )
    _emit(args, "\n".join(lines) + "\n")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("inputs")
    g.add_argument("--kb", help="quads, one JSON record per line (default: bundled ICD-11 mini fixture)")
    g.add_argument("--relations", help="relation typing file")
    g.add_argument("--bridges", help="bridge file")
    g.add_argument("--domains", help="extra domains, one per line")
    g.add_argument("--topology", help="compiled topology document to use instead of compiling")
    d = p.add_argument_group("device")
    d.add_argument("--params", help="device parameter JSON file")
    d.add_argument("--sigma-log", type=float, help="log-normal programming variability")
    d.add_argument("--snr-db", type=float, help="read signal-to-noise ratio in dB")
    d.add_argument("--v-read", type=float, help="read voltage in volts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdc-crossbar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile an algebra into a topology document")
    _add_common(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("verify", help="run the eight homomorphism checks")
    _add_common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("query", help="run a cascade or a cross-axis query")
    _add_common(p)
    p.add_argument("--start", default="CA40.00")
    p.add_argument("--domain", help="axis domain (default @ICD11@Anatomical)")
    p.add_argument("--rel", default="is_a")
    p.add_argument("--cross-axis", action="store_true", help="follow bridges into the other axes")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("crud", help="create, read, update or delete one quad")
    _add_common(p)
    p.add_argument("action", choices=("create", "read", "update", "delete"))
    p.add_argument("--head", required=True)
    p.add_argument("--rel", required=True)
    p.add_argument("--tail", required=True)
    p.add_argument("--domain", required=True)
    p.add_argument("--value", type=int, choices=(-1, 0, 1))
    p.add_argument("--kb-out", help="directory to write the updated algebra to after a commit")
    p.set_defaults(func=cmd_crud)

    p = sub.add_parser("bench", help="capability tests C1-C6")
    _add_common(p)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--tests", nargs="+", choices=CAPABILITY_TESTS)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="error rates across sigma_log")
    _add_common(p)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--sigma-grid", type=float, nargs="+")
    p.add_argument("--format", choices=("rows", "document"), default="rows")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen", help="generate a synthetic multi-axis fixture")
    p.add_argument("--entities", type=int, default=1247)
    p.add_argument("--arrays", type=int, default=47)
    p.add_argument("--axes", type=int, default=3)
    p.add_argument("--depth-min", type=int, default=4)
    p.add_argument("--depth-max", type=int, default=6)
    p.add_argument("--density", type=float, help="slot fill fraction (default: calibrate to --junctions)")
    p.add_argument("--junctions", type=int, default=136_000)
    p.add_argument("--relations-count", type=int, default=8)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("demo", help="walk through the CA40.00 cross-axis query")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", help="device parameter JSON file")
    p.add_argument("--sigma-log", type=float)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--v-read", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except InputError as exc:
        parser.error(str(exc))
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return 1
    except (AlgebraError, CompileError, GenerationError, AddressError, CycleFault, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
