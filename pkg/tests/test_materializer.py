import dataclasses
import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdc_crossbar.device import DeviceParams
from cdc_crossbar.domain_algebra import (
    Domain,
    DomainAlgebraStar,
    Quad,
    RelationMeta,
    Tau,
    TruthValue,
    heyting_implication,
    meet,
    parse_domain,
    refines,
)
from cdc_crossbar.fixtures import random_algebra
from cdc_crossbar.materializer import (
    CHECK_NAMES,
    OFF,
    ON,
    CompileError,
    GateKey,
    array_ancestor,
    buffer_tree_plan,
    compile_topology,
    dumps_document,
    gates_from_meta,
    hasse_edges,
    load_topology,
    dump_topology,
    reaches,
    topology_from_document,
    topology_to_document,
    unfold_tau,
    verify_homomorphism,
)

D = parse_domain


def test_mini_topology_shape(mini_ct):
    assert set(map(str, mini_ct.arrays)) == {
        "@ICD11",
        "@ICD11@Anatomical",
        "@ICD11@Etiological",
        "@ICD11@Clinical",
        "@ICD11@Clinical@Pediatric",
    }
    assert len(mini_ct.hasse_edges) == 4
    assert len(mini_ct.gates) == 2 * 4
    assert mini_ct.meta_states == {"has_dosage": TruthValue.NEGATED, "is_a": TruthValue.HOLDS}
    assert mini_ct.junction_count == 9
    assert mini_ct.bridge_entry_count == 6
    assert mini_ct.gates[GateKey("has_dosage", D("@ICD11@Clinical"), D("@ICD11@Clinical@Pediatric"))] == OFF
    assert mini_ct.gates[GateKey("is_a", D("@ICD11@Clinical"), D("@ICD11@Clinical@Pediatric"))] == ON


def test_child_array_addresses_parent_concepts(mini_ct):
    clin = mini_ct.arrays[D("@ICD11@Clinical")]
    ped = mini_ct.arrays[D("@ICD11@Clinical@Pediatric")]
    assert set(clin.concepts) <= set(ped.concepts)
    assert "Weight_Based_Dose" in ped.concepts and "Weight_Based_Dose" not in clin.concepts


def test_hasse_edges_are_covering_pairs():
    delta = {D("@a"), D("@a@b"), D("@a@b@c@d"), D("@x")}
    assert hasse_edges(delta) == {(D("@a"), D("@a@b")), (D("@a@b"), D("@a@b@c@d"))}


@pytest.mark.parametrize(
    "gates, stages",
    [(0, 0), (1, 0), (2, 1), (4, 1), (5, 2), (16, 2), (17, 3), (4096, 6), (4097, 7), (8192, 7), (8600, 7)],
)
def test_buffer_tree_stages_use_exact_ceiling(gates, stages):
    assert buffer_tree_plan(gates, 4).stages == stages


def test_buffer_tree_delay_and_errors():
    assert buffer_tree_plan(8192).propagation_delay_ns == 1.0
    assert buffer_tree_plan(64, per_stage_delay_ns=0.25).propagation_delay_ns == 0.75
    with pytest.raises(ValueError):
        buffer_tree_plan(-1)
    with pytest.raises(ValueError):
        buffer_tree_plan(8, fan_out=1)


def test_gates_follow_meta_states(mini_da, mini_ct):
    assert gates_from_meta(mini_ct.meta_states, mini_ct.hasse_edges) == unfold_tau(mini_da)


def test_compile_rejects_invalid_algebra(mini_da):
    broken = DomainAlgebraStar(mini_da.domains - {D("@ICD11")}, mini_da.relations, mini_da.quads, mini_da.bridges)
    with pytest.raises(CompileError, match="meet-closed"):
        compile_topology(broken)


def test_array_lattice_matches_domain_lattice(mini_da, mini_ct):
    doms = sorted(mini_da.domains)
    for a, b in itertools.product(doms, repeat=2):
        assert reaches(mini_ct, b, a) == refines(a, b)
        assert array_ancestor(mini_ct, a, b) == meet(a, b)


def test_mini_passes_all_checks(mini_da, mini_ct):
    report = verify_homomorphism(mini_da, mini_ct)
    assert [c.name for c in report.checks] == list(CHECK_NAMES)
    assert report.passed, report.failed
    assert report.to_document()["summary"] == "8/8 checks pass"


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_random_algebras_pass_all_checks(seed):
    da = random_algebra(seed, max_domains=20)
    report = verify_homomorphism(da, compile_topology(da))
    assert report.passed, report.failed


# -- fault injection: each fault trips exactly its own check ----------------------


def _only_failure(da, ct):
    return verify_homomorphism(da, ct).failed


def test_flipped_gate_fails_only_gate_check(mini_da, mini_ct):
    key = GateKey("has_dosage", D("@ICD11@Clinical"), D("@ICD11@Clinical@Pediatric"))
    gates = dict(mini_ct.gates)
    gates[key] = ON
    assert _only_failure(mini_da, dataclasses.replace(mini_ct, gates=gates)) == ["L6_gates"]


def test_moved_quad_fails_only_fiber_check(mini_da, mini_ct):
    arrays = dict(mini_ct.arrays)
    src, dst = D("@ICD11@Clinical"), D("@ICD11@Clinical@Pediatric")
    moved = ("Amoxicillin", "Adult_Standard_Dose")
    src_states = {r: dict(p) for r, p in arrays[src].states.items()}
    dst_states = {r: dict(p) for r, p in arrays[dst].states.items()}
    dst_states["has_dosage"][moved] = src_states["has_dosage"].pop(moved)
    arrays[src] = dataclasses.replace(arrays[src], states=src_states)
    arrays[dst] = dataclasses.replace(arrays[dst], states=dst_states)
    assert _only_failure(mini_da, dataclasses.replace(mini_ct, arrays=arrays)) == ["L1_fiber_isolation"]


def test_comparable_bridge_fails_only_bridge_check(mini_da, mini_ct):
    bank = {k: list(v) for k, v in mini_ct.bridge_bank.items()}
    bank[("CA40.00", D("@ICD11@Clinical"))].append(("CA40.00", D("@ICD11@Clinical@Pediatric")))
    assert _only_failure(mini_da, dataclasses.replace(mini_ct, bridge_bank=bank)) == ["L8_bridges"]


def test_cut_wire_fails_order_checks(mini_da, mini_ct):
    edges = mini_ct.hasse_edges - {(D("@ICD11"), D("@ICD11@Anatomical"))}
    failed = _only_failure(mini_da, dataclasses.replace(mini_ct, hasse_edges=edges))
    assert "L3_order_preservation" in failed and "L4_meet" in failed


# -- serialization ----------------------------------------------------------------


def test_document_roundtrip_is_byte_stable(tmp_path, mini_ct):
    path = tmp_path / "ct.json"
    dump_topology(mini_ct, path)
    again = load_topology(path)
    assert dumps_document(topology_to_document(again)) == path.read_text()
    assert again.gates == mini_ct.gates and again.bridge_bank == mini_ct.bridge_bank


def test_document_gates_are_rederived_from_meta(mini_ct):
    doc = topology_to_document(mini_ct)
    doc["gates"] = [[r, p, c, ON] for r, p, c, _ in doc["gates"]]
    assert topology_from_document(doc).gates == mini_ct.gates


def test_document_rejects_foreign_format():
    with pytest.raises(CompileError):
        topology_from_document({"format": "other"})


def test_document_summary(mini_ct):
    summary = topology_to_document(mini_ct)["summary"]
    assert summary == {
        "arrays": 5,
        "junctions": 9,
        "hasse_edges": 4,
        "gates": 8,
        "meta_states": 2,
        "bridge_entries": 6,
    }


def test_device_params_travel_with_topology(mini_da):
    p = DeviceParams(sigma_log=0.3)
    ct = compile_topology(mini_da, p)
    assert topology_from_document(topology_to_document(ct)).device_params == p


def test_implication_agrees_on_wiring():
    da = DomainAlgebraStar.build(
        [Quad("a", "is_a", "b", D("@R@A@x"), TruthValue.HOLDS)],
        [RelationMeta("is_a", Tau.MONOTONE, True)],
        domains=[D("@R")],
    )
    ct = compile_topology(da)
    assert verify_homomorphism(da, ct).passed
    assert heyting_implication(D("@R@A@x"), D("@R"), da.domains) == D("@R")
