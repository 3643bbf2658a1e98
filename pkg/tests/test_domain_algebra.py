import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdc_crossbar.domain_algebra import (
    AlgebraError,
    Bridge,
    CycleError,
    Domain,
    DomainAlgebraStar,
    DomainParseError,
    MaterializationError,
    Quad,
    QuadKey,
    RejectReason,
    RelationMeta,
    Tau,
    TruthValue,
    admissible_insert,
    comparable,
    dump_algebra,
    generalizes,
    heyting_implication,
    join_within,
    load_algebra,
    meet,
    meet_closure,
    oracle_classify,
    oracle_reach,
    oracle_successors,
    oracle_truth,
    parse_domain,
    refines,
)

D = parse_domain
IS_A = RelationMeta("is_a", Tau.MONOTONE, True)
DOSE = RelationMeta("has_dosage", Tau.NON_MONOTONE, False)

segments = st.lists(st.sampled_from(["A", "B", "C"]), min_size=1, max_size=4)
domains = segments.map(lambda s: Domain(tuple(s)))


# -- parsing -------------------------------------------------------------------


@pytest.mark.parametrize("text", ["@ICD11", "@ICD11@Anatomical", "@a@b@c@d"])
def test_parse_roundtrip(text):
    assert str(D(text)) == text


@pytest.mark.parametrize(
    "text, pos",
    [("ICD11", "position 0"), ("@", "position 1"), ("@a@@b", "position 3"), ("@a@b c", "position 4")],
)
def test_parse_errors_name_position(text, pos):
    with pytest.raises(DomainParseError, match=pos):
        parse_domain(text)


def test_parse_rejects_non_string():
    with pytest.raises(DomainParseError):
        parse_domain(None)


@pytest.mark.parametrize("raw, want", [(1, 1), (0, 0), (-1, -1), (TruthValue.NEGATED, -1)])
def test_truth_value_parse(raw, want):
    assert TruthValue.parse(raw) == want


@pytest.mark.parametrize("raw", [True, False, 2, -2, 0.5, 1.0, "1", None])
def test_truth_value_parse_rejects(raw):
    with pytest.raises((ValueError, TypeError)):
        TruthValue.parse(raw)


# -- lattice -------------------------------------------------------------------


def test_refines_examples():
    assert refines(D("@ICD11@Anatomical"), D("@ICD11"))
    assert refines(D("@ICD11"), D("@ICD11"))
    assert not refines(D("@ICD11"), D("@ICD11@Anatomical"))
    assert not refines(D("@ICD11@Anat"), D("@ICD11@Anatomical"))
    assert not comparable(D("@ICD11@Anatomical"), D("@ICD11@Clinical"))


def test_meet_examples():
    assert meet(D("@ICD11@Anatomical"), D("@ICD11@Clinical@Pediatric")) == D("@ICD11")
    assert meet(D("@a@b"), D("@a@b@c")) == D("@a@b")
    assert meet(D("@a"), D("@b")) is None


@given(domains, domains)
def test_refines_iff_meet_is_parent(a, b):
    assert refines(a, b) == (meet(a, b) == b)


@given(domains, domains, domains)
def test_refines_is_a_partial_order(a, b, c):
    assert refines(a, a)
    if refines(a, b) and refines(b, a):
        assert a == b
    if refines(a, b) and refines(b, c):
        assert refines(a, c)


@given(domains, domains, domains)
def test_meet_laws(a, b, c):
    assert meet(a, a) == a
    assert meet(a, b) == meet(b, a)
    ab = meet(a, b)
    bc = meet(b, c)
    left = meet(ab, c) if ab is not None else None
    right = meet(a, bc) if bc is not None else None
    assert left == right


@given(domains, domains)
def test_meet_is_greatest_common_prefix(a, b):
    m = meet(a, b)
    common = [p for p in [a, *a.prefixes()] if refines(b, p)]
    if not common:
        assert m is None
    else:
        assert m == max(common, key=lambda d: d.depth)


@given(st.lists(domains, min_size=1, max_size=6))
def test_meet_closure_is_closed_and_minimal(ds):
    closed = meet_closure(ds)
    assert set(ds) <= closed
    for a, b in itertools.product(closed, repeat=2):
        m = meet(a, b)
        assert m is None or m in closed
    # every added element is a meet of originals
    originals = set(ds)
    derived = {meet(a, b) for a, b in itertools.product(originals, repeat=2)} - {None}
    assert closed <= originals | derived | meet_closure(derived)


def test_join_within():
    ds = [D("@a"), D("@a@b"), D("@a@b@c")]
    assert join_within(ds) == D("@a@b@c")
    with pytest.raises(MaterializationError):
        join_within([D("@a@b"), D("@a@c")])
    with pytest.raises(MaterializationError):
        join_within([])


@given(st.lists(domains, min_size=1, max_size=6), st.data())
@settings(max_examples=150)
def test_heyting_adjunction(ds, data):
    """c <= (a -> b) exactly when c /\\ a <= b, for c with a meet against a."""
    delta = meet_closure(ds)
    a = data.draw(st.sampled_from(sorted(delta)))
    b = data.draw(st.sampled_from(sorted(delta)))
    try:
        imp = heyting_implication(a, b, delta)
    except MaterializationError:
        return
    assert imp in delta
    for c in delta:
        m = meet(c, a)
        if m is None:
            continue
        assert generalizes(m, b) == generalizes(c, imp)


def test_heyting_examples():
    delta = meet_closure([D("@R@A"), D("@R@B"), D("@R@A@x")])
    # A -> R is the sibling B: the largest domain whose meet with A stays at R
    assert heyting_implication(D("@R@A"), D("@R"), delta) == D("@R@B")
    # without a top element some implications have no unique maximum
    with pytest.raises(MaterializationError):
        heyting_implication(D("@R"), D("@R@A@x"), delta)
    chain = {D("@R"), D("@R@A"), D("@R@A@x")}
    assert heyting_implication(D("@R@A@x"), D("@R@A"), chain) == D("@R@A")
    assert heyting_implication(D("@R@A"), D("@R@A@x"), chain) == D("@R@A@x")
    with pytest.raises(MaterializationError):
        heyting_implication(D("@R@A"), D("@nope"), delta)


# -- algebra -------------------------------------------------------------------


def _q(h, r, t, d, v=1):
    return Quad(h, r, t, D(d), TruthValue(v))


def test_build_infers_and_closes_domains():
    da = DomainAlgebraStar.build([_q("a", "is_a", "b", "@X@P"), _q("b", "is_a", "c", "@X@Q")], [IS_A])
    assert da.domains == {D("@X"), D("@X@P"), D("@X@Q")}
    assert da.parent(D("@X@P")) == D("@X")
    assert da.children(D("@X")) == [D("@X@P"), D("@X@Q")]


def test_build_drops_explicit_zero_and_rejects_conflicts():
    da = DomainAlgebraStar.build([_q("a", "is_a", "b", "@X", 0)], [IS_A])
    assert not da.quads and D("@X") in da.domains
    DomainAlgebraStar.build([_q("a", "is_a", "b", "@X"), _q("a", "is_a", "b", "@X")], [IS_A])
    with pytest.raises(AlgebraError, match="conflicting"):
        DomainAlgebraStar.build([_q("a", "is_a", "b", "@X"), _q("a", "is_a", "b", "@X", -1)], [IS_A])


def test_build_rejects_unknown_relation_and_comparable_bridge():
    with pytest.raises(AlgebraError, match="relation"):
        DomainAlgebraStar.build([_q("a", "part_of", "b", "@X")], [IS_A])
    with pytest.raises(AlgebraError, match="comparable"):
        DomainAlgebraStar.build([], [IS_A], [Bridge("a", D("@X"), "a", D("@X@Y"))])


def test_oracle_truth_inheritance_and_override():
    da = DomainAlgebraStar.build(
        [
            _q("a", "is_a", "b", "@X"),
            _q("a", "is_a", "c", "@X"),
            _q("a", "is_a", "c", "@X@Y", -1),
            _q("drug", "has_dosage", "adult", "@X"),
        ],
        [IS_A, DOSE],
        domains=[D("@X@Y@Z")],
    )
    assert oracle_truth(da, "a", "is_a", "b", D("@X@Y@Z")) == 1
    assert oracle_truth(da, "a", "is_a", "c", D("@X@Y@Z")) == -1
    assert oracle_truth(da, "a", "is_a", "c", D("@X")) == 1
    assert oracle_truth(da, "drug", "has_dosage", "adult", D("@X@Y")) == 0
    assert oracle_truth(da, "a", "is_a", "zzz", D("@X")) == 0
    assert oracle_successors(da, "a", "is_a", D("@X@Y")) == ["b"]


def test_oracle_classify_on_mini(mini_da):
    anat = D("@ICD11@Anatomical")
    assert oracle_classify(mini_da, "CA40.00", "is_a", anat) == [
        ["CA40.00", "Pneumonia", "Lower_Resp_Infection", "Respiratory_Disease"]
    ]
    assert oracle_classify(mini_da, "CA40.00", "is_a", D("@ICD11@Etiological")) == [
        ["CA40.00", "Bacterial_Infection", "Infectious_Disease"]
    ]
    assert oracle_classify(mini_da, "CA40.00", "is_a", D("@ICD11@Clinical")) == [
        ["CA40.00", "Acute_Lower_Respiratory"]
    ]
    with pytest.raises(AlgebraError):
        oracle_classify(mini_da, "Amoxicillin", "has_dosage", D("@ICD11@Clinical"))


def test_oracle_classify_branches_and_cycles():
    da = DomainAlgebraStar.build(
        [_q("a", "is_a", "b", "@X"), _q("a", "is_a", "c", "@X"), _q("b", "is_a", "d", "@X")], [IS_A]
    )
    assert oracle_classify(da, "a", "is_a", D("@X")) == [["a", "b", "d"], ["a", "c"]]
    assert oracle_reach(da, "a", "is_a", D("@X")) == {"a", "b", "c", "d"}
    loop = DomainAlgebraStar.build([_q("a", "is_a", "b", "@X"), _q("b", "is_a", "a", "@X")], [IS_A])
    with pytest.raises(CycleError):
        oracle_classify(loop, "a", "is_a", D("@X"))


def test_admissible_insert_reasons(mini_da):
    anat, clin, ped = D("@ICD11@Anatomical"), D("@ICD11@Clinical"), D("@ICD11@Clinical@Pediatric")
    cases = [
        (Quad("CA40.00", "is_a", "Pneumonia", anat, TruthValue(-1)), RejectReason.DUPLICATE_CONFLICT),
        (Quad("CA40.00", "is_a", "Acute_Lower_Respiratory", ped, TruthValue(-1)), RejectReason.DERIVED_CONTRADICTION),
        (Quad("Respiratory_Disease", "is_a", "CA40.00", anat, TruthValue(1)), RejectReason.CYCLE),
        (Quad("Pneumonia", "is_a", "Pneumonia", anat, TruthValue(1)), RejectReason.CYCLE),
    ]
    for q, reason in cases:
        verdict = admissible_insert(mini_da, q)
        assert not verdict and verdict.reason == reason, q
    # same value again, a non-monotone override and a fresh edge are all fine
    assert admissible_insert(mini_da, Quad("CA40.00", "is_a", "Pneumonia", anat, TruthValue(1)))
    assert admissible_insert(mini_da, Quad("Amoxicillin", "has_dosage", "Adult_Standard_Dose", ped, TruthValue(-1)))
    assert admissible_insert(mini_da, Quad("Respiratory_Disease", "is_a", "Disease", clin, TruthValue(1)))


def test_admissible_cycle_seen_in_descendant():
    # the child inherits b -> a, so a -> b written in the parent closes a loop only in the child
    da = DomainAlgebraStar.build([_q("b", "is_a", "a", "@X@Y")], [IS_A], domains=[D("@X")])
    verdict = admissible_insert(da, _q("a", "is_a", "b", "@X"))
    assert verdict.reason == RejectReason.CYCLE


def test_put_and_remove_keep_index():
    da = DomainAlgebraStar.build([_q("a", "is_a", "b", "@X")], [IS_A])
    da.put(_q("b", "is_a", "c", "@X"))
    assert oracle_reach(da, "a", "is_a", D("@X")) == {"a", "b", "c"}
    da.put(_q("b", "is_a", "c", "@X", 0))
    assert QuadKey("b", "is_a", "c", D("@X")) not in da.quads
    assert oracle_reach(da, "a", "is_a", D("@X")) == {"a", "b"}


def test_dump_load_roundtrip_is_byte_stable(tmp_path, mini_da):
    p1 = dump_algebra(mini_da, tmp_path / "one")
    again = load_algebra(p1["kb"], p1["relations"], p1["bridges"], p1["domains"])
    p2 = dump_algebra(again, tmp_path / "two")
    for name in p1:
        assert p1[name].read_bytes() == p2[name].read_bytes()
    assert again.quads == mini_da.quads and set(again.bridges) == set(mini_da.bridges)


def test_load_reports_bad_record(tmp_path):
    kb = tmp_path / "kb.jsonl"
    rel = tmp_path / "rel.jsonl"
    rel.write_text('{"rel": "is_a", "tau": "monotone", "transitive": true}\n')
    kb.write_text('{"from": "a", "rel": "is_a", "to": "b", "domain": "@X", "value": 7}\n')
    with pytest.raises(AlgebraError, match=r"kb\.jsonl:1:"):
        load_algebra(kb, rel)
