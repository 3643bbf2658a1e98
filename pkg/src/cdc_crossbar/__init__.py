"""Compile domain-scoped ternary knowledge bases onto memristive crossbars and simulate them."""

__version__ = "0.1.0"

from .device import DeviceParams, NonConvergentError, network_flow_fixed_point
from .domain_algebra import (
    Bridge,
    Domain,
    DomainAlgebraStar,
    Quad,
    QuadKey,
    RelationMeta,
    Tau,
    TruthValue,
    admissible_insert,
    load_algebra,
    oracle_classify,
    oracle_truth,
    parse_domain,
)
from .engine import ChipState, cascade, cross_axis_query, inherit_pass, read_cycle
from .fixtures import FixtureSpec, generate_fixture, load_icd11_mini
from .materializer import compile_topology, verify_homomorphism

__all__ = [
    "Bridge",
    "ChipState",
    "DeviceParams",
    "Domain",
    "DomainAlgebraStar",
    "FixtureSpec",
    "NonConvergentError",
    "Quad",
    "QuadKey",
    "RelationMeta",
    "Tau",
    "TruthValue",
    "admissible_insert",
    "cascade",
    "compile_topology",
    "cross_axis_query",
    "generate_fixture",
    "inherit_pass",
    "load_algebra",
    "load_icd11_mini",
    "network_flow_fixed_point",
    "oracle_classify",
    "oracle_truth",
    "parse_domain",
    "read_cycle",
    "verify_homomorphism",
]
