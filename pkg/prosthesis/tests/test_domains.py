import pytest

from prosthesis.domains import (
    CYCLE, FORCE_LIFTOFF, HEIGHT_STRIKE, DomainId, DomainSpec, HybridGraph, default_graph, next_vertex,
    previous_vertex,
)
from prosthesis.errors import ValidationError

GRAPH = default_graph()


def test_cycle_order_wraps():
    assert [str(d) for d in CYCLE] == ["rhs", "rts", "rhl", "lhs", "lts", "lhl"]
    assert next_vertex("lhl") == DomainId.RHS
    assert previous_vertex(DomainId.RHS) == DomainId.LHL
    assert GRAPH.successor("rhl").id == DomainId.LHS
    assert [spec.id for spec in GRAPH] == list(CYCLE)


def test_default_contacts_and_guards():
    assert GRAPH["rhs"].contacts == {"rh", "lt"}
    assert GRAPH["rts"].contacts == {"rh", "rt"} and GRAPH["rts"].release == "lt"
    assert GRAPH["rhl"].contacts == {"rt"} and not GRAPH["rhl"].impact_on_entry
    assert GRAPH["lts"].guard_kind == FORCE_LIFTOFF and GRAPH["lts"].guard_point == "lh"
    assert GRAPH["lhs"].guard_kind == HEIGHT_STRIKE and GRAPH["lhs"].guard_point == "lt"
    assert GRAPH["lhs"].prosthesis_contacts == {"rt"}
    assert GRAPH["lts"].prosthesis_contacts == frozenset()
    assert [GRAPH[d].stance_side for d in CYCLE] == ["r", "r", "r", "l", "l", "l"]


def test_spec_validation():
    with pytest.raises(ValidationError):
        DomainSpec(DomainId.RHL, frozenset(), HEIGHT_STRIKE, "lh", False)
    with pytest.raises(ValidationError):
        DomainSpec(DomainId.RHL, frozenset({"rt"}), FORCE_LIFTOFF, "lh", False)
    with pytest.raises(ValidationError):
        DomainSpec(DomainId.RHL, frozenset({"rt"}), HEIGHT_STRIKE, "rt", False)
    with pytest.raises(ValidationError):
        DomainSpec(DomainId.RHL, frozenset({"rt"}), "timeout", "lh", False)
    with pytest.raises(ValueError):
        DomainId("ltl")


def test_graph_checks_transitions():
    specs = list(GRAPH)
    with pytest.raises(ValidationError):
        HybridGraph(specs[:-1])
    # rhl strikes lh, so lhs must contact it
    broken = [spec if spec.id != DomainId.LHS else DomainSpec(DomainId.LHS, frozenset({"rt", "lt"}), HEIGHT_STRIKE, "lh", True)
              for spec in specs]
    with pytest.raises(ValidationError):
        HybridGraph(broken)
