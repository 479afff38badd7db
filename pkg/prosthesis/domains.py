"""The six walking domains and the directed cycle that links them.

Right is the prosthesis side. Each domain is named after the event that
opens it: heel strike (hs), toe strike (ts) and heel lift (hl).
"""
from dataclasses import dataclass
from enum import Enum

from prosthesis.errors import ValidationError


class DomainId(str, Enum):
    RHS = "rhs"
    RTS = "rts"
    RHL = "rhl"
    LHS = "lhs"
    LTS = "lts"
    LHL = "lhl"

    def __str__(self):
        return self.value


CYCLE = (DomainId.RHS, DomainId.RTS, DomainId.RHL, DomainId.LHS, DomainId.LTS, DomainId.LHL)

HEIGHT_STRIKE = "height_strike"
FORCE_LIFTOFF = "force_liftoff"


def next_vertex(domain) -> DomainId:
    domain = DomainId(domain)
    return CYCLE[(CYCLE.index(domain) + 1) % len(CYCLE)]


def previous_vertex(domain) -> DomainId:
    domain = DomainId(domain)
    return CYCLE[(CYCLE.index(domain) - 1) % len(CYCLE)]


@dataclass(frozen=True)
class DomainSpec:
    id: DomainId
    contacts: frozenset
    guard_kind: str
    guard_point: str
    impact_on_entry: bool
    release: str | None = None # trailing contact dropped at entry

    def __post_init__(self):
        if not self.contacts:
            raise ValidationError(f"domain {self.id} needs at least one contact")
        if self.guard_kind not in (HEIGHT_STRIKE, FORCE_LIFTOFF):
            raise ValidationError(f"unknown guard kind {self.guard_kind!r}")
        if self.guard_kind == FORCE_LIFTOFF and self.guard_point not in self.contacts:
            raise ValidationError(f"{self.id} lift-off guard on {self.guard_point}, which is not in contact")
        if self.guard_kind == HEIGHT_STRIKE and self.guard_point in self.contacts:
            raise ValidationError(f"{self.id} strike guard on {self.guard_point}, which is already in contact")

    @property
    def prosthesis_contacts(self) -> frozenset:
        return frozenset(point for point in self.contacts if point.startswith("r"))

    @property
    def stance_side(self) -> str:
        """The leg whose foot carries the body through this domain."""
        return "r" if self.id in (DomainId.RHS, DomainId.RTS, DomainId.RHL) else "l"


class HybridGraph:
    """Domain specs keyed by id, traversed along the fixed cycle."""

    def __init__(self, specs):
        self.specs = {spec.id: spec for spec in specs}
        missing = [domain for domain in CYCLE if domain not in self.specs]
        if missing:
            raise ValidationError(f"hybrid graph is missing domains {[str(d) for d in missing]}")
        for domain in CYCLE:
            spec, successor = self.specs[domain], self.specs[next_vertex(domain)]
            if spec.guard_kind == HEIGHT_STRIKE and spec.guard_point not in successor.contacts:
                raise ValidationError(f"{domain} strikes {spec.guard_point} but {successor.id} does not contact it")
            if spec.guard_kind == FORCE_LIFTOFF and spec.guard_point in successor.contacts:
                raise ValidationError(f"{domain} lifts {spec.guard_point} but {successor.id} still contacts it")

    def __getitem__(self, domain) -> DomainSpec:
        return self.specs[DomainId(domain)]

    def __iter__(self):
        return iter(self.specs[domain] for domain in CYCLE)

    def successor(self, domain) -> DomainSpec:
        return self.specs[next_vertex(domain)]


def default_graph() -> HybridGraph:
    return HybridGraph([
        DomainSpec(DomainId.RHS, frozenset({"rh", "lt"}), HEIGHT_STRIKE, "rt", impact_on_entry=True),
        DomainSpec(DomainId.RTS, frozenset({"rh", "rt"}), FORCE_LIFTOFF, "rh", impact_on_entry=True, release="lt"),
        DomainSpec(DomainId.RHL, frozenset({"rt"}), HEIGHT_STRIKE, "lh", impact_on_entry=False),
        DomainSpec(DomainId.LHS, frozenset({"lh", "rt"}), HEIGHT_STRIKE, "lt", impact_on_entry=True),
        DomainSpec(DomainId.LTS, frozenset({"lh", "lt"}), FORCE_LIFTOFF, "lh", impact_on_entry=True, release="rt"),
        DomainSpec(DomainId.LHL, frozenset({"lt"}), HEIGHT_STRIKE, "rh", impact_on_entry=False),
    ])
