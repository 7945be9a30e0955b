"""Workspace: a triplet structure plus the bookkeeping the engine layers need.

The structure itself stays pure (S, F).  Everything else lives here: the two
reserved analogy-bookkeeping nodes, instance/side tags for encoded nodes,
declared relations, provenance of generated node names, and the registry of
instance mapping facts.  Tag and provenance maps are append-only on purpose:
rollback may delete a generated node, but an identical re-application in a
later branch must reproduce the same name, and a *different* provenance
arriving at the same name is a hash collision worth failing on.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .structure import NodeId, TripletStructure

# Reserved nodes marking abstraction bookkeeping (interned at init so user
# symbols cannot collide with them by accident).
ABSTRACTION = "Abstraction"
IS_ABS = "IsAbs"


class WorkspaceError(Exception):
    pass


class GeneratedNameCollision(WorkspaceError):
    """Two different (rule, assignment, label) provenances hashed to one name."""


@dataclass
class Workspace:
    ts: TripletStructure = field(default_factory=TripletStructure)
    # node -> (instance tag or None for shared, side tag or None)
    tags: dict[NodeId, tuple[str | None, str | None]] = field(default_factory=dict)
    # relation name -> slot node names (already interned)
    relations: dict[str, list[NodeId]] = field(default_factory=dict)
    # generated node name -> provenance string
    provenance: dict[NodeId, str] = field(default_factory=dict)
    # encoded instance tag -> sides seen (e.g. {"before", "after"})
    instances: dict[str, set[str | None]] = field(default_factory=dict)
    # mapping-fact node -> instance tag it maps
    mapping_instances: dict[NodeId, str] = field(default_factory=dict)

    def instance_of(self, node: NodeId) -> str | None:
        return self.tags.get(node, (None, None))[0]

    def side_of(self, node: NodeId) -> str | None:
        return self.tags.get(node, (None, None))[1]

    def set_tag(self, node: NodeId, instance: str | None, side: str | None) -> None:
        self.tags[node] = (instance, side)

    def note_instance(self, tag: str, side: str | None) -> None:
        self.instances.setdefault(tag, set()).add(side)

    def declare_relation(self, name: str, slots: list[str]) -> list[NodeId]:
        """Intern one slot node per argument position; idempotent for same slots."""
        if name in self.relations:
            have = self.relations[name]
            want = [f"{name}.{s}" for s in slots]
            if have != want:
                raise WorkspaceError(f"relation {name!r} re-declared with different slots")
            return have
        nodes = [self.ts.intern_node(f"{name}.{s}") for s in slots]
        self.relations[name] = nodes
        return nodes

    def claim_generated(self, name: NodeId, provenance: str) -> None:
        """Record who generated `name`; error if a different provenance owns it."""
        prior = self.provenance.get(name)
        if prior is None:
            if name in self.ts.nodes:
                raise GeneratedNameCollision(
                    f"generated name {name!r} already interned by non-generated node")
            self.provenance[name] = provenance
        elif prior != provenance:
            raise GeneratedNameCollision(
                f"hash collision on {name!r}: {prior!r} vs {provenance!r}")

    def copy(self) -> "Workspace":
        return Workspace(
            ts=self.ts.copy(),
            tags=dict(self.tags),
            relations={k: list(v) for k, v in self.relations.items()},
            provenance=dict(self.provenance),
            instances={k: set(v) for k, v in self.instances.items()},
            mapping_instances=dict(self.mapping_instances),
        )


def init_workspace() -> Workspace:
    ws = Workspace()
    ws.ts.intern_node(ABSTRACTION)
    ws.ts.intern_node(IS_ABS)
    return ws
