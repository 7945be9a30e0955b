"""In-memory triplet workspace: nodes, ordered fact triples, 8-way hole index, undo log.

A structure is a pair (S, F): a set of named nodes and a set of ordered triples
(fact, value, key) over those nodes.  Every triple is indexed under all eight
patterns obtained by replacing a subset of its slots with holes, so pattern
queries are a single bucket lookup.  All mutations go through an undo log, which
gives exact rollback to any mark and cheap computation of add/remove deltas.
"""
from __future__ import annotations

from typing import Iterable, NamedTuple

NodeId = str


class TripletFact(NamedTuple):
    """One ordered triple.  `fact` reifies the assertion that `value` fills `key`."""

    fact: NodeId
    value: NodeId
    key: NodeId


# A pattern is a triple whose slots are either a concrete NodeId or None (a hole).
HolePattern = "tuple[NodeId | None, NodeId | None, NodeId | None]"


class StructureError(Exception):
    """Misuse of a structure: unknown nodes, absent facts, stale marks, bad names."""


class Mark(NamedTuple):
    """Opaque handle into the undo log.  Valid until rolled back through."""

    position: int
    serial: int


def hole_patterns(fact: TripletFact) -> list[tuple]:
    """All 8 index keys of a fact (each subset of slots replaced by holes)."""
    f, v, k = fact
    out = []
    for bits in range(8):
        out.append((
            f if bits & 1 else None,
            v if bits & 2 else None,
            k if bits & 4 else None,
        ))
    return out


def matches(fact: TripletFact, pattern) -> bool:
    return all(p is None or p == s for p, s in zip(pattern, fact))


class TripletStructure:
    """Mutable (S, F) with constant-time pattern lookup and exact rollback.

    Single-writer: never mutate one instance from two threads.  Instances may be
    copied and the copies used independently.
    """

    def __init__(self) -> None:
        self.nodes: set[NodeId] = set()
        self.facts: set[TripletFact] = set()
        self._index: dict[tuple, set[TripletFact]] = {}
        self._log: list[tuple[str, object]] = []
        self._marks: list[Mark] = []
        self._mark_serial = 0

    # -- nodes ------------------------------------------------------------

    def intern_node(self, name: str) -> NodeId:
        """Ensure a node with this name exists and return it.  Idempotent."""
        if not name or any(c.isspace() for c in name):
            raise StructureError(f"bad node name: {name!r}")
        if name not in self.nodes:
            self.nodes.add(name)
            self._log.append(("node", name))
        return name

    def has_node(self, name: str) -> bool:
        return name in self.nodes

    # -- facts ------------------------------------------------------------

    def add_fact(self, f: NodeId, v: NodeId, k: NodeId) -> TripletFact:
        """Insert (f, v, k).  Duplicate inserts are silent no-ops (F is a set)."""
        for n in (f, v, k):
            if n not in self.nodes:
                raise StructureError(f"fact references un-interned node {n!r}")
        fact = TripletFact(f, v, k)
        if fact in self.facts:
            return fact
        self.facts.add(fact)
        for pat in hole_patterns(fact):
            self._index.setdefault(pat, set()).add(fact)
        self._log.append(("add", fact))
        return fact

    def remove_fact(self, fact: TripletFact) -> None:
        """Remove a fact that is present; removing an absent fact is a caller bug."""
        fact = TripletFact(*fact)
        if fact not in self.facts:
            raise StructureError(f"remove of absent fact {fact}")
        self._unindex(fact)
        self._log.append(("remove", fact))

    def _unindex(self, fact: TripletFact) -> None:
        self.facts.discard(fact)
        for pat in hole_patterns(fact):
            bucket = self._index.get(pat)
            if bucket is not None:
                bucket.discard(fact)
                if not bucket:
                    del self._index[pat]

    def has_fact(self, f: NodeId, v: NodeId, k: NodeId) -> bool:
        return TripletFact(f, v, k) in self.facts

    # -- queries ----------------------------------------------------------

    def query(self, pattern) -> set[TripletFact]:
        """All facts matching a hole pattern.  One bucket lookup plus a copy."""
        return set(self._index.get(tuple(pattern), ()))

    def solve_single_var(
        self, constraints: Iterable[tuple[tuple, int]]
    ) -> set[NodeId]:
        """Solve existential constraints sharing one variable by intersection.

        Each constraint is (pattern, slot): the pattern has a hole at `slot`
        where the shared variable sits (other holes are don't-cares).  Returns
        every node that can fill the variable in all constraints at once.  An
        empty constraint list returns all nodes (intersection of nothing).
        """
        result: set[NodeId] | None = None
        for pattern, slot in constraints:
            pattern = tuple(pattern)
            if pattern[slot] is not None:
                raise StructureError(f"variable slot {slot} of {pattern} is not a hole")
            found = {fact[slot] for fact in self._index.get(pattern, ())}
            result = found if result is None else (result & found)
            if not result:
                return set()
        return set(self.nodes) if result is None else result

    # -- marks, rollback, deltas -------------------------------------------

    def mark(self) -> Mark:
        self._mark_serial += 1
        m = Mark(len(self._log), self._mark_serial)
        self._marks.append(m)
        return m

    def _check_mark(self, m: Mark) -> None:
        if m not in self._marks:
            raise StructureError(f"stale mark {m}")

    def rollback(self, m: Mark) -> None:
        """Undo every mutation after `m` and pop the mark stack through `m`."""
        self._check_mark(m)
        while len(self._log) > m.position:
            kind, payload = self._log.pop()
            if kind == "add":
                self._unindex(payload)  # type: ignore[arg-type]
            elif kind == "remove":
                fact = payload
                self.facts.add(fact)  # type: ignore[arg-type]
                for pat in hole_patterns(fact):  # type: ignore[arg-type]
                    self._index.setdefault(pat, set()).add(fact)  # type: ignore[arg-type]
            else:  # node
                self.nodes.discard(payload)  # type: ignore[arg-type]
        while self._marks and self._marks[-1].position >= m.position:
            dropped = self._marks.pop()
            if dropped == m:
                break

    def delta_since(self, m: Mark) -> tuple[frozenset[TripletFact], frozenset[TripletFact]]:
        """Net (added, removed) facts since the mark."""
        self._check_mark(m)
        net: dict[TripletFact, int] = {}
        for kind, payload in self._log[m.position:]:
            if kind == "add":
                net[payload] = net.get(payload, 0) + 1  # type: ignore[index]
            elif kind == "remove":
                net[payload] = net.get(payload, 0) - 1  # type: ignore[index]
        added = frozenset(f for f, n in net.items() if n > 0)
        removed = frozenset(f for f, n in net.items() if n < 0)
        return added, removed

    # -- whole-structure helpers --------------------------------------------

    def state(self) -> tuple[frozenset[NodeId], frozenset[TripletFact]]:
        """Immutable snapshot of (S, F) for equality checks."""
        return frozenset(self.nodes), frozenset(self.facts)

    def copy(self) -> "TripletStructure":
        """Fresh structure with the same (S, F) and an empty history."""
        out = TripletStructure()
        out.nodes = set(self.nodes)
        out.facts = set(self.facts)
        out._index = {pat: set(bucket) for pat, bucket in self._index.items()}
        return out

    def __len__(self) -> int:
        return len(self.facts)


# -- flat-file serialization ----------------------------------------------

_HEADER = "# triplet-structure v1"


def dumps_structure(ts: TripletStructure) -> str:
    """Line-oriented text form.  Sorted, so dump -> load -> dump is a fixpoint."""
    lines = [_HEADER]
    for name in sorted(ts.nodes):
        lines.append(f"node {name}")
    for fact in sorted(ts.facts):
        lines.append(f"fact {fact.fact} {fact.value} {fact.key}")
    return "\n".join(lines) + "\n"


def loads_structure(text: str) -> TripletStructure:
    ts = TripletStructure()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "node" and len(parts) == 2:
            ts.intern_node(parts[1])
        elif parts[0] == "fact" and len(parts) == 4:
            f, v, k = parts[1:]
            for n in (f, v, k):
                if n not in ts.nodes:
                    raise StructureError(f"line {lineno}: fact references unknown node {n!r}")
            ts.add_fact(f, v, k)
        else:
            raise StructureError(f"line {lineno}: cannot parse {raw!r}")
    return ts
