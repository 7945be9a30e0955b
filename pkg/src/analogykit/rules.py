"""Declarative update rules over triplet structures.

A rule is a pattern of variable and constant nodes with a set of required fact
templates, plus a green add-set: nodes to create and facts to insert once the
pattern matches.  Consistency rules are the same thing with an empty add-set;
a match of one means the last modification must be undone.

Rule files are plain text, one directive per line::

    # comment
    rule successor_ab
    var v1 v2 vf1 vf2
    const Letter:a Letter:b Predecessor Successor
    sym (v1 vf1) <-> (v2 vf2)
    distinct v1 v2
    require (vf1 v1 Letter:a)
    require (vf2 v2 Letter:b)
    create nf3
    add (nf3 v1 Predecessor)
    add (nf3 v2 Successor)

Rules end at a blank line or the next `rule` header.  A `consistency` flag on
the header marks a consistency rule.  `sym` declares variable tuples that can
be swapped without changing the rule's meaning; matching uses them to
canonicalize assignments.  `distinct` lists variables that must bind to
pairwise different nodes (plain matching allows repeats).

Nodes created by an application are named by a stable hash of the rule name,
the canonicalized assignment, and the created label, so the same application
yields the same names in any branch of a search.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .structure import Mark, NodeId, TripletFact, TripletStructure
from .workspace import Workspace

Template = tuple[str, str, str]


class RuleError(Exception):
    pass


class RuleParseError(RuleError):
    def __init__(self, msg: str, line: int, col: int = 1):
        super().__init__(f"line {line}, col {col}: {msg}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Rule:
    name: str
    variables: tuple[str, ...]
    constants: tuple[str, ...]
    requires: tuple[Template, ...]
    creates: tuple[str, ...] = ()
    adds: tuple[Template, ...] = ()
    symmetries: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...] = ()
    distinct: tuple[tuple[str, ...], ...] = ()
    is_consistency: bool = False

    def __post_init__(self):
        vs, cs, ns = set(self.variables), set(self.constants), set(self.creates)
        if vs & cs or vs & ns or cs & ns:
            raise RuleError(f"rule {self.name}: overlapping var/const/create names")
        for tpl in self.requires:
            for term in tpl:
                if term not in vs and term not in cs:
                    raise RuleError(
                        f"rule {self.name}: require references undeclared {term!r}")
        for tpl in self.adds:
            for term in tpl:
                if term not in vs and term not in cs and term not in ns:
                    raise RuleError(
                        f"rule {self.name}: add references undeclared {term!r}")
        if self.is_consistency and (self.creates or self.adds):
            raise RuleError(f"consistency rule {self.name} has an add-set")
        for a, b in self.symmetries:
            if len(a) != len(b):
                raise RuleError(f"rule {self.name}: unbalanced symmetry")
            for v in (*a, *b):
                if v not in vs:
                    raise RuleError(f"rule {self.name}: symmetry over non-variable {v!r}")
        for group in self.distinct:
            for v in group:
                if v not in vs:
                    raise RuleError(f"rule {self.name}: distinct over non-variable {v!r}")

    def is_var(self, term: str) -> bool:
        return term in self.variables


@dataclass(frozen=True, order=True)
class Assignment:
    """Total binding of a rule's variables, stored sorted for determinism."""

    binding: tuple[tuple[str, NodeId], ...]

    @classmethod
    def of(cls, mapping: dict[str, NodeId]) -> "Assignment":
        return cls(tuple(sorted(mapping.items())))

    def as_dict(self) -> dict[str, NodeId]:
        return dict(self.binding)

    def __getitem__(self, var: str) -> NodeId:
        for v, n in self.binding:
            if v == var:
                return n
        raise KeyError(var)


@dataclass(frozen=True)
class Delta:
    """What one rule application did: created nodes and newly inserted facts."""

    created_nodes: tuple[NodeId, ...]
    added_facts: tuple[TripletFact, ...]
    source: tuple[str, Assignment]


# -- parsing -----------------------------------------------------------------

_TUPLE_RE = re.compile(r"\(([^()]*)\)")


def parse_rules(text: str) -> list[Rule]:
    """Parse a rule file.  Raises RuleParseError with line/column on bad input."""
    rules: list[Rule] = []
    cur: dict | None = None

    def finish(lineno: int):
        nonlocal cur
        if cur is None:
            return
        try:
            rules.append(Rule(
                name=cur["name"],
                variables=tuple(cur["var"]),
                constants=tuple(cur["const"]),
                requires=tuple(cur["require"]),
                creates=tuple(cur["create"]),
                adds=tuple(cur["add"]),
                symmetries=tuple(cur["sym"]),
                distinct=tuple(cur["distinct"]),
                is_consistency=cur["consistency"],
            ))
        except RuleError as e:
            raise RuleParseError(str(e), lineno) from e
        cur = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            finish(lineno)
            continue
        parts = line.split()
        kw = parts[0]
        if kw == "rule":
            finish(lineno)
            if len(parts) < 2:
                raise RuleParseError("rule header needs a name", lineno)
            flags = parts[2:]
            for fl in flags:
                if fl != "consistency":
                    raise RuleParseError(f"unknown rule flag {fl!r}", lineno,
                                         raw.find(fl) + 1)
            cur = {"name": parts[1], "var": [], "const": [], "require": [],
                   "create": [], "add": [], "sym": [], "distinct": [],
                   "consistency": "consistency" in flags}
            continue
        if cur is None:
            raise RuleParseError(f"directive {kw!r} outside a rule", lineno)
        if kw in ("var", "const", "create"):
            cur[kw].extend(parts[1:])
        elif kw == "distinct":
            if len(parts) < 3:
                raise RuleParseError("distinct needs at least two variables", lineno)
            cur["distinct"].append(tuple(parts[1:]))
        elif kw in ("require", "add"):
            m = _TUPLE_RE.search(line)
            if not m:
                raise RuleParseError(f"{kw} expects a (f v k) tuple", lineno,
                                     len(kw) + 2)
            fields = m.group(1).split()
            if len(fields) != 3:
                raise RuleParseError(f"{kw} tuple must have 3 components", lineno,
                                     m.start() + 1)
            cur[kw].append(tuple(fields))
        elif kw == "sym":
            tuples = _TUPLE_RE.findall(line)
            if len(tuples) != 2 or "<->" not in line:
                raise RuleParseError("sym expects (v ...) <-> (v ...)", lineno)
            cur["sym"].append((tuple(tuples[0].split()), tuple(tuples[1].split())))
        else:
            raise RuleParseError(f"unknown directive {kw!r}", lineno)
    finish(len(text.splitlines()) + 1)
    return rules


# -- symmetry canonicalization -------------------------------------------------


def symmetry_permutations(rule: Rule) -> list[dict[str, str]]:
    """The permutation group generated by the rule's symmetry declarations."""
    idmap = {v: v for v in rule.variables}
    if not rule.symmetries:
        return [idmap]
    gens = []
    for a, b in rule.symmetries:
        g = dict(idmap)
        for x, y in zip(a, b):
            g[x], g[y] = y, x
        gens.append(g)
    group = {tuple(sorted(idmap.items())): idmap}
    frontier = [idmap]
    while frontier:
        nxt = []
        for p in frontier:
            for g in gens:
                q = {v: g[p[v]] for v in rule.variables}
                key = tuple(sorted(q.items()))
                if key not in group:
                    group[key] = q
                    nxt.append(q)
        frontier = nxt
    return [group[k] for k in sorted(group)]


def canonicalize_assignment(rule: Rule, assignment: Assignment) -> Assignment:
    """Lexicographically least member of the assignment's symmetry orbit."""
    if not rule.symmetries:
        return assignment
    b = assignment.as_dict()
    best = None
    for perm in symmetry_permutations(rule):
        cand = tuple(sorted((v, b[perm[v]]) for v in rule.variables))
        if best is None or cand < best:
            best = cand
    return Assignment(best)


# -- matching -----------------------------------------------------------------


def _project_candidates(ts: TripletStructure, rule: Rule, tpl: Template,
                        var: str, binding: dict[str, NodeId]) -> set[NodeId] | None:
    """Nodes that could fill `var` in `tpl` given the partial binding, or None
    if the template does not mention the variable."""
    if var not in tpl:
        return None
    pattern = []
    for term in tpl:
        if term == var or (rule.is_var(term) and term not in binding):
            pattern.append(None)
        elif rule.is_var(term):
            pattern.append(binding[term])
        else:
            pattern.append(term)
    result: set[NodeId] | None = None
    bucket = ts.query(tuple(pattern))
    for slot in range(3):
        if tpl[slot] == var:
            found = {fact[slot] for fact in bucket}
            result = found if result is None else result & found
    return result


def _distinct_ok(rule: Rule, binding: dict[str, NodeId]) -> bool:
    for group in rule.distinct:
        seen: dict[NodeId, str] = {}
        for v in group:
            if v in binding:
                if binding[v] in seen:
                    return False
                seen[binding[v]] = v
    return True


def find_assignments(ts: TripletStructure, rule: Rule,
                     seed: dict[str, NodeId] | None = None) -> list[Assignment]:
    """Every total binding whose substituted required facts all exist.

    Backtracking search; at each step the unbound variable with the fewest
    candidates (computed by hole-pattern projection) is bound first.  Returned
    sorted by binding, so iteration order is deterministic.  Matching is not
    injective: two variables may bind the same node unless a `distinct` group
    forbids it.
    """
    for c in rule.constants:
        if c not in ts.nodes:
            return []
    binding: dict[str, NodeId] = dict(seed) if seed else {}
    if not _distinct_ok(rule, binding):
        return []
    results: list[Assignment] = []
    all_nodes = None

    def satisfied(tpl: Template) -> bool:
        """False only when the template is fully bound and its fact is absent."""
        trip = []
        for term in tpl:
            if rule.is_var(term):
                if term not in binding:
                    return True  # not fully bound yet; can't falsify
                trip.append(binding[term])
            else:
                trip.append(term)
        return TripletFact(*trip) in ts.facts

    def step():
        nonlocal all_nodes
        unbound = [v for v in rule.variables if v not in binding]
        if not unbound:
            results.append(Assignment.of(binding))
            return
        # pick the variable with the smallest candidate set
        best_var, best_cands = None, None
        for v in unbound:
            cands: set[NodeId] | None = None
            for tpl in rule.requires:
                got = _project_candidates(ts, rule, tpl, v, binding)
                if got is None:
                    continue
                cands = got if cands is None else cands & got
                if not cands:
                    break
            if cands is None:
                if all_nodes is None:
                    all_nodes = sorted(ts.nodes)
                cands = all_nodes
            if best_cands is None or len(cands) < len(best_cands):
                best_var, best_cands = v, cands
                if not best_cands:
                    return
        for node in sorted(best_cands):
            binding[best_var] = node
            if _distinct_ok(rule, binding) and all(
                    satisfied(t) for t in rule.requires if best_var in t):
                step()
            del binding[best_var]

    if all(satisfied(t) for t in rule.requires):
        step()
    return sorted(set(results))


def _unify_template(rule: Rule, tpl: Template, fact: TripletFact) -> dict[str, NodeId] | None:
    """Bind tpl's variables so it substitutes to exactly `fact`, or None."""
    binding: dict[str, NodeId] = {}
    for term, node in zip(tpl, fact):
        if rule.is_var(term):
            if binding.get(term, node) != node:
                return None
            binding[term] = node
        elif term != node:
            return None
    return binding


def find_assignments_differential(ts: TripletStructure, rule: Rule,
                                  since: Mark) -> list[Assignment]:
    """Assignments that use at least one fact added since the mark.

    New matches must touch new facts, so each added fact is unified against
    each required template and the partial binding extended by ordinary search.
    Assignments invalidated by removed facts never appear (their facts are gone).
    """
    added, _removed = ts.delta_since(since)
    out: set[Assignment] = set()
    for fact in sorted(added):
        for tpl in rule.requires:
            binding = _unify_template(rule, tpl, fact)
            if binding is None:
                continue
            out.update(find_assignments(ts, rule, seed=binding))
    return sorted(out)


# -- application ----------------------------------------------------------------


def generated_name(rule_name: str, canonical: Assignment, label: str) -> tuple[str, str]:
    """(name, provenance) for a node created by (rule, assignment, label)."""
    prov = "|".join([rule_name,
                     ",".join(f"{v}={n}" for v, n in canonical.binding),
                     label])
    digest = hashlib.blake2b(prov.encode("utf-8"), digest_size=8).hexdigest()
    return f"gen:{digest}", prov


def _combine_tags(ws: Workspace, nodes: Iterable[NodeId]) -> tuple[str | None, str | None]:
    insts = {ws.instance_of(n) for n in nodes} - {None}
    sides = {ws.side_of(n) for n in nodes} - {None}
    inst = insts.pop() if len(insts) == 1 else None
    side = sides.pop() if len(sides) == 1 else None
    return inst, side


def apply_rule(ws: Workspace, rule: Rule, assignment: Assignment) -> Delta:
    """Apply a matched rule: intern its green nodes and insert its green facts.

    Created nodes are named from the canonicalized assignment, so orbit-
    equivalent assignments (and re-application after a backtrack) produce
    identical names; a second application is a structural no-op.
    """
    if rule.is_consistency:
        raise RuleError(f"cannot apply consistency rule {rule.name}")
    canon = canonicalize_assignment(rule, assignment)
    binding = canon.as_dict()
    if set(binding) != set(rule.variables):
        raise RuleError(f"assignment does not cover all variables of {rule.name}")
    ts = ws.ts

    def subst(term: str, created: dict[str, NodeId]) -> NodeId:
        if term in created:
            return created[term]
        if rule.is_var(term):
            return binding[term]
        return term

    for tpl in rule.requires:
        trip = TripletFact(*(subst(t, {}) for t in tpl))
        if trip not in ts.facts:
            raise RuleError(f"invalid assignment for {rule.name}: missing {trip}")

    created: dict[str, NodeId] = {}
    created_new: list[NodeId] = []
    for label in rule.creates:
        name, prov = generated_name(rule.name, canon, label)
        ws.claim_generated(name, prov)
        if name not in ts.nodes:
            created_new.append(name)
        ts.intern_node(name)
        created[label] = name
    if created_new:
        inst, side = _combine_tags(ws, binding.values())
        for name in created_new:
            ws.set_tag(name, inst, side)

    added: list[TripletFact] = []
    for tpl in rule.adds:
        trip = tuple(subst(t, created) for t in tpl)
        if TripletFact(*trip) not in ts.facts:
            added.append(ts.add_fact(*trip))
    return Delta(tuple(created_new), tuple(added), (rule.name, canon))


def check_consistency(ws: Workspace, rules: Sequence[Rule],
                      since: Mark | None = None) -> list[tuple[Rule, Assignment]]:
    """Current matches of the consistency rules; empty means consistent.

    With a mark, only matches using facts added since it are searched, which is
    what a search loop wants right after applying one rule.
    """
    out: list[tuple[Rule, Assignment]] = []
    for rule in rules:
        if since is None:
            found = find_assignments(ws.ts, rule)
        else:
            found = find_assignments_differential(ws.ts, rule, since)
        out.extend((rule, a) for a in found)
    out.sort(key=lambda ra: (ra[0].name, ra[1]))
    return out


def make_rule(name: str, *, var: Sequence[str] = (), const: Sequence[str] = (),
              require: Sequence[Template] = (), create: Sequence[str] = (),
              add: Sequence[Template] = (),
              sym: Sequence[tuple[tuple[str, ...], tuple[str, ...]]] = (),
              distinct: Sequence[tuple[str, ...]] = (),
              consistency: bool = False) -> Rule:
    """Programmatic rule constructor with the same validation as the parser."""
    return Rule(name=name, variables=tuple(var), constants=tuple(const),
                requires=tuple(tuple(t) for t in require), creates=tuple(create),
                adds=tuple(tuple(t) for t in add),
                symmetries=tuple((tuple(a), tuple(b)) for a, b in sym),
                distinct=tuple(tuple(d) for d in distinct),
                is_consistency=consistency)
