"""Independent oracles the property tests compare the engine against.

Everything here deliberately avoids the production code paths: the index is
rebuilt by brute force, queries are linear scans, and rule matching is plain
enumeration over node tuples.
"""
from __future__ import annotations

import itertools
import random

from analogykit.rules import Assignment, Rule
from analogykit.structure import TripletFact, TripletStructure, hole_patterns


def rebuild_index(ts: TripletStructure) -> dict:
    index: dict = {}
    for fact in ts.facts:
        for pat in hole_patterns(fact):
            index.setdefault(pat, set()).add(fact)
    return index


def linear_scan_query(ts: TripletStructure, pattern) -> set[TripletFact]:
    out = set()
    for fact in ts.facts:
        if all(p is None or p == s for p, s in zip(pattern, fact)):
            out.add(fact)
    return out


def brute_force_assignments(ts: TripletStructure, rule: Rule) -> list[Assignment]:
    """Enumerate bindings variable by variable, checking templates as soon as
    they are fully bound.  No index, no candidate projection."""
    variables = list(rule.variables)
    nodes = sorted(ts.nodes)
    results = []

    def ok_distinct(binding):
        for group in rule.distinct:
            vals = [binding[v] for v in group if v in binding]
            if len(vals) != len(set(vals)):
                return False
        return True

    def check(binding, bound_upto):
        bound = set(variables[:bound_upto])
        for tpl in rule.requires:
            tvars = [t for t in tpl if t in rule.variables]
            if not all(t in bound for t in tvars):
                continue
            trip = tuple(binding[t] if t in rule.variables else t for t in tpl)
            if TripletFact(*trip) not in ts.facts:
                return False
        return True

    def recurse(i, binding):
        if i == len(variables):
            results.append(Assignment.of(binding))
            return
        for node in nodes:
            binding[variables[i]] = node
            if ok_distinct(binding) and check(binding, i + 1):
                recurse(i + 1, binding)
            del binding[variables[i]]

    if all(c in ts.nodes for c in rule.constants) and check({}, 0):
        recurse(0, {})
    return sorted(set(results))


def brute_force_orbit(rule: Rule, assignment: Assignment) -> set[Assignment]:
    """Orbit of an assignment under every composition of declared swaps."""
    from analogykit.rules import symmetry_permutations

    b = assignment.as_dict()
    orbit = set()
    for perm in symmetry_permutations(rule):
        orbit.add(Assignment.of({v: b[perm[v]] for v in rule.variables}))
    return orbit


def random_structure(rng: random.Random, max_nodes: int = 30,
                     max_facts: int = 40) -> TripletStructure:
    ts = TripletStructure()
    n = rng.randint(3, max_nodes)
    names = [f"n{i}" for i in range(n)]
    for name in names:
        ts.intern_node(name)
    for _ in range(rng.randint(0, max_facts)):
        ts.add_fact(rng.choice(names), rng.choice(names), rng.choice(names))
    return ts


def random_rule(rng: random.Random, ts: TripletStructure, max_vars: int = 4) -> Rule:
    """A random rule whose constants exist and whose templates are loosely
    anchored in the structure, so matches are plausible."""
    nodes = sorted(ts.nodes)
    n_vars = rng.randint(1, max_vars)
    variables = [f"v{i}" for i in range(n_vars)]
    n_templates = rng.randint(1, 3)
    requires = []
    consts = set()
    facts = sorted(ts.facts)
    for _ in range(n_templates):
        tpl = []
        base = rng.choice(facts) if facts and rng.random() < 0.8 else None
        for slot in range(3):
            r = rng.random()
            if r < 0.55:
                tpl.append(rng.choice(variables))
            else:
                node = base[slot] if base is not None else rng.choice(nodes)
                tpl.append(node)
                consts.add(node)
        requires.append(tuple(tpl))
    distinct = ()
    if n_vars >= 2 and rng.random() < 0.3:
        distinct = (tuple(rng.sample(variables, 2)),)
    return Rule(name=f"r{rng.randint(0, 10**6)}", variables=tuple(variables),
                constants=tuple(sorted(consts)), requires=tuple(requires),
                distinct=distinct)
