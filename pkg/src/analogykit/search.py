"""Search over update-rule applications.

The search grows one abstraction to maximal score within an application budget:

  1. notation rules run to fixpoint (successor/same-symbol inference),
  2. candidate `begin` applications are ranked by how much structure the two
     seed nodes share, the best few are each explored by a greedy closure of
     follow/map_fact/lift_fact applications, and the best-scoring branch is
     replayed (commutative node names make replay reproduce it exactly),
  3. consistency rules are checked differentially after every application and
     a violating application is rolled back and recorded as backtracked.

Instances join an existing abstraction through a separate fitting pass: a
branch-and-bound matcher assigns abstract nodes to the instance's concrete
nodes to maximize the number of satisfied abstract triples, and the winning
assignment is materialized with extend_into applications.  `complete` wires
the whole pipeline: encode, search, fit the prompt, lower the missing side,
and read off the constructed tokens.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from . import abstracter
from .abstracter import (
    AbstractionView, ScoreReport, abstraction_view, alpha_side, completion_check,
    coverage_of, extract_completion, lower_instance, materialize_tokens,
    register_instance, score,
)
from .encoders import (
    DEFAULT_ALPHABET, encode_pair, gen_letter_exclusivity_rules,
    gen_same_letter_rules, gen_same_token_rules, gen_successor_rules,
    ingest_annotations, lex_source, token_of_platonic,
)
from .rules import (
    Assignment, Rule, apply_rule, canonicalize_assignment, check_consistency,
    find_assignments, find_assignments_differential,
)
from .structure import NodeId, TripletFact
from .workspace import Workspace

BEGIN_RULES = {"begin", "type_slip"}
CLOSURE_RULES = {"follow", "map_fact", "lift_fact"}
DRIVER_RULES = {"extend_into", "extend_into_slip", "complete_node",
                "complete_fact", "complete_value", "complete_triple",
                "complete_node_slip", "complete_fact_slip",
                "complete_value_slip", "complete_triple_slip"}
ABSTRACTION_RULES = BEGIN_RULES | CLOSURE_RULES | DRIVER_RULES

# Tie-break priority: later stages are cheaper refinements and go first.
RULE_PRIORITY = {"begin": 0, "type_slip": 0, "follow": 1, "map_fact": 2,
                 "lift_fact": 3, "extend_into": 4, "extend_into_slip": 4,
                 "complete_node": 5}

# Gain estimates per rule family (abstract facts weigh most; notation barely).
RULE_GAIN = {"begin": 1.0, "type_slip": 1.0, "follow": 0.8, "map_fact": 1.0,
             "lift_fact": 0.6}


@dataclass
class SearchConfig:
    budget: int = 500
    locality_radius: int = 2
    weights: dict[str, float] | None = None
    seed: int = 0  # accepted for reproducibility bookkeeping; no random choices exist
    phase_reuse: bool = True
    begin_width: int = 6
    enable_slips: bool = False
    parallel: int = 0
    alphabet: str = DEFAULT_ALPHABET
    coverage_threshold: float = 0.5
    participants: list[str] | None = None


@dataclass
class TraceEntry:
    rule: str
    assignment: dict[str, NodeId]
    accepted: bool
    score_after: float

    def as_json(self) -> str:
        return json.dumps({"rule": self.rule, "assignment": self.assignment,
                           "accepted": self.accepted,
                           "score_after": self.score_after}, sort_keys=True)


def trace_to_jsonl(trace: list[TraceEntry]) -> str:
    return "\n".join(t.as_json() for t in trace) + ("\n" if trace else "")


class Budget:
    def __init__(self, limit: int):
        self.limit = limit
        self.spent = 0

    def try_spend(self) -> bool:
        if self.spent >= self.limit:
            return False
        self.spent += 1
        return True

    @property
    def remaining(self) -> int:
        return self.limit - self.spent


@dataclass
class SearchResult:
    report: ScoreReport
    trace: list[TraceEntry]
    applications: int
    best_key: tuple = ()


# -- small helpers -----------------------------------------------------------------


def _evidence(ws: Workspace, a: NodeId, b: NodeId) -> int:
    ka = {f.key for f in ws.ts.query((None, a, None))}
    kb = {f.key for f in ws.ts.query((None, b, None))}
    return len(ka & kb)


def _net_new(ws: Workspace, rule: Rule, asg: Assignment) -> int:
    """How many facts this application would actually insert."""
    from .rules import generated_name
    canon = canonicalize_assignment(rule, asg)
    binding = canon.as_dict()
    created = {}
    for label in rule.creates:
        created[label], _ = generated_name(rule.name, canon, label)
    new = 0
    for tpl in rule.adds:
        trip = tuple(created.get(t) or binding.get(t, t) for t in tpl)
        if TripletFact(*trip) not in ws.ts.facts:
            new += 1
    return new


def _valid(ws: Workspace, rule: Rule, asg: Assignment) -> bool:
    binding = asg.as_dict()
    for tpl in rule.requires:
        trip = tuple(binding.get(t, t) for t in tpl)
        if TripletFact(*trip) not in ws.ts.facts:
            return False
    return True


def _ball(ws: Workspace, seeds: set[NodeId], radius: int) -> set[NodeId]:
    """Nodes within `radius` co-occurrence steps of the seeds."""
    ts = ws.ts
    seen = set(seeds)
    frontier = set(seeds)
    for _ in range(radius):
        nxt = set()
        for node in frontier:
            for pat in ((node, None, None), (None, node, None), (None, None, node)):
                for f in ts.query(pat):
                    nxt.update(f)
        nxt -= seen
        if not nxt:
            break
        seen |= nxt
        frontier = nxt
    return seen


def _tags_compatible(ws: Workspace, binding: dict[str, NodeId]) -> bool:
    """Bound nodes must share one instance (shared nodes fit anywhere)."""
    insts = {ws.instance_of(n) for n in binding.values()} - {None}
    return len(insts) <= 1


def _key(rule: Rule, asg: Assignment) -> tuple:
    return (rule.name, canonicalize_assignment(rule, asg).binding)


# -- search proper -----------------------------------------------------------------


class _Searcher:
    def __init__(self, ws: Workspace, rules: list[Rule], consistency: list[Rule],
                 config: SearchConfig):
        self.ws = ws
        self.config = config
        self.consistency = list(consistency)
        self.notation = [r for r in rules
                         if not r.is_consistency and r.name not in ABSTRACTION_RULES]
        self.begin_rules = [r for r in rules if r.name in BEGIN_RULES]
        self.closure_rules = [r for r in rules if r.name in CLOSURE_RULES]
        self.budget = Budget(config.budget)
        self.trace: list[TraceEntry] = []
        self.participants = config.participants
        self._score_cache: float | None = None

    # -- bookkeeping

    def _score_after(self, touched_abstraction: bool) -> float:
        if self._score_cache is None or touched_abstraction:
            self._score_cache = score(self.ws, self.config.weights).weighted_score
        return self._score_cache

    def _apply(self, rule: Rule, asg: Assignment, register: bool = True):
        """Budgeted apply + differential consistency check; rolls back violations.

        Returns None when the budget is exhausted (nothing applied), otherwise
        (delta-or-None, accepted) where accepted False means a consistency rule
        matched and the application was rolled back."""
        if not self.budget.try_spend():
            return None
        ts = self.ws.ts
        mark = ts.mark()
        delta = apply_rule(self.ws, rule, asg)
        violations = check_consistency(self.ws, self.consistency, since=mark)
        accepted = not violations
        if violations:
            ts.rollback(mark)
        elif register and rule.name in BEGIN_RULES:
            self._register_begin(rule, delta)
        touched = rule.name in ABSTRACTION_RULES
        self.trace.append(TraceEntry(rule.name, asg.as_dict(), accepted,
                                     self._score_after(touched)))
        return (delta if accepted else None), accepted

    def _register_begin(self, rule: Rule, delta):
        created = dict(zip(rule.creates, delta.created_nodes)) \
            if len(delta.created_nodes) == len(rule.creates) else {}
        binding = delta.source[1].as_dict()
        for map_label, conc_label in (("map_a", "a"), ("map_b", "b")):
            m = created.get(map_label)
            if m is not None:
                tag = self.ws.instance_of(binding[conc_label])
                if tag is not None:
                    self.ws.mapping_instances[m] = tag

    def _unregister_rolled_back(self):
        live = self.ws.ts.nodes
        for m in [m for m in self.ws.mapping_instances if m not in live]:
            del self.ws.mapping_instances[m]

    # -- notation fixpoint

    def run_notation(self):
        pool: dict[tuple, tuple[Rule, Assignment]] = {}
        for rule in self.notation:
            for asg in find_assignments(self.ws.ts, rule):
                pool[_key(rule, asg)] = (rule, asg)
        while pool:
            progressed = False
            for key in sorted(pool):
                rule, asg = pool.pop(key)
                if not _valid(self.ws, rule, asg):
                    continue
                if not _tags_compatible(self.ws, asg.as_dict()):
                    continue
                if _net_new(self.ws, rule, asg) == 0:
                    continue
                mark_before = self.ws.ts.mark()
                delta, accepted = self._apply(rule, asg)
                if delta is None and not accepted and self.budget.remaining == 0:
                    return
                if accepted:
                    for r in self.notation:
                        for a in find_assignments_differential(self.ws.ts, r, mark_before):
                            k = _key(r, a)
                            if k != key:
                                pool.setdefault(k, (r, a))
                    progressed = True
                break
            else:
                return
            if not progressed:
                return

    # -- abstraction closure

    def _closure_ok(self, rule: Rule, binding: dict[str, NodeId],
                    ball: set[NodeId] | None) -> bool:
        ws = self.ws
        if ball is not None and self.config.locality_radius > 0:
            if any(n not in ball for n in binding.values()):
                return False
        pairs = [("a", "ma", "map_a"), ("b", "mb", "map_b")]
        for val, factv, mapv in pairs:
            if mapv not in binding:
                continue
            inst = ws.mapping_instances.get(binding[mapv])
            for node_var in (val, factv):
                tag = ws.instance_of(binding[node_var])
                if tag is not None and inst is not None and tag != inst:
                    return False
        if rule.name == "follow":
            for val, mapv in (("a", "map_a"), ("b", "map_b")):
                if ws.ts.query((binding[mapv], binding[val], None)):
                    return False  # concrete already mapped; functionality would fail
        if rule.name == "map_fact":
            for factv, mapv in (("ma", "map_a"), ("mb", "map_b")):
                if ws.ts.query((binding[mapv], binding[factv], None)):
                    return False
        return True

    def run_closure(self, base_mark) -> None:
        pool: dict[tuple, tuple[Rule, Assignment]] = {}
        blocked: set[tuple] = set()
        for rule in self.closure_rules:
            for asg in find_assignments_differential(self.ws.ts, rule, base_mark):
                pool.setdefault(_key(rule, asg), (rule, asg))
        ball: set[NodeId] | None = None
        while True:
            best = None
            stale = []
            for key in sorted(pool):
                if key in blocked:
                    continue
                rule, asg = pool[key]
                if not _valid(self.ws, rule, asg):
                    stale.append(key)
                    continue
                binding = asg.as_dict()
                if not self._closure_ok(rule, binding, ball):
                    continue
                new = _net_new(self.ws, rule, asg)
                if new == 0:
                    stale.append(key)
                    continue
                gain = RULE_GAIN.get(rule.name, 0.5)
                if rule.name in ("begin", "type_slip", "follow"):
                    gain += 0.05 * _evidence(self.ws, binding["a"], binding["b"])
                cand = (-gain, -RULE_PRIORITY.get(rule.name, 0), key)
                if best is None or cand < best[0]:
                    best = (cand, key, rule, asg)
            for key in stale:
                pool.pop(key, None)
            if best is None:
                return
            _, key, rule, asg = best
            mark_before = self.ws.ts.mark()
            delta, accepted = self._apply(rule, asg)
            if delta is None and not accepted and self.budget.remaining == 0:
                return
            pool.pop(key, None)
            if not accepted:
                blocked.add(key)
                continue
            if self.config.locality_radius > 0:
                seeds = set(delta.created_nodes)
                for f in delta.added_facts:
                    seeds.update(f)
                ball = _ball(self.ws, seeds, self.config.locality_radius)
            for r in self.closure_rules:
                for a in find_assignments_differential(self.ws.ts, r, mark_before):
                    pool.setdefault(_key(r, a), (r, a))

    # -- begin exploration

    def begin_candidates(self) -> list[tuple[int, tuple, Rule, Assignment]]:
        ws = self.ws
        participants = self.participants
        if participants is None:
            participants = sorted(ws.instances)
        out = {}
        for rule in self.begin_rules:
            for asg in find_assignments(ws.ts, rule):
                b = asg.as_dict()
                ta, tb = ws.instance_of(b["a"]), ws.instance_of(b["b"])
                if ta is None or tb is None or ta == tb:
                    continue
                if ta not in participants or tb not in participants:
                    continue
                if rule.name == "type_slip" and b["c1"] == b["c2"]:
                    continue
                key = _key(rule, asg)
                if key not in out:
                    out[key] = (-_evidence(ws, b["a"], b["b"]), key, rule, asg)
        return sorted(out.values())

    def explore(self, keep_structures: bool = False) -> list[dict]:
        """Evaluate the top begin candidates; return branch records sorted
        best-first.  The workspace is left at its pre-exploration state."""
        candidates = self.begin_candidates()[: self.config.begin_width]
        branches = []
        best_pairs: set[frozenset] = set()
        best_score = None
        for _, key, rule, asg in candidates:
            b = asg.as_dict()
            if frozenset((b["a"], b["b"])) in best_pairs:
                continue  # already correspondents in the best branch found
            if self.budget.remaining <= 1:
                break
            mark0 = self.ws.ts.mark()
            trace_start = len(self.trace)
            delta, accepted = self._apply(rule, asg)
            if not accepted:
                if delta is None and self.budget.remaining == 0:
                    break
                self.ws.ts.rollback(mark0)
                self._unregister_rolled_back()
                continue
            self.run_closure(mark0)
            report = score(self.ws, self.config.weights)
            segment = [(t.rule, t.assignment) for t in self.trace[trace_start:]
                       if t.accepted]
            record = {
                "key": key,
                "score": report.weighted_score,
                "report": report,
                "segment": segment,
                "pairs": self._correspondent_pairs(),
                "state": self.ws.ts.state(),
            }
            if keep_structures:
                record["workspace"] = self.ws.copy()
            branches.append(record)
            if best_score is None or report.weighted_score > best_score:
                best_score = report.weighted_score
                best_pairs = record["pairs"]
            self.ws.ts.rollback(mark0)
            self._unregister_rolled_back()
            self._score_cache = None
        branches.sort(key=lambda r: (-r["score"], r["key"]))
        return branches

    def _correspondent_pairs(self) -> set[frozenset]:
        view = abstraction_view(self.ws)
        pairs = set()
        by_alpha: dict[NodeId, list[NodeId]] = {}
        for m in view.mapping_facts:
            for conc, alpha in view.mapped[m].items():
                by_alpha.setdefault(alpha, []).append(conc)
        for alpha, concs in by_alpha.items():
            for i, c1 in enumerate(concs):
                for c2 in concs[i + 1:]:
                    pairs.add(frozenset((c1, c2)))
        return pairs

    def replay(self, segment: list[tuple[str, dict]], rules_by_name: dict[str, Rule]):
        for rule_name, binding in segment:
            if self.budget.remaining == 0:
                break
            rule = rules_by_name[rule_name]
            self._apply(rule, Assignment.of(binding))


def search(ws: Workspace, rules: list[Rule], consistency_rules: list[Rule],
           config: SearchConfig | None = None) -> SearchResult:
    """Grow the highest-scoring consistent abstraction within the budget.

    Deterministic for a fixed config: candidate pools, tie-breaks, and branch
    order are all sorted.  The workspace is left holding the best structure.
    """
    config = config or SearchConfig()
    s = _Searcher(ws, rules, consistency_rules, config)
    s.run_notation()
    branches = s.explore()
    if branches:
        best = branches[0]
        rules_by_name = {r.name: r for r in rules}
        s.replay(best["segment"], rules_by_name)
        if ws.ts.state() != best["state"]:
            raise RuntimeError("replay diverged from explored branch")
    report = score(ws, config.weights)
    return SearchResult(report=report, trace=s.trace, applications=s.budget.spent,
                        best_key=branches[0]["key"] if branches else ())


def rank_alternatives(ws: Workspace, rules: list[Rule], consistency_rules: list[Rule],
                      config: SearchConfig | None = None, k: int = 3
                      ) -> list[tuple[Workspace, ScoreReport]]:
    """Top-k distinct abstractions by score, on cloned workspaces.

    Duplicates (branches that converged to the same structure) collapse to one
    entry, keyed by the canonical set of accepted applications."""
    config = config or SearchConfig()
    s = _Searcher(ws, rules, consistency_rules, config)
    s.run_notation()
    branches = s.explore(keep_structures=True)
    out = []
    seen = set()
    for record in branches:
        trace_key = frozenset((r, tuple(sorted(b.items())))
                              for r, b in record["segment"])
        if trace_key in seen:
            continue
        seen.add(trace_key)
        out.append((record["workspace"], record["report"]))
        if len(out) == k:
            break
    return out


# -- fitting an instance into an existing abstraction --------------------------------


@dataclass
class Fit:
    assignment: dict[NodeId, NodeId]  # abstract node -> concrete node
    satisfied: list[tuple[TripletFact, NodeId, NodeId, NodeId]]
    score: int


def fit_instance(ws: Workspace, inst_tag: str, given_sides: set,
                 node_cap: int = 250_000) -> Fit:
    """Best assignment of abstract nodes to the instance's concrete nodes.

    Branch and bound, maximizing the number of abstract triples the assignment
    satisfies; injective per instance, deterministic (candidates and abstract
    nodes are visited in sorted order).  Only abstract nodes whose example side
    lies in `given_sides` (or is unsided, like shared documentation) are fit.
    """
    ts = ws.ts
    view = abstraction_view(ws)
    sides_ok = set(given_sides) | {None}

    def node_ok(n: NodeId) -> bool:
        inst = ws.instance_of(n)
        return (inst == inst_tag or inst is None) and ws.side_of(n) in sides_ok

    fit_alphas = [a for a in sorted(view.abstract_nodes)
                  if alpha_side(ws, view, a) in sides_ok]
    fit_set = set(fit_alphas)
    triples = [t for t in view.abstract_triples
               if t.fact in fit_set and t.value in fit_set
               and (t.key not in view.abstract_nodes or t.key in fit_set)]

    value_keys: dict[NodeId, set] = {}
    fact_keys: dict[NodeId, set] = {}
    for t in triples:
        value_keys.setdefault(t.value, set()).add(t.key)
        fact_keys.setdefault(t.fact, set()).add(t.key)

    fact_nodes = {f.fact for f in ts.facts}
    candidates: dict[NodeId, list[NodeId]] = {}
    for alpha in fit_alphas:
        found: dict[NodeId, int] = {}
        if alpha in view.key_alphas:
            for f in ts.facts:
                if node_ok(f.fact) and f.fact not in view.mapping_facts:
                    found[f.key] = found.get(f.key, 0) + 1
        elif alpha in view.fact_alphas:
            wanted = fact_keys.get(alpha, set())
            for g in fact_nodes:
                if not node_ok(g) or g in view.mapping_facts:
                    continue
                keys = {f.key for f in ts.query((g, None, None))}
                shared = sum(1 for k in wanted
                             if k in keys or k in view.abstract_nodes)
                if shared:
                    found[g] = shared
        else:
            wanted = value_keys.get(alpha, set())
            for f in ts.facts:
                n = f.value
                if n in found or not node_ok(n):
                    continue
                keys = {x.key for x in ts.query((None, n, None))}
                shared = sum(1 for k in wanted
                             if k in keys or k in view.abstract_nodes)
                if shared:
                    found[n] = shared
        candidates[alpha] = [n for n, _ in sorted(found.items(),
                                                  key=lambda kv: (-kv[1], kv[0]))]

    order = sorted(fit_alphas, key=lambda a: (len(candidates[a]), a))
    # triples become checkable once every abstract participant is assigned
    participants = []
    for t in triples:
        parts = {t.fact, t.value}
        if t.key in view.abstract_nodes:
            parts.add(t.key)
        participants.append((t, tuple(sorted(parts))))
    remaining_for: dict[NodeId, list[int]] = {a: [] for a in fit_alphas}
    for i, (_t, parts) in enumerate(participants):
        for a in parts:
            remaining_for[a].append(i)

    best = Fit(assignment={}, satisfied=[], score=-1)
    state = {"nodes": 0}
    assignment: dict[NodeId, NodeId] = {}
    used: set[NodeId] = set()
    undecided = [len(parts) for _t, parts in participants]
    sat: list[bool] = [False] * len(participants)

    def check(i: int) -> bool:
        t, _parts = participants[i]
        f_c = assignment.get(t.fact)
        v_c = assignment.get(t.value)
        k_c = assignment.get(t.key) if t.key in view.abstract_nodes else t.key
        if f_c is None or v_c is None or k_c is None:
            return False
        return TripletFact(f_c, v_c, k_c) in ts.facts

    def dfs(pos: int, satisfied: int, possible: int):
        nonlocal best
        state["nodes"] += 1
        if state["nodes"] > node_cap:
            return
        if satisfied + possible <= best.score:
            return
        if pos == len(order):
            if satisfied > best.score:
                got = [
                    (participants[i][0],
                     assignment[participants[i][0].fact],
                     assignment[participants[i][0].value],
                     assignment.get(participants[i][0].key, participants[i][0].key))
                    for i, ok in enumerate(sat) if ok]
                best = Fit(assignment=dict(assignment), satisfied=got,
                           score=satisfied)
            return
        alpha = order[pos]
        options = [n for n in candidates[alpha] if n not in used]
        for choice in options + [None]:
            gained = []
            lost_possible = 0
            if choice is None:
                for i in remaining_for[alpha]:
                    undecided[i] = -len(participants[i][1])  # dead
                    if undecided[i] is not None:
                        pass
                # a skipped alpha kills every triple it participates in
                dead = [i for i in remaining_for[alpha] if not sat[i]]
                lost_possible = len(dead)
                dfs(pos + 1, satisfied, possible - lost_possible)
                continue
            assignment[alpha] = choice
            used.add(choice)
            newly = 0
            failed = 0
            for i in remaining_for[alpha]:
                undecided[i] -= 1
                if undecided[i] == 0:
                    if check(i):
                        sat[i] = True
                        gained.append(i)
                        newly += 1
                    else:
                        failed += 1
            dfs(pos + 1, satisfied + newly, possible - failed)
            for i in gained:
                sat[i] = False
            for i in remaining_for[alpha]:
                undecided[i] += 1
            used.discard(choice)
            del assignment[alpha]

    dfs(0, 0, len(participants))
    return best


def materialize_fit(ws: Workspace, inst_label: str, fit: Fit,
                    budget: Budget | None = None,
                    trace: list[TraceEntry] | None = None) -> int:
    """Record a fit as extend_into applications on the instance's mapping fact."""
    view = abstraction_view(ws)
    inst_m = abstracter.instance_node(ws, inst_label)
    count = 0
    for t, f_c, v_c, k_c in sorted(fit.satisfied):
        slip = t.key in view.abstract_nodes
        if slip:
            rule = abstracter.rule_by_name("extend_into_slip")
            binding = {"b": v_c, "mb": f_c, "ctype": k_c, "alpha": t.value,
                       "alpha_c": t.key, "alpha_m": t.fact, "map_b": inst_m}
        else:
            rule = abstracter.rule_by_name("extend_into")
            binding = {"b": v_c, "mb": f_c, "c": t.key, "alpha": t.value,
                       "alpha_m": t.fact, "map_b": inst_m}
        if budget is not None and not budget.try_spend():
            break
        apply_rule(ws, rule, Assignment.of(binding))
        if trace is not None:
            trace.append(TraceEntry(rule.name, binding, True, float("nan")))
        count += 1
    return count


# -- the completion pipeline ----------------------------------------------------------


@dataclass
class CompletionResult:
    tokens: list[str] | None
    complete: bool
    missing: int
    report: ScoreReport
    prompt_fit_score: float
    weak: bool
    weak_reasons: list[str]
    trace: list[TraceEntry]
    applications: int
    workspace: Workspace

    @property
    def text(self) -> str:
        return "".join(self.tokens) if self.tokens is not None else ""


def standard_rules(ws: Workspace, kind: str, config: SearchConfig) -> tuple[list[Rule], list[Rule]]:
    """The notation + abstraction rule set and consistency set for a workspace."""
    rules: list[Rule] = []
    if kind == "letters":
        rules += gen_successor_rules(config.alphabet)
        rules += gen_same_letter_rules(config.alphabet)
        consistency = gen_letter_exclusivity_rules(config.alphabet)
    else:
        rules += gen_same_token_rules(ws)
        consistency = []
    rules += [r for r in abstracter.builtin_rules()
              if config.enable_slips or r.name != "type_slip"]
    consistency += abstracter.mapping_consistency_rules()
    return rules, consistency


def complete(examples: list[tuple], prompt, config: SearchConfig | None = None,
             kind: str = "letters", docs_pair: tuple[str, str] | None = None,
             annotations: list | None = None) -> CompletionResult:
    """Encode example pairs and a prompt, build the abstraction over the
    examples, fit the prompt into it, construct the prompt's missing side, and
    read off the completion tokens."""
    if not examples:
        raise ValueError("need at least one example pair")
    if not prompt:
        raise ValueError("prompt must be nonempty")
    config = config or SearchConfig()
    ws = init_pipeline_workspace(examples, prompt, kind, config,
                                 docs_pair=docs_pair, annotations=annotations)
    example_tags = [f"ex{i}" for i in range(1, len(examples) + 1)]
    rules, consistency = standard_rules(ws, kind, config)
    cfg = replace(config, participants=example_tags)
    result = search(ws, rules, consistency, cfg)
    return complete_prompt(ws, result, config, kind)


def init_pipeline_workspace(examples, prompt, kind, config,
                            docs_pair=None, annotations=None) -> Workspace:
    from .workspace import init_workspace

    ws = init_workspace()
    for i, (before, after) in enumerate(examples, 1):
        encode_pair(ws, before, after, f"ex{i}", kind=kind, alphabet=config.alphabet)
    encode_pair(ws, prompt, None, "prompt", kind=kind, alphabet=config.alphabet)
    if docs_pair is not None:
        lex_source(ws, docs_pair[0], "docs.before", side="doc")
        lex_source(ws, docs_pair[1], "docs.after", side="doc")
    for ann in annotations or ():
        ingest_annotations(ws, ann)
    return ws


def complete_prompt(ws: Workspace, result: SearchResult, config: SearchConfig,
                    kind: str) -> CompletionResult:
    """Fit the already-encoded prompt into the searched abstraction and extract."""
    alphabet = config.alphabet if kind == "letters" else None
    budget = Budget(max(0, config.budget - result.applications))
    register_instance(ws, "prompt")
    fit_before = fit_instance(ws, "prompt", {"before", "doc"})
    fit_after = fit_instance(ws, "prompt", {"after", "doc"})
    if fit_after.score > fit_before.score:
        fit, given, construct = fit_after, "after", "before"
    else:
        fit, given, construct = fit_before, "before", "after"
    materialize_fit(ws, "prompt", fit, budget=budget, trace=result.trace)

    def gate() -> bool:
        return budget.try_spend()

    lower_instance(ws, "prompt", construct_sides={construct},
                   on_apply=lambda rule, asg, delta: result.trace.append(
                       TraceEntry(rule.name, asg.as_dict(), True, float("nan"))),
                   gate=gate)
    materialize_tokens(ws, "prompt", alphabet)
    status = completion_check(ws, "prompt", alphabet)
    view = abstraction_view(ws)
    inst_m = abstracter.instance_node(ws, "prompt")
    prompt_fit = score(ws, config.weights, require_instances=[inst_m])
    weak_reasons = []
    for alpha_m in sorted(view.fact_alphas):
        if alpha_m in view.mapped.get(inst_m, {}).values():
            continue
        side = alpha_side(ws, view, alpha_m, exclude=inst_m)
        if side == given:
            weak_reasons.append(f"prompt misses shared {given}-side fact {alpha_m}")
    example_tags = [t for t in sorted(ws.instances) if t.startswith("ex")]
    cov = coverage_of(ws, view, example_tags)
    if cov is not None and cov < config.coverage_threshold:
        weak_reasons.append(f"abstraction covers only {cov:.0%} of the smallest example")
    tokens = None
    if status.complete:
        try:
            tokens = extract_completion(ws, "prompt", alphabet)
        except abstracter.IncompleteAnalogy as e:
            status = abstracter.CompletionStatus(False, max(1, e.missing))
    report = score(ws, config.weights)
    report.completion = status
    report.coverage = cov
    report.weak = bool(weak_reasons)
    return CompletionResult(
        tokens=tokens, complete=status.complete, missing=status.missing,
        report=report, prompt_fit_score=prompt_fit.weighted_score,
        weak=bool(weak_reasons), weak_reasons=weak_reasons, trace=result.trace,
        applications=config.budget - budget.remaining, workspace=ws)


# -- repository correspondence ---------------------------------------------------------


def correspond(files_a: list[tuple[str, str]], files_b: list[tuple[str, str]],
               config: SearchConfig | None = None,
               annotations: list | None = None):
    """Build an analogy between two groups of source files and read off the
    node-level correspondences."""
    from .workspace import init_workspace

    config = config or SearchConfig()
    ws = init_workspace()
    for name, text in files_a:
        lex_source(ws, text, f"a:{name}", instance="a")
    for name, text in files_b:
        lex_source(ws, text, f"b:{name}", instance="b")
    for ann in annotations or ():
        ingest_annotations(ws, ann)
    rules, consistency = standard_rules(ws, "tokens", config)
    cfg = replace(config, participants=["a", "b"])
    result = search(ws, rules, consistency, cfg)
    return ws, result
