"""The analogy layer: abstraction rules, correspondences, scoring, completion.

An analogy lives in the workspace as an *abstraction*: abstract nodes standing
for corresponding concrete nodes, abstract fact nodes restating the facts the
instances share, and per-instance mapping fact nodes whose triples send each
concrete node to its abstract counterpart.  Mapping facts are flagged by a
triple (IsAbs, m, Abstraction) on the two reserved bookkeeping nodes.

The rule family below builds abstractions one small step at a time.  All of
them are shadings of one prototype pattern:

  begin          start an abstraction from one shared fact of two instances
  follow         walk a mapped fact node to a new concrete pair, new abstract node
  map_fact       abstract a new pair of fact nodes over an existing abstract node
  lift_fact      restate one more slot of a mapped fact pair in the abstraction
  complete_node  construct the concrete node an instance is missing for a role
  type_slip      begin while abstracting two *different* keys into a type node

plus support shadings used when an instance joins an existing abstraction
(extend_into) and when the completion machinery lowers abstract triples into an
instance (complete_fact / complete_value / complete_triple and slip variants).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from statistics import mean

from .encoders import (
    NEXT_TO_LEFT, NEXT_TO_RIGHT, PREDECESSOR, SAME_AS, SUCCESSOR,
    token_of_platonic,
)
from .rules import Assignment, Delta, Rule, apply_rule, parse_rules
from .structure import NodeId, TripletFact
from .workspace import ABSTRACTION, IS_ABS, Workspace

BUILTIN_RULES_TEXT = """
rule begin
var a b c ma mb
const Abstraction IsAbs
sym (a ma) <-> (b mb)
require (ma a c)
require (mb b c)
create alpha alpha_m map_a map_b
add (map_a a alpha)
add (map_b b alpha)
add (alpha_m alpha c)
add (map_a ma alpha_m)
add (map_b mb alpha_m)
add (IsAbs map_a Abstraction)
add (IsAbs map_b Abstraction)

rule follow
var a b c ma mb alpha_m map_a map_b
const Abstraction IsAbs
sym (a ma map_a) <-> (b mb map_b)
distinct map_a map_b
require (ma a c)
require (mb b c)
require (map_a ma alpha_m)
require (map_b mb alpha_m)
require (IsAbs map_a Abstraction)
require (IsAbs map_b Abstraction)
create alpha
add (map_a a alpha)
add (map_b b alpha)
add (alpha_m alpha c)

rule map_fact
var a b c ma mb alpha map_a map_b
const Abstraction IsAbs
sym (a ma map_a) <-> (b mb map_b)
distinct map_a map_b
require (ma a c)
require (mb b c)
require (map_a a alpha)
require (map_b b alpha)
require (IsAbs map_a Abstraction)
require (IsAbs map_b Abstraction)
create alpha_m
add (alpha_m alpha c)
add (map_a ma alpha_m)
add (map_b mb alpha_m)

rule lift_fact
var a b c ma mb alpha alpha_m map_a map_b
const Abstraction IsAbs
sym (a ma map_a) <-> (b mb map_b)
distinct map_a map_b
require (ma a c)
require (mb b c)
require (map_a a alpha)
require (map_b b alpha)
require (map_a ma alpha_m)
require (map_b mb alpha_m)
require (IsAbs map_a Abstraction)
require (IsAbs map_b Abstraction)
add (alpha_m alpha c)

rule complete_node
var a c ma alpha alpha_m map_a map_b
const Abstraction IsAbs
distinct map_a map_b
require (ma a c)
require (map_a a alpha)
require (map_a ma alpha_m)
require (alpha_m alpha c)
require (IsAbs map_a Abstraction)
require (IsAbs map_b Abstraction)
create b mb
add (mb b c)
add (map_b b alpha)
add (map_b mb alpha_m)

rule type_slip
var a b c1 c2 ma mb
const Abstraction IsAbs
sym (a ma c1) <-> (b mb c2)
require (ma a c1)
require (mb b c2)
create alpha alpha_c alpha_m map_a map_b
add (map_a a alpha)
add (map_b b alpha)
add (map_a c1 alpha_c)
add (map_b c2 alpha_c)
add (alpha_m alpha alpha_c)
add (map_a ma alpha_m)
add (map_b mb alpha_m)
add (IsAbs map_a Abstraction)
add (IsAbs map_b Abstraction)
"""

SUPPORT_RULES_TEXT = """
rule extend_into
var b c mb alpha alpha_m map_b
const Abstraction IsAbs
require (mb b c)
require (alpha_m alpha c)
require (IsAbs map_b Abstraction)
add (map_b b alpha)
add (map_b mb alpha_m)

rule extend_into_slip
var b mb ctype alpha alpha_c alpha_m map_b
const Abstraction IsAbs
require (mb b ctype)
require (alpha_m alpha alpha_c)
require (IsAbs map_b Abstraction)
add (map_b b alpha)
add (map_b mb alpha_m)
add (map_b ctype alpha_c)

rule complete_fact
var b c alpha alpha_m map_b
const Abstraction IsAbs
require (alpha_m alpha c)
require (map_b b alpha)
require (IsAbs map_b Abstraction)
create mb
add (mb b c)
add (map_b mb alpha_m)

rule complete_value
var c mb alpha alpha_m map_b
const Abstraction IsAbs
require (alpha_m alpha c)
require (map_b mb alpha_m)
require (IsAbs map_b Abstraction)
create b
add (mb b c)
add (map_b b alpha)

rule complete_triple
var b c mb alpha alpha_m map_b
const Abstraction IsAbs
require (alpha_m alpha c)
require (map_b b alpha)
require (map_b mb alpha_m)
require (IsAbs map_b Abstraction)
add (mb b c)

rule complete_node_slip
var ctype alpha alpha_c alpha_m map_b
const Abstraction IsAbs
require (alpha_m alpha alpha_c)
require (map_b ctype alpha_c)
require (IsAbs map_b Abstraction)
create b mb
add (mb b ctype)
add (map_b b alpha)
add (map_b mb alpha_m)

rule complete_fact_slip
var b ctype alpha alpha_c alpha_m map_b
const Abstraction IsAbs
require (alpha_m alpha alpha_c)
require (map_b ctype alpha_c)
require (map_b b alpha)
require (IsAbs map_b Abstraction)
create mb
add (mb b ctype)
add (map_b mb alpha_m)

rule complete_value_slip
var mb ctype alpha alpha_c alpha_m map_b
const Abstraction IsAbs
require (alpha_m alpha alpha_c)
require (map_b ctype alpha_c)
require (map_b mb alpha_m)
require (IsAbs map_b Abstraction)
create b
add (mb b ctype)
add (map_b b alpha)

rule complete_triple_slip
var b mb ctype alpha alpha_c alpha_m map_b
const Abstraction IsAbs
require (alpha_m alpha alpha_c)
require (map_b ctype alpha_c)
require (map_b b alpha)
require (map_b mb alpha_m)
require (IsAbs map_b Abstraction)
add (mb b ctype)
"""

CONSISTENCY_RULES_TEXT = """
rule map_functionality consistency
var m x a1 a2
const Abstraction IsAbs
distinct a1 a2
require (IsAbs m Abstraction)
require (m x a1)
require (m x a2)

rule map_injectivity consistency
var m x1 x2 a
const Abstraction IsAbs
distinct x1 x2
require (IsAbs m Abstraction)
require (m x1 a)
require (m x2 a)
"""

_BUILTIN = {r.name: r for r in parse_rules(BUILTIN_RULES_TEXT)}
_SUPPORT = {r.name: r for r in parse_rules(SUPPORT_RULES_TEXT)}
_CONSISTENCY = {r.name: r for r in parse_rules(CONSISTENCY_RULES_TEXT)}


def builtin_rules() -> list[Rule]:
    """The six analogy rules, in build order."""
    return [_BUILTIN[n] for n in
            ("begin", "follow", "map_fact", "lift_fact", "complete_node", "type_slip")]


def type_slip_rules() -> list[Rule]:
    return [_BUILTIN["type_slip"]]


def support_rules() -> list[Rule]:
    """Instance-entry and completion shadings used by the completion machinery."""
    return [_SUPPORT[n] for n in sorted(_SUPPORT)]


def mapping_consistency_rules() -> list[Rule]:
    """Functionality and injectivity of every instance mapping."""
    return [_CONSISTENCY["map_functionality"], _CONSISTENCY["map_injectivity"]]


def rule_by_name(name: str) -> Rule:
    return _BUILTIN.get(name) or _SUPPORT.get(name) or _CONSISTENCY[name]


class IncompleteAnalogy(Exception):
    def __init__(self, missing: int, detail: str = ""):
        super().__init__(f"analogy is incomplete: {missing} missing{detail and ': ' + detail}")
        self.missing = missing


# -- reading the abstraction off the workspace -----------------------------------


@dataclass
class AbstractionView:
    abstraction_id: NodeId
    mapping_facts: list[NodeId]
    # mapping fact -> {concrete -> abstract}; functionality means one abstract
    # per concrete, which consistency search enforces.
    mapped: dict[NodeId, dict[NodeId, NodeId]]
    abstract_nodes: set[NodeId]
    abstract_triples: list[TripletFact]
    fact_alphas: set[NodeId]
    key_alphas: set[NodeId]
    value_alphas: set[NodeId]

    def concrete_for(self, m: NodeId, alpha: NodeId) -> NodeId | None:
        """The (lexicographically first) concrete node m maps to alpha."""
        best = None
        for conc, a in self.mapped.get(m, {}).items():
            if a == alpha and (best is None or conc < best):
                best = conc
        return best


def abstraction_view(ws: Workspace) -> AbstractionView:
    ts = ws.ts
    mfs = sorted(f.value for f in ts.query((IS_ABS, None, ABSTRACTION)))
    mapped: dict[NodeId, dict[NodeId, NodeId]] = {}
    abstract_nodes: set[NodeId] = set()
    for m in mfs:
        entry: dict[NodeId, NodeId] = {}
        for f in sorted(ts.query((m, None, None))):
            entry[f.value] = f.key
            abstract_nodes.add(f.key)
        mapped[m] = entry
    triples = sorted(f for a in abstract_nodes for f in ts.query((a, None, None)))
    fact_alphas = {f.fact for f in triples}
    key_alphas = {f.key for f in triples} & abstract_nodes
    value_alphas = abstract_nodes - fact_alphas - key_alphas
    return AbstractionView(
        abstraction_id=ABSTRACTION, mapping_facts=mfs, mapped=mapped,
        abstract_nodes=abstract_nodes, abstract_triples=triples,
        fact_alphas=fact_alphas, key_alphas=key_alphas, value_alphas=value_alphas)


def alpha_side(ws: Workspace, view: AbstractionView, alpha: NodeId,
               exclude: NodeId | None = None) -> str | None:
    """The side tag shared by every mapped concrete of alpha, or None if mixed."""
    sides = set()
    for m in view.mapping_facts:
        if m == exclude:
            continue
        for conc, a in view.mapped[m].items():
            if a == alpha:
                sides.add(ws.side_of(conc))
    if len(sides) == 1:
        return sides.pop()
    return None


def alpha_token_bearing(ws: Workspace, view: AbstractionView, alpha: NodeId,
                        exclude: NodeId | None = None) -> bool:
    """True when alpha's example concretes carry platonic symbol facts."""
    for m in view.mapping_facts:
        if m == exclude:
            continue
        for conc, a in view.mapped[m].items():
            if a != alpha:
                continue
            for f in ws.ts.query((None, conc, None)):
                if token_of_platonic(f.key) is not None:
                    return True
    return False


@dataclass
class Correspondence:
    abstract_node: NodeId
    instances: list[tuple[str, NodeId]]


def correspondences(ws: Workspace) -> list[Correspondence]:
    """Node-level correspondences: concrete nodes mapped to the same abstract
    value node by different instance mappings.  Ordered by abstract node name."""
    view = abstraction_view(ws)
    out = []
    for alpha in sorted(view.value_alphas):
        pairs = []
        for m in view.mapping_facts:
            label = ws.mapping_instances.get(m, m)
            for conc in sorted(c for c, a in view.mapped[m].items() if a == alpha):
                pairs.append((label, conc))
        if pairs:
            out.append(Correspondence(alpha, pairs))
    return out


# -- scoring -----------------------------------------------------------------------


@dataclass
class CompletionStatus:
    complete: bool
    missing: int
    degenerate: bool = False


@dataclass
class ScoreReport:
    abstract_fact_count: int
    weighted_score: float
    completion: CompletionStatus | None = None
    weak: bool = False
    coverage: float | None = None
    notes: list[str] = field(default_factory=list)

    def as_json_dict(self) -> dict:
        out = {"score": self.weighted_score, "fact_count": self.abstract_fact_count}
        if self.completion is not None:
            out["missing"] = self.completion.missing
            out["complete"] = self.completion.complete
        if self.coverage is not None:
            out["coverage"] = self.coverage
        out["weak"] = self.weak
        return out


def score(ws: Workspace, weights: dict[str, float] | None = None,
          require_instances: list[NodeId] | None = None) -> ScoreReport:
    """Weighted shared-fact count: one contribution per abstract fact node,
    weighted by the mean weight of its triple keys (absent keys weigh 1.0).
    With `require_instances`, only abstract facts mapped by every listed
    mapping fact count; that is the prompt-fit variant of the score.
    """
    weights = weights or {}
    view = abstraction_view(ws)
    count = 0
    total = 0.0
    for alpha_m in sorted(view.fact_alphas):
        if require_instances is not None:
            if not all(alpha_m in view.mapped.get(m, {}).values()
                       for m in require_instances):
                continue
        keys = [t.key for t in view.abstract_triples if t.fact == alpha_m]
        count += 1
        total += mean(weights.get(k, 1.0) for k in keys)
    return ScoreReport(abstract_fact_count=count, weighted_score=total)


def coverage_of(ws: Workspace, view: AbstractionView,
                instance_tags: list[str]) -> float | None:
    """Fraction of the smallest instance's value nodes that the abstraction maps."""
    fact_nodes = {f.fact for f in ws.ts.facts}
    ratios = []
    for tag in instance_tags:
        members = {n for n, (inst, _) in ws.tags.items()
                   if inst == tag and n not in fact_nodes and n in ws.ts.nodes}
        if not members:
            continue
        mapped = set()
        for m, entry in view.mapped.items():
            if ws.mapping_instances.get(m) == tag or ws.mapping_instances.get(m) is None:
                mapped |= {c for c in entry if c in members}
        ratios.append(len(mapped) / len(members))
    return min(ratios) if ratios else None


# -- instance registration and completion ----------------------------------------


def register_instance(ws: Workspace, label: str) -> NodeId:
    """Create (or fetch) the mapping fact node for an instance joining the
    abstraction; its mapping may start empty and grow by extend_into."""
    node = ws.ts.intern_node(f"inst:{label}")
    ws.ts.add_fact(IS_ABS, node, ABSTRACTION)
    ws.mapping_instances[node] = label
    return node


def instance_node(ws: Workspace, label: str) -> NodeId:
    for m, tag in sorted(ws.mapping_instances.items()):
        if tag == label:
            return m
    raise KeyError(f"no registered instance {label!r}")


def _witness_for(view: AbstractionView, inst_m: NodeId, alpha: NodeId,
                 alpha_m: NodeId) -> tuple[NodeId, NodeId, NodeId] | None:
    """Another instance's (map_a, a, ma) concretes for alpha and alpha_m."""
    for m in view.mapping_facts:
        if m == inst_m:
            continue
        a = view.concrete_for(m, alpha)
        ma = view.concrete_for(m, alpha_m)
        if a is not None and ma is not None:
            return m, a, ma
    return None


class _OutOfBudget(Exception):
    pass


def lower_instance(ws: Workspace, inst_label: str,
                   construct_sides: set[str] = frozenset({"after"}),
                   on_apply=None, gate=None) -> list[Delta]:
    """Construct the instance's missing concrete counterparts.

    Every abstract triple is lowered into the instance: existing concretes are
    reused, fact nodes are created freely, and value nodes are created only for
    abstract nodes whose example side is in `construct_sides` (an instance's
    given side is ground truth and must never be invented).  Runs to fixpoint;
    deterministic because triples and witnesses are visited in sorted order.
    `gate`, when given, is consulted before each application; a False return
    stops the construction (used for budget enforcement).
    """
    inst_m = instance_node(ws, inst_label)
    deltas: list[Delta] = []
    # concrete counterparts of this instance, kept live across applications
    conc: dict[NodeId, NodeId] = {}

    def run(rule_name: str, binding: dict[str, NodeId]) -> Delta:
        if gate is not None and not gate():
            raise _OutOfBudget
        rule = rule_by_name(rule_name)
        delta = apply_rule(ws, rule, Assignment.of(binding))
        if delta.added_facts or delta.created_nodes:
            deltas.append(delta)
            if on_apply is not None:
                on_apply(rule, Assignment.of(binding), delta)
            for f in delta.added_facts:
                if f.fact == inst_m and (f.key not in conc or f.value < conc[f.key]):
                    conc[f.key] = f.value
        return delta

    changed = True
    try:
        while changed:
            changed = False
            view = abstraction_view(ws)
            conc.clear()
            conc.update({a: c for c, a in sorted(view.mapped.get(inst_m, {}).items(),
                                                 reverse=True)})
            constructible = {
                a for a in view.value_alphas
                if alpha_side(ws, view, a, exclude=inst_m) in construct_sides}
            for trip in view.abstract_triples:
                alpha_m, alpha, key = trip
                slip = key in view.abstract_nodes
                base = {"alpha": alpha, "alpha_m": alpha_m, "map_b": inst_m}
                if slip:
                    ktype = conc.get(key)
                    if ktype is None:
                        continue  # the instance never mapped this slipped type
                    base.update({"alpha_c": key, "ctype": ktype})
                    suffix = "_slip"
                else:
                    base["c"] = key
                    suffix = ""
                f_c = conc.get(alpha_m)
                v_c = conc.get(alpha)
                if f_c is not None and v_c is not None:
                    k_c = base.get("ctype", key)
                    if TripletFact(f_c, v_c, k_c) in ws.ts.facts:
                        continue
                    delta = run(f"complete_triple{suffix}",
                                {**base, "b": v_c, "mb": f_c})
                elif f_c is not None:
                    if alpha not in constructible:
                        continue
                    delta = run(f"complete_value{suffix}", {**base, "mb": f_c})
                elif v_c is not None:
                    delta = run(f"complete_fact{suffix}", {**base, "b": v_c})
                else:
                    if alpha not in constructible:
                        continue
                    if slip:
                        delta = run("complete_node_slip", base)
                    else:
                        witness = _witness_for(view, inst_m, alpha, alpha_m)
                        if witness is None:
                            continue
                        map_a, a, ma = witness
                        delta = run("complete_node", {
                            **base, "map_a": map_a, "a": a, "ma": ma})
                if delta.added_facts or delta.created_nodes:
                    changed = True
    except _OutOfBudget:
        pass
    return deltas


def resolve_instance_tokens(
        ws: Workspace, inst_label: str, alphabet: str | None = None
) -> tuple[dict[NodeId, str], set[NodeId]]:
    """Assign symbol tokens to the instance's concrete nodes.

    Seeds from platonic facts, then propagates through same-symbol facts and,
    for a letter alphabet, predecessor/successor facts.  Returns the token map
    and the set of nodes with conflicting derivations.
    """
    ts = ws.ts
    inst_m = instance_node(ws, inst_label)
    view = abstraction_view(ws)
    concretes = set(view.mapped.get(inst_m, {}))
    tokens: dict[NodeId, str] = {}
    conflicts: set[NodeId] = set()

    def learn(node: NodeId, tok: str) -> bool:
        old = tokens.get(node)
        if old is None:
            tokens[node] = tok
            return True
        if old != tok:
            conflicts.add(node)
        return False

    fact_nodes = set()
    for node in concretes | {f.fact for f in ts.facts if f.value in concretes}:
        for f in ts.query((node, None, None)):
            fact_nodes.add(node)
            break
    for f in ts.facts:
        tok = token_of_platonic(f.key)
        if tok is not None:
            learn(f.value, tok)

    changed = True
    while changed:
        changed = False
        for g in sorted(fact_nodes):
            trips = ts.query((g, None, None))
            same = sorted(f.value for f in trips if f.key == SAME_AS)
            for u in same:
                for v in same:
                    if u in tokens and v not in tokens:
                        changed |= learn(v, tokens[u])
                    elif u in tokens and v in tokens and tokens[u] != tokens[v]:
                        conflicts.add(v)
            if alphabet:
                pred = sorted(f.value for f in trips if f.key == PREDECESSOR)
                succ = sorted(f.value for f in trips if f.key == SUCCESSOR)
                for u in pred:
                    for v in succ:
                        if u in tokens and v not in tokens:
                            i = alphabet.find(tokens[u])
                            if 0 <= i < len(alphabet) - 1:
                                changed |= learn(v, alphabet[i + 1])
                        elif v in tokens and u not in tokens:
                            i = alphabet.find(tokens[v])
                            if i > 0:
                                changed |= learn(u, alphabet[i - 1])
                        elif u in tokens and v in tokens:
                            i = alphabet.find(tokens[u])
                            if not (0 <= i < len(alphabet) - 1
                                    and alphabet[i + 1] == tokens[v]):
                                conflicts.add(v)
    return tokens, conflicts


def materialize_tokens(ws: Workspace, inst_label: str,
                       alphabet: str | None = None) -> dict[NodeId, str]:
    """Add platonic facts for constructed nodes whose tokens resolved, so the
    completed instance reads back exactly like an encoded one."""
    from .encoders import letter_platonic, token_platonic

    tokens, _ = resolve_instance_tokens(ws, inst_label, alphabet)
    ts = ws.ts
    for node in sorted(tokens):
        if not node.startswith("gen:"):
            continue
        tok = tokens[node]
        platonic = letter_platonic(tok) if alphabet and len(tok) == 1 and tok in alphabet \
            else token_platonic(tok)
        ts.intern_node(platonic)
        pf = ts.intern_node(f"{node}:p")
        ts.add_fact(pf, node, platonic)
    return tokens


def completion_check(ws: Workspace, inst_label: str,
                     alphabet: str | None = None) -> CompletionStatus:
    """Can the instance fully inhabit the abstraction?

    Missing counts abstract value nodes with no concrete counterpart in the
    instance plus constructed token-bearing nodes whose token could not be
    inferred (or conflicted).  An empty abstraction is complete but degenerate.
    """
    view = abstraction_view(ws)
    inst_m = instance_node(ws, inst_label)
    if not view.value_alphas:
        return CompletionStatus(complete=True, missing=0, degenerate=True)
    tokens, conflicts = resolve_instance_tokens(ws, inst_label, alphabet)
    missing = 0
    for alpha in sorted(view.value_alphas):
        conc = view.concrete_for(inst_m, alpha)
        if conc is None:
            missing += 1
        elif alpha_token_bearing(ws, view, alpha, exclude=inst_m):
            if conc not in tokens or conc in conflicts:
                missing += 1
    for alpha in sorted(view.key_alphas):
        if view.concrete_for(inst_m, alpha) is None:
            missing += 1
    return CompletionStatus(complete=missing == 0, missing=missing)


def extract_completion(ws: Workspace, inst_label: str,
                       alphabet: str | None = None) -> list[str]:
    """Read off the constructed side of a completed instance as a token list.

    Tokens come from the resolved symbol map; order comes from the lowered
    adjacency facts among the constructed nodes.  Raises IncompleteAnalogy when
    the completion check fails or the constructed nodes do not form one chain.
    """
    status = completion_check(ws, inst_label, alphabet)
    if not status.complete:
        raise IncompleteAnalogy(status.missing)
    ts = ws.ts
    inst_m = instance_node(ws, inst_label)
    view = abstraction_view(ws)
    tokens, _ = resolve_instance_tokens(ws, inst_label, alphabet)
    constructed = {c for c in view.mapped.get(inst_m, {})
                   if c.startswith("gen:") and c in tokens}
    if not constructed:
        return []
    nxt: dict[NodeId, NodeId] = {}
    has_pred: set[NodeId] = set()
    for g in sorted({f.fact for f in ts.facts if f.value in constructed}):
        left = sorted(f.value for f in ts.query((g, None, NEXT_TO_LEFT)))
        right = sorted(f.value for f in ts.query((g, None, NEXT_TO_RIGHT)))
        if len(left) == 1 and len(right) == 1 and \
                left[0] in constructed and right[0] in constructed:
            nxt[left[0]] = right[0]
            has_pred.add(right[0])
    heads = sorted(constructed - has_pred)
    if len(constructed) == 1:
        return [tokens[next(iter(constructed))]]
    if len(heads) != 1:
        raise IncompleteAnalogy(len(heads), " (constructed nodes do not chain)")
    chain = [heads[0]]
    while chain[-1] in nxt:
        chain.append(nxt[chain[-1]])
        if len(chain) > len(constructed):
            raise IncompleteAnalogy(1, " (adjacency cycle)")
    if len(chain) != len(constructed):
        raise IncompleteAnalogy(len(constructed) - len(chain), " (broken chain)")
    return [tokens[n] for n in chain]
