"""Analogy layer: the rule family's exact shapes, correspondences, scoring,
and the completion machinery run against hand-built abstractions."""
import pytest

from analogykit.abstracter import (
    IncompleteAnalogy, abstraction_view, builtin_rules, completion_check,
    correspondences, extract_completion, lower_instance,
    mapping_consistency_rules, register_instance, resolve_instance_tokens,
    score, support_rules, type_slip_rules,
)
from analogykit.encoders import (
    encode_pair, gen_same_letter_rules, gen_successor_rules,
)
from analogykit.rules import (
    Assignment, apply_rule, check_consistency, find_assignments,
)
from analogykit.structure import TripletFact
from analogykit.workspace import init_workspace

BUILTIN = {r.name: r for r in builtin_rules()}
SUPPORT = {r.name: r for r in support_rules()}


def t8_workspace():
    """Adjacency and successor facts for "ab" / "ef" without the platonic layer."""
    ws = init_workspace()
    ts = ws.ts
    for n in ["x1", "x2", "y1", "y2", "n1", "n2", "s1", "s2",
              "NextToLeft", "NextToRight", "Predecessor", "Successor", "SameAs"]:
        ts.intern_node(n)
    for fact, left, right, lk, rk in [
            ("n1", "x1", "x2", "NextToLeft", "NextToRight"),
            ("n2", "y1", "y2", "NextToLeft", "NextToRight"),
            ("s1", "x1", "x2", "Predecessor", "Successor"),
            ("s2", "y1", "y2", "Predecessor", "Successor")]:
        ts.add_fact(fact, left, lk)
        ts.add_fact(fact, right, rk)
    return ws


def build_t9(ws):
    """Drive T8 -> T10 -> T11 -> T12 -> T9 with the four abstraction rules."""
    begin = Assignment.of({"a": "x1", "b": "y1", "c": "NextToLeft",
                           "ma": "n1", "mb": "n2"})
    assert begin in find_assignments(ws.ts, BUILTIN["begin"])
    d = apply_rule(ws, BUILTIN["begin"], begin)
    created = dict(zip(BUILTIN["begin"].creates, d.created_nodes))
    alpha1, alpha_n = created["alpha"], created["alpha_m"]
    map_a, map_b = created["map_a"], created["map_b"]

    d = apply_rule(ws, BUILTIN["follow"], Assignment.of({
        "a": "x2", "b": "y2", "c": "NextToRight", "ma": "n1", "mb": "n2",
        "alpha_m": alpha_n, "map_a": map_a, "map_b": map_b}))
    alpha2 = d.created_nodes[0]

    d = apply_rule(ws, BUILTIN["map_fact"], Assignment.of({
        "a": "x1", "b": "y1", "c": "Predecessor", "ma": "s1", "mb": "s2",
        "alpha": alpha1, "map_a": map_a, "map_b": map_b}))
    alpha_s = d.created_nodes[0]

    apply_rule(ws, BUILTIN["lift_fact"], Assignment.of({
        "a": "x2", "b": "y2", "c": "Successor", "ma": "s1", "mb": "s2",
        "alpha": alpha2, "alpha_m": alpha_s, "map_a": map_a, "map_b": map_b}))
    return {"alpha1": alpha1, "alpha2": alpha2, "alpha_n": alpha_n,
            "alpha_s": alpha_s, "map_a": map_a, "map_b": map_b}


def test_builtin_rule_inventory():
    names = [r.name for r in builtin_rules()]
    assert names == ["begin", "follow", "map_fact", "lift_fact",
                     "complete_node", "type_slip"]
    assert all(not r.is_consistency for r in builtin_rules())
    assert type_slip_rules()[0].name == "type_slip"


def test_begin_produces_t10():
    ws = t8_workspace()
    d = apply_rule(ws, BUILTIN["begin"], Assignment.of({
        "a": "x1", "b": "y1", "c": "NextToLeft", "ma": "n1", "mb": "n2"}))
    assert len(d.created_nodes) == 4
    created = dict(zip(BUILTIN["begin"].creates, d.created_nodes))
    a1, an = created["alpha"], created["alpha_m"]
    ma, mb = created["map_a"], created["map_b"]
    expect = {
        TripletFact(ma, "x1", a1), TripletFact(mb, "y1", a1),
        TripletFact(an, a1, "NextToLeft"),
        TripletFact(ma, "n1", an), TripletFact(mb, "n2", an),
        TripletFact("IsAbs", ma, "Abstraction"), TripletFact("IsAbs", mb, "Abstraction")}
    assert set(d.added_facts) == expect


def test_t9_progression_and_correspondences():
    ws = t8_workspace()
    names = build_t9(ws)
    view = abstraction_view(ws)
    assert view.fact_alphas == {names["alpha_n"], names["alpha_s"]}
    assert view.value_alphas == {names["alpha1"], names["alpha2"]}
    assert set(view.abstract_triples) == {
        TripletFact(names["alpha_n"], names["alpha1"], "NextToLeft"),
        TripletFact(names["alpha_n"], names["alpha2"], "NextToRight"),
        TripletFact(names["alpha_s"], names["alpha1"], "Predecessor"),
        TripletFact(names["alpha_s"], names["alpha2"], "Successor")}
    cs = correspondences(ws)
    by_alpha = {c.abstract_node: sorted(n for _, n in c.instances) for c in cs}
    assert by_alpha == {names["alpha1"]: ["x1", "y1"], names["alpha2"]: ["x2", "y2"]}
    assert check_consistency(ws, mapping_consistency_rules()) == []


def test_correspondences_empty_without_abstraction():
    assert correspondences(t8_workspace()) == []


def test_score_t9():
    ws = t8_workspace()
    build_t9(ws)
    report = score(ws)
    assert report.abstract_fact_count == 2
    assert report.weighted_score == pytest.approx(2.0)
    weighted = score(ws, {"Predecessor": 3.0, "Successor": 1.0})
    # alpha_s carries mean(3, 1) = 2, alpha_n stays 1
    assert weighted.weighted_score == pytest.approx(3.0)


def test_score_scaling_preserves_ranking():
    ws = t8_workspace()
    build_t9(ws)
    w1 = {"Predecessor": 2.0, "Successor": 1.0, "NextToLeft": 0.5}
    w2 = {k: 2 * v for k, v in w1.items()}
    s1 = score(ws, w1)
    # doubling all weights doubles the score (default-weight keys double too,
    # so provide every key used by the abstraction)
    w1_full = dict(w1, NextToRight=1.0)
    w2_full = {k: 2 * v for k, v in w1_full.items()}
    assert score(ws, w2_full).weighted_score == pytest.approx(
        2 * score(ws, w1_full).weighted_score)
    assert s1.abstract_fact_count == 2


def test_score_empty():
    report = score(t8_workspace())
    assert report.abstract_fact_count == 0 and report.weighted_score == 0.0


def test_score_monotone_under_lift_and_map():
    ws = t8_workspace()
    begin = Assignment.of({"a": "x1", "b": "y1", "c": "NextToLeft",
                           "ma": "n1", "mb": "n2"})
    d = apply_rule(ws, BUILTIN["begin"], begin)
    created = dict(zip(BUILTIN["begin"].creates, d.created_nodes))
    before = score(ws).abstract_fact_count
    apply_rule(ws, BUILTIN["map_fact"], Assignment.of({
        "a": "x1", "b": "y1", "c": "Predecessor", "ma": "s1", "mb": "s2",
        "alpha": created["alpha"], "map_a": created["map_a"],
        "map_b": created["map_b"]}))
    assert score(ws).abstract_fact_count >= before


def test_type_slip_records_slipped_pair():
    ws = init_workspace()
    ts = ws.ts
    for n in ["x", "y", "fx", "fy", "OppositeNumbers", "OppositeColors"]:
        ts.intern_node(n)
    ts.add_fact("fx", "x", "OppositeNumbers")
    ts.add_fact("fy", "y", "OppositeColors")
    rule = BUILTIN["type_slip"]
    d = apply_rule(ws, rule, Assignment.of({
        "a": "x", "b": "y", "c1": "OppositeNumbers", "c2": "OppositeColors",
        "ma": "fx", "mb": "fy"}))
    created = dict(zip(rule.creates, d.created_nodes))
    # which concrete types slipped together is retained per instance
    assert ws.ts.has_fact(created["map_a"], "OppositeNumbers", created["alpha_c"])
    assert ws.ts.has_fact(created["map_b"], "OppositeColors", created["alpha_c"])
    assert ws.ts.has_fact(created["alpha_m"], created["alpha"], created["alpha_c"])


def test_type_slip_degenerate_matches_begin_shape():
    ws = t8_workspace()
    rule = BUILTIN["type_slip"]
    d = apply_rule(ws, rule, Assignment.of({
        "a": "x1", "b": "y1", "c1": "NextToLeft", "c2": "NextToLeft",
        "ma": "n1", "mb": "n2"}))
    created = dict(zip(rule.creates, d.created_nodes))
    view = abstraction_view(ws)
    # same mapping shape as begin, with the shared key abstracted into alpha_c
    assert view.value_alphas == {created["alpha"]}
    assert view.fact_alphas == {created["alpha_m"]}
    assert view.key_alphas == {created["alpha_c"]}
    for m, conc in ((created["map_a"], "x1"), (created["map_b"], "y1")):
        assert view.mapped[m][conc] == created["alpha"]
        assert view.mapped[m]["NextToLeft"] == created["alpha_c"]


# -- completion against a hand-built abstraction --------------------------------


def notate(ws, rules):
    """Apply notation rules to fixpoint (tiny workspaces only)."""
    changed = True
    while changed:
        changed = False
        for rule in rules:
            for asg in find_assignments(ws.ts, rule):
                d = apply_rule(ws, rule, asg)
                if d.added_facts or d.created_nodes:
                    changed = True


def fact_linking(ws, value_a, key_a, value_b, key_b):
    """The fact node with (f, value_a, key_a) and (f, value_b, key_b)."""
    fa = {f.fact for f in ws.ts.query((None, value_a, key_a))}
    fb = {f.fact for f in ws.ts.query((None, value_b, key_b))}
    both = sorted(fa & fb)
    assert both, f"no fact links {value_a}/{key_a} to {value_b}/{key_b}"
    return both[0]


def hand_built_pair_abstraction(before_a, after_a, before_b, after_b):
    """Encode two example pairs, notate them, and build the shared abstraction
    by hand: per-position value nodes on both sides, adjacency and successor
    facts, same-letter ties, and the cross successor on the changed letter."""
    ws = init_workspace()
    encode_pair(ws, before_a, after_a, "ex1")
    encode_pair(ws, before_b, after_b, "ex2")
    notate(ws, gen_successor_rules() + gen_same_letter_rules())
    ts = ws.ts

    n = len(before_a)
    alphas = {}
    for side, count in (("before", n), ("after", len(after_a))):
        for i in range(count):
            alphas[(side, i)] = ts.intern_node(f"alpha:{side}{i}")
    m1 = register_instance(ws, "ex1")
    m2 = register_instance(ws, "ex2")

    def map_node(m, conc, alpha):
        ts.add_fact(m, conc, alpha)

    for tag, m in (("ex1", m1), ("ex2", m2)):
        for side, count in (("before", n), ("after", len(after_a))):
            for i in range(count):
                map_node(m, f"{tag}.{side}:{i}", alphas[(side, i)])

    def lift(name, aa, ka, bb, kb, concrete_of):
        """Add abstract fact node `name` with two triples and map each
        example's concrete witness fact node to it."""
        fnode = ts.intern_node(name)
        ts.add_fact(fnode, aa, ka)
        ts.add_fact(fnode, bb, kb)
        for tag, m in (("ex1", m1), ("ex2", m2)):
            conc = concrete_of(tag)
            ts.add_fact(m, conc, fnode)
        return fnode

    # adjacency within each side
    for side, count in (("before", n), ("after", len(after_a))):
        for i in range(count - 1):
            lift(f"alphaN:{side}{i}",
                 alphas[(side, i)], "NextToLeft", alphas[(side, i + 1)], "NextToRight",
                 lambda tag, side=side, i=i: f"{tag}.{side}:n{i}")
    # successor facts within each side, wherever both examples have them
    for side, seq_a, seq_b in (("before", before_a, before_b), ("after", after_a, after_b)):
        for i in range(len(seq_a) - 1):
            if ord(seq_a[i + 1]) - ord(seq_a[i]) == 1 and ord(seq_b[i + 1]) - ord(seq_b[i]) == 1:
                lift(f"alphaS:{side}{i}",
                     alphas[(side, i)], "Predecessor", alphas[(side, i + 1)], "Successor",
                     lambda tag, side=side, i=i: fact_linking(
                         ws, f"{tag}.{side}:{i}", "Predecessor",
                         f"{tag}.{side}:{i + 1}", "Successor"))
    # cross-side ties per position: same letter or successor
    for i in range(min(n, len(after_a))):
        same_a = before_a[i] == after_a[i]
        same_b = before_b[i] == after_b[i]
        succ_a = ord(after_a[i]) - ord(before_a[i]) == 1
        succ_b = ord(after_b[i]) - ord(before_b[i]) == 1
        if same_a and same_b:
            lift(f"alphaM:{i}",
                 alphas[("before", i)], "SameAs", alphas[("after", i)], "SameAs",
                 lambda tag, i=i: fact_linking(
                     ws, f"{tag}.before:{i}", "SameAs", f"{tag}.after:{i}", "SameAs"))
        elif succ_a and succ_b:
            lift(f"alphaT:{i}",
                 alphas[("before", i)], "Predecessor", alphas[("after", i)], "Successor",
                 lambda tag, i=i: fact_linking(
                     ws, f"{tag}.before:{i}", "Predecessor", f"{tag}.after:{i}", "Successor"))
    return ws, alphas


def map_prompt(ws, alphas, prompt):
    """Register the prompt and map its before side into the abstraction."""
    encode_pair(ws, prompt, None, "prompt")
    notate(ws, gen_successor_rules() + gen_same_letter_rules())
    mp = register_instance(ws, "prompt")
    extend = SUPPORT["extend_into"]
    for i, _ch in enumerate(prompt):
        if i < len(prompt) - 1:
            apply_rule(ws, extend, Assignment.of({
                "b": f"prompt.before:{i}", "c": "NextToLeft",
                "mb": f"prompt.before:n{i}", "alpha": alphas[("before", i)],
                "alpha_m": f"alphaN:before{i}", "map_b": mp}))
            apply_rule(ws, extend, Assignment.of({
                "b": f"prompt.before:{i + 1}", "c": "NextToRight",
                "mb": f"prompt.before:n{i}", "alpha": alphas[("before", i + 1)],
                "alpha_m": f"alphaN:before{i}", "map_b": mp}))
    return mp


def test_hand_built_completion_abc_abd():
    ws, alphas = hand_built_pair_abstraction("abc", "abd", "efg", "efh")
    map_prompt(ws, alphas, "ijk")
    lower_instance(ws, "prompt", construct_sides={"after"})
    status = completion_check(ws, "prompt", alphabet="abcdefghijklmnopqrstuvwxyz")
    assert status.complete, status
    tokens = extract_completion(ws, "prompt", alphabet="abcdefghijklmnopqrstuvwxyz")
    assert "".join(tokens) == "ijl"
    assert check_consistency(ws, mapping_consistency_rules()) == []


def test_hand_built_completion_identity():
    ws, alphas = hand_built_pair_abstraction("ab", "ab", "cd", "cd")
    map_prompt(ws, alphas, "xy")
    lower_instance(ws, "prompt", construct_sides={"after"})
    tokens = extract_completion(ws, "prompt", alphabet="abcdefghijklmnopqrstuvwxyz")
    assert "".join(tokens) == "xy"


def test_hand_built_reverse_slipless():
    """abc->cba maps positionally with reversed cross ties; completion reads kji."""
    ws = init_workspace()
    encode_pair(ws, "abc", "cba", "ex1")
    encode_pair(ws, "efg", "gfe", "ex2")
    notate(ws, gen_successor_rules() + gen_same_letter_rules())
    ts = ws.ts
    alphas = {}
    for side in ("before", "after"):
        for i in range(3):
            alphas[(side, i)] = ts.intern_node(f"alpha:{side}{i}")
    m1 = register_instance(ws, "ex1")
    m2 = register_instance(ws, "ex2")
    for tag, m in (("ex1", m1), ("ex2", m2)):
        for side in ("before", "after"):
            for i in range(3):
                ts.add_fact(m, f"{tag}.{side}:{i}", alphas[(side, i)])
    for side in ("before", "after"):
        for i in range(2):
            f = ts.intern_node(f"alphaN:{side}{i}")
            ts.add_fact(f, alphas[(side, i)], "NextToLeft")
            ts.add_fact(f, alphas[(side, i + 1)], "NextToRight")
            for tag, m in (("ex1", m1), ("ex2", m2)):
                ts.add_fact(m, f"{tag}.{side}:n{i}", f)
    # cross ties: position i of before equals position 2-i of after
    for i in range(3):
        f = ts.intern_node(f"alphaM:{i}")
        ts.add_fact(f, alphas[("before", i)], "SameAs")
        ts.add_fact(f, alphas[("after", 2 - i)], "SameAs")
        for tag, m in (("ex1", m1), ("ex2", m2)):
            conc = fact_linking(ws, f"{tag}.before:{i}", "SameAs",
                                f"{tag}.after:{2 - i}", "SameAs")
            ts.add_fact(m, conc, f)
    map_prompt(ws, alphas, "ijk")
    lower_instance(ws, "prompt", construct_sides={"after"})
    tokens = extract_completion(ws, "prompt", alphabet="abcdefghijklmnopqrstuvwxyz")
    assert "".join(tokens) == "kji"


def test_hand_built_short_prompt_incomplete():
    ws, alphas = hand_built_pair_abstraction("abc", "abd", "efg", "efh")
    map_prompt(ws, alphas, "ij")
    lower_instance(ws, "prompt", construct_sides={"after"})
    status = completion_check(ws, "prompt", alphabet="abcdefghijklmnopqrstuvwxyz")
    assert not status.complete and status.missing >= 1
    with pytest.raises(IncompleteAnalogy):
        extract_completion(ws, "prompt", alphabet="abcdefghijklmnopqrstuvwxyz")


def test_empty_abstraction_degenerate_complete():
    ws = init_workspace()
    encode_pair(ws, "ab", None, "prompt")
    register_instance(ws, "prompt")
    status = completion_check(ws, "prompt")
    assert status.complete and status.missing == 0 and status.degenerate


def test_slip_lowering_uses_instance_type():
    """A slipped key lowers through whatever type the instance mapped."""
    ws = init_workspace()
    ts = ws.ts
    for n in ["x1", "y1", "fx", "fy", "Asc", "Desc", "V", "K", "F"]:
        ts.intern_node(n)
    ts.add_fact("fx", "x1", "Asc")
    ts.add_fact("fy", "y1", "Desc")
    m1 = register_instance(ws, "ex1")
    ts.add_fact(m1, "x1", "V")
    ts.add_fact(m1, "Asc", "K")
    ts.add_fact(m1, "fx", "F")
    ts.add_fact("F", "V", "K")
    ws.set_tag("x1", "ex1", "after")
    mp = register_instance(ws, "prompt")
    ts.add_fact(mp, "Desc", "K")
    deltas = lower_instance(ws, "prompt", construct_sides={"after"})
    created = [n for d in deltas for n in d.created_nodes]
    assert len(created) == 2
    view = abstraction_view(ws)
    new_fact = view.concrete_for(mp, "F")
    new_val = view.concrete_for(mp, "V")
    assert ts.has_fact(new_fact, new_val, "Desc")


def test_resolution_conflict_detected():
    ws = init_workspace()
    encode_pair(ws, "ab", None, "p")
    mp = register_instance(ws, "p")
    ts = ws.ts
    ts.add_fact(mp, "p.before:0", ts.intern_node("alpha:x"))
    ts.add_fact(mp, "p.before:1", "alpha:x")
    # a same-symbol fact tying 'a' to 'b' cannot resolve
    g = ts.intern_node("bogus")
    ts.add_fact(g, "p.before:0", "SameAs")
    ts.add_fact(g, "p.before:1", "SameAs")
    ts.add_fact(mp, g, ts.intern_node("alpha:g"))
    _tokens, conflicts = resolve_instance_tokens(ws, "p", "ab")
    assert conflicts
