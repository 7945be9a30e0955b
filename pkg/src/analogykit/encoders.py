"""Encoders: turn letter strings, before/after pairs, lexed source files,
relational facts, annotation sidecars, and simple ASTs into workspace triples.

Naming scheme (deterministic, collision-free, readable in dumps):
  instance nodes     <tag>:<position>          ex1.before:0
  platonic facts     <tag>:p<position>
  adjacency facts    <tag>:n<position>         links position to position+1
  string/file node   <tag>
  membership fact    <tag>:members             one node, one triple per lexeme
  pair-link fact     <tag>:pair
  platonic letters   Letter:<char>
  platonic tokens    Is"<token>"

This module also generates the per-letter rule families: successor notation,
same-symbol notation, and the letter-exclusivity consistency rules.
"""
from __future__ import annotations

from typing import Iterable, Sequence

from .rules import Rule, make_rule
from .structure import NodeId
from .workspace import Workspace

DEFAULT_ALPHABET = "abcdefghijklmnopqrstuvwxyz"

# Relation slot nodes shared by the letter and lexeme schemas.
NEXT_TO_LEFT = "NextToLeft"
NEXT_TO_RIGHT = "NextToRight"
PREDECESSOR = "Predecessor"
SUCCESSOR = "Successor"
SAME_AS = "SameAs"
PAIR_BEFORE = "PairBefore"
PAIR_AFTER = "PairAfter"
FILE = "File"
FILE_MEMBER = "FileMember"

# Single-character tokens the lexer always splits off.
PUNCTUATION = set("=.,(){}[];*+-/<>")


class EncodeError(Exception):
    pass


def letter_platonic(c: str) -> str:
    return f"Letter:{c}"


def token_platonic(tok: str) -> str:
    return f'Is"{tok}"'


def token_of_platonic(name: str) -> str | None:
    """Inverse of the platonic naming; None for non-platonic nodes."""
    if name.startswith("Letter:") and len(name) == len("Letter:") + 1:
        return name[len("Letter:"):]
    if name.startswith('Is"') and name.endswith('"'):
        return name[3:-1]
    return None


# -- generic relational encoding ------------------------------------------------


def encode_relational(ws: Workspace, objects: Sequence[str],
                      relations: dict[str, object],
                      facts: Sequence[tuple]) -> list[NodeId]:
    """Encode plain relational facts: one fact node plus one triple per argument.

    `relations` maps a relation name to either an arity (slots named 1..n) or a
    list of slot names.  Each fact is (relation, args) with positional args, or
    (relation, {slot: value-or-values}) for named and partial facts; a third
    element names the fact node, which lets a partial fact be extended later.
    """
    ts = ws.ts
    for o in objects:
        ts.intern_node(o)
    slot_names: dict[str, list[str]] = {}
    for rel, spec in relations.items():
        names = [str(i) for i in range(1, spec + 1)] if isinstance(spec, int) else list(spec)
        ws.declare_relation(rel, names)
        slot_names[rel] = names
    added = []
    counters: dict[str, int] = {}
    for entry in facts:
        if len(entry) == 3:
            rel, args, fname = entry
        else:
            rel, args = entry
            counters[rel] = counters.get(rel, 0) + 1
            fname = f"{rel}:f{counters[rel]}"
        if rel not in slot_names:
            raise EncodeError(f"undeclared relation {rel!r}")
        slots = slot_names[rel]
        if isinstance(args, dict):
            pairs = []
            for slot, vals in args.items():
                if slot not in slots:
                    raise EncodeError(f"relation {rel!r} has no slot {slot!r}")
                for v in (vals if isinstance(vals, (list, tuple)) else [vals]):
                    pairs.append((v, f"{rel}.{slot}"))
        else:
            if len(args) != len(slots):
                raise EncodeError(
                    f"arity mismatch for {rel!r}: got {len(args)}, want {len(slots)}")
            pairs = [(v, f"{rel}.{slot}") for v, slot in zip(args, slots)]
        fnode = ts.intern_node(fname)
        for v, slot_node in pairs:
            if v not in ts.nodes:
                raise EncodeError(f"fact argument {v!r} is not an object")
            ts.add_fact(fnode, v, slot_node)
        added.append(fnode)
    return added


# -- letter strings ---------------------------------------------------------------


def encode_letter_string(ws: Workspace, s: str, tag: str,
                         alphabet: str = DEFAULT_ALPHABET,
                         instance: str | None = None,
                         side: str | None = None) -> list[NodeId]:
    """Encode a string: per-letter instances with platonic facts, an adjacency
    fact per neighbouring pair, and the (initially unconnected) successor slots.
    """
    ts = ws.ts
    instance = instance if instance is not None else tag
    for slot in (NEXT_TO_LEFT, NEXT_TO_RIGHT, PREDECESSOR, SUCCESSOR, SAME_AS):
        ts.intern_node(slot)
    container = ts.intern_node(tag)
    ws.set_tag(container, instance, side)
    ws.note_instance(instance, side)
    out: list[NodeId] = []
    for i, ch in enumerate(s):
        if ch not in alphabet:
            raise EncodeError(f"character {ch!r} outside the alphabet")
        node = ts.intern_node(f"{tag}:{i}")
        ws.set_tag(node, instance, side)
        ts.intern_node(letter_platonic(ch))
        pfact = ts.intern_node(f"{tag}:p{i}")
        ws.set_tag(pfact, instance, side)
        ts.add_fact(pfact, node, letter_platonic(ch))
        if i > 0:
            adj = ts.intern_node(f"{tag}:n{i - 1}")
            ws.set_tag(adj, instance, side)
            ts.add_fact(adj, out[-1], NEXT_TO_LEFT)
            ts.add_fact(adj, node, NEXT_TO_RIGHT)
        out.append(node)
    return out


# -- lexed source files ------------------------------------------------------------


def tokenize(text: str) -> list[str]:
    """Whitespace split, with the fixed punctuation set as one-char tokens."""
    out: list[str] = []
    word = []
    for ch in text:
        if ch.isspace() or ch in PUNCTUATION:
            if word:
                out.append("".join(word))
                word = []
            if ch in PUNCTUATION:
                out.append(ch)
        else:
            word.append(ch)
    if word:
        out.append("".join(word))
    return out


def lex_source(ws: Workspace, text: str, file_name: str,
               token_table: Sequence[dict] | None = None,
               instance: str | None = None,
               side: str | None = None) -> list[NodeId]:
    """Lexically encode a source file as in the code schema: a file node, one
    lexeme node per token with a platonic fact, adjacency facts, and a single
    membership fact node tying the file and every lexeme together.

    `token_table` optionally supplies semantic facts: each entry is
    {"slots": {slot-name: token-index, ...}}, encoded as one fact node.
    """
    ts = ws.ts
    for slot in (NEXT_TO_LEFT, NEXT_TO_RIGHT, FILE, FILE_MEMBER, SAME_AS):
        ts.intern_node(slot)
    fnode = ts.intern_node(file_name)
    ws.set_tag(fnode, instance, side)
    ws.note_instance(instance if instance is not None else file_name, side)
    tokens = tokenize(text)
    lexemes: list[NodeId] = []
    if tokens:
        member = ts.intern_node(f"{file_name}:members")
        ws.set_tag(member, instance, side)
        ts.add_fact(member, fnode, FILE)
    for i, tok in enumerate(tokens):
        node = ts.intern_node(f"{file_name}:{i}")
        ws.set_tag(node, instance, side)
        ts.intern_node(token_platonic(tok))
        pfact = ts.intern_node(f"{file_name}:p{i}")
        ws.set_tag(pfact, instance, side)
        ts.add_fact(pfact, node, token_platonic(tok))
        ts.add_fact(member, node, FILE_MEMBER)
        if i > 0:
            adj = ts.intern_node(f"{file_name}:n{i - 1}")
            ws.set_tag(adj, instance, side)
            ts.add_fact(adj, lexemes[-1], NEXT_TO_LEFT)
            ts.add_fact(adj, node, NEXT_TO_RIGHT)
        lexemes.append(node)
    for k, entry in enumerate(token_table or ()):
        sem = ts.intern_node(f"{file_name}:sem{k}")
        ws.set_tag(sem, instance, side)
        for slot, idx in sorted(entry["slots"].items()):
            ts.add_fact(sem, lexemes[idx], ts.intern_node(slot))
    return lexemes


# -- before/after pairs --------------------------------------------------------------


def encode_pair(ws: Workspace, before, after, tag: str, kind: str = "letters",
                alphabet: str = DEFAULT_ALPHABET) -> None:
    """Encode a transformation pair: both sides plus one pair-link fact node.

    `after` may be None (a prompt): its side is encoded empty so the pair link
    still exists.  kind="letters" treats the sides as letter strings,
    kind="tokens" lexes them as source text.
    """
    ts = ws.ts
    before_tag, after_tag = f"{tag}.before", f"{tag}.after"
    if kind == "letters":
        encode_letter_string(ws, before, before_tag, alphabet, instance=tag, side="before")
        encode_letter_string(ws, after or "", after_tag, alphabet, instance=tag, side="after")
    elif kind == "tokens":
        lex_source(ws, before, before_tag, instance=tag, side="before")
        lex_source(ws, after or "", after_tag, instance=tag, side="after")
    else:
        raise EncodeError(f"unknown pair kind {kind!r}")
    for slot in (PAIR_BEFORE, PAIR_AFTER):
        ts.intern_node(slot)
    pair = ts.intern_node(f"{tag}:pair")
    ws.set_tag(pair, tag, None)
    ts.add_fact(pair, before_tag, PAIR_BEFORE)
    ts.add_fact(pair, after_tag, PAIR_AFTER)


# -- annotation sidecars ------------------------------------------------------------


def ingest_annotations(ws: Workspace, data) -> list[NodeId]:
    """Add externally produced facts (program analysis, sentiment marks).

    Accepts either the bare list form
        [{"relation": name, "args": [{"file": f, "index": i} | {"node": n}, ...]}, ...]
    with all relations already declared, or an object
        {"relations": {name: [slot, ...]}, "facts": [...]}
    that declares its relations inline.  Fact nodes are named from their
    arguments, so re-ingestion is a no-op.
    """
    ts = ws.ts
    if isinstance(data, dict):
        for rel, slots in sorted(data.get("relations", {}).items()):
            ws.declare_relation(rel, list(slots))
        entries = data.get("facts", [])
    else:
        entries = data
    added = []
    for entry in entries:
        rel = entry["relation"]
        if rel not in ws.relations:
            raise EncodeError(f"undeclared relation {rel!r}")
        slots = ws.relations[rel]
        args = entry["args"]
        if len(args) != len(slots):
            raise EncodeError(f"arity mismatch for {rel!r}")
        arg_nodes = []
        for ref in args:
            if "node" in ref:
                node = ref["node"]
            else:
                node = f"{ref['file']}:{ref['index']}"
            if node not in ts.nodes:
                raise EncodeError(f"annotation references unknown node {node!r}")
            arg_nodes.append(node)
        fname = ts.intern_node(f"ann:{rel}({','.join(arg_nodes)})")
        insts = {ws.instance_of(n) for n in arg_nodes} - {None}
        inst = insts.pop() if len(insts) == 1 else None
        sides = {ws.side_of(n) for n in arg_nodes} - {None}
        ws.set_tag(fname, inst, sides.pop() if len(sides) == 1 else None)
        for node, slot in zip(arg_nodes, slots):
            ts.add_fact(fname, node, slot)
        added.append(fname)
    return added


# -- simple ASTs -----------------------------------------------------------------------


def encode_ast(ws: Workspace, tree, tag: str) -> list[NodeId]:
    """Encode a role-labelled AST: one fact node per production, with the head
    child keyed by the production type and other children keyed by their role.
    Leaves outside the head role get identifier facts.
    """
    ts = ws.ts
    facts_added: list[NodeId] = []

    def rep_of(node, path: str, role: str) -> NodeId:
        if isinstance(node, str):
            leaf = ts.intern_node(f"{tag}:ast:{path}")
            ws.set_tag(leaf, tag, None)
            if role != "head":
                ident = ts.intern_node(f"{tag}:astf:{path}")
                ws.set_tag(ident, tag, None)
                ts.add_fact(ident, leaf, ts.intern_node(f'Identifier"{node}"'))
                facts_added.append(ident)
            return leaf
        if not isinstance(node, dict) or "type" not in node or "children" not in node:
            raise EncodeError(f"malformed AST node at {path!r}")
        fact = ts.intern_node(f"{tag}:astf:{path}")
        ws.set_tag(fact, tag, None)
        facts_added.append(fact)
        reps = {}
        for child_role, child in sorted(node["children"].items()):
            reps[child_role] = rep_of(child, f"{path}.{child_role}", child_role)
        mine = reps.get("head", fact)
        for child_role, crep in sorted(reps.items()):
            key = node["type"] if child_role == "head" else child_role
            ts.add_fact(fact, crep, ts.intern_node(key))
        return mine

    rep_of(tree, "0", "root")
    return facts_added


# -- generated rule families --------------------------------------------------------


def gen_successor_rules(alphabet: str = DEFAULT_ALPHABET) -> list[Rule]:
    """One successor-notating rule per adjacent alphabet pair (no wraparound)."""
    if len(alphabet) < 2:
        raise EncodeError("alphabet needs at least two symbols")
    rules = []
    for c1, c2 in zip(alphabet, alphabet[1:]):
        rules.append(make_rule(
            f"successor_{c1}{c2}",
            var=["v1", "v2", "vf1", "vf2"],
            const=[letter_platonic(c1), letter_platonic(c2), PREDECESSOR, SUCCESSOR],
            require=[("vf1", "v1", letter_platonic(c1)),
                     ("vf2", "v2", letter_platonic(c2))],
            create=["nf3"],
            add=[("nf3", "v1", PREDECESSOR), ("nf3", "v2", SUCCESSOR)],
        ))
    return rules


def _same_rule(name: str, platonic: str) -> Rule:
    return make_rule(
        name,
        var=["v1", "v2", "vf1", "vf2"],
        const=[platonic, SAME_AS],
        require=[("vf1", "v1", platonic), ("vf2", "v2", platonic)],
        create=["m"],
        add=[("m", "v1", SAME_AS), ("m", "v2", SAME_AS)],
        sym=[(("v1", "vf1"), ("v2", "vf2"))],
        distinct=[("v1", "v2")],
    )


def gen_same_letter_rules(alphabet: str = DEFAULT_ALPHABET) -> list[Rule]:
    """Notate pairs of distinct instances of the same platonic letter."""
    return [_same_rule(f"same_letter_{c}", letter_platonic(c)) for c in alphabet]


def gen_same_token_rules(ws: Workspace, include_punctuation: bool = False) -> list[Rule]:
    """Same-symbol rules for every platonic token currently in the workspace.

    Punctuation is skipped by default: its equality is everywhere and carries
    no signal, and the pairs would swamp the search with useless notation.
    """
    rules = []
    for name in sorted(ws.ts.nodes):
        tok = token_of_platonic(name)
        if tok is None or not name.startswith("Is"):
            continue
        if not include_punctuation and tok in PUNCTUATION:
            continue
        rules.append(_same_rule(f"same_token_{tok}", name))
    return rules


def gen_letter_exclusivity_rules(alphabet: str = DEFAULT_ALPHABET) -> list[Rule]:
    """Consistency rules: no symbol is an instance of two different letters."""
    rules = []
    for i, c1 in enumerate(alphabet):
        for c2 in alphabet[i + 1:]:
            rules.append(make_rule(
                f"exclusive_{c1}{c2}",
                var=["v", "f1", "f2"],
                const=[letter_platonic(c1), letter_platonic(c2)],
                require=[("f1", "v", letter_platonic(c1)),
                         ("f2", "v", letter_platonic(c2))],
                consistency=True,
            ))
    return rules


def decode_letters(ws: Workspace, nodes: Iterable[NodeId]) -> str:
    """Read back the letters of encoded instance nodes via their platonic facts."""
    out = []
    for node in nodes:
        letters = [token_of_platonic(f.key) for f in ws.ts.query((None, node, None))
                   if token_of_platonic(f.key) is not None]
        if len(set(letters)) != 1:
            raise EncodeError(f"node {node!r} has no unique platonic symbol")
        out.append(letters[0])
    return "".join(out)
