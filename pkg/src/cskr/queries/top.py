"""Parser and renderer for task-oriented-parsing (TOP) trees.

Serialized form: ``[IN:GET_MESSAGE [SL:CONTACT Angelika Kratzer ] ]`` with
space-separated tokens and ``]`` as its own token.  Intent tokens resolve
against a dialogue-state schema: ``IN:GET_MESSAGE`` is intent group ``in:get``
plus suffix ``message``; ``IN:SEND_MESSAGE`` is the bare group
``in:send_message``.  Slot names resolve within the enclosing intent's group
when possible; unresolvable slot names stay as free slots rather than failing
the parse, since benchmark gold trees routinely use slots outside the
published group lists.
"""

from __future__ import annotations

from ..errors import QuerySyntaxError, UnresolvedReferenceError
from ..schema import SourceSchema
from .nodes import (
    PLACEHOLDER_RE,
    IntentRef,
    Literal,
    Placeholder,
    SlotRef,
    TopIntent,
    TopSlot,
)


def _resolve_intent(token: str, schema: SourceSchema) -> IntentRef:
    name = token.lower()
    best: IntentRef | None = None
    best_len = -1
    for intent in schema.intents:
        if name == intent.name and len(intent.name) > best_len:
            best, best_len = IntentRef(intent.name, None), len(intent.name)
        elif name.startswith(intent.name + "_"):
            suffix = name[len(intent.name) + 1:]
            if suffix in intent.slots and len(intent.name) > best_len:
                best, best_len = IntentRef(intent.name, suffix), len(intent.name)
    if best is None:
        raise UnresolvedReferenceError(f"unresolved intent token: {token!r}")
    return best


def _resolve_slot(token: str, enclosing_phi: str | None, schema: SourceSchema | None) -> SlotRef:
    name = token.lower()
    if schema is not None and enclosing_phi is not None:
        for intent in schema.intents:
            if intent.name == enclosing_phi and name in intent.slots:
                return SlotRef(enclosing_phi, name)
    return SlotRef(None, name)


def parse_top(text: str, schema: SourceSchema | None = None, *, skeleton: bool = False) -> TopIntent:
    if not text.strip():
        raise QuerySyntaxError("empty query")
    tokens = text.split()
    pos = 0

    def placeholder_of(tok: str, expected: str) -> Placeholder:
        m = PLACEHOLDER_RE.fullmatch(tok)
        if not m:
            return None  # type: ignore[return-value]
        if not skeleton:
            raise QuerySyntaxError(f"placeholder {tok!r} in a concrete query")
        p = Placeholder(m.group(1), int(m.group(2)) if m.group(2) else 0)
        if p.kind != expected:
            raise QuerySyntaxError(f"placeholder kind {p.kind} invalid here, need {expected}")
        return p

    def parse_node(enclosing_phi: str | None):
        nonlocal pos
        opener = tokens[pos]
        if not opener.startswith("["):
            raise QuerySyntaxError(f"expected '[' node, got {opener!r}", pos)
        pos += 1
        head = opener[1:]
        if not head:
            raise QuerySyntaxError("empty node token", pos)
        p = placeholder_of(head, "T") if head.startswith("[T") else None
        if p is not None or head.upper().startswith("IN:"):
            if p is not None:
                ref: IntentRef | Placeholder = p
                phi = None
            elif skeleton:
                raise QuerySyntaxError(f"concrete intent {head!r} in skeleton text")
            elif schema is not None:
                ref = _resolve_intent(head, schema)
                phi = ref.phi
            else:
                # schema-free parse keeps the token as a bare-phi reference
                ref = IntentRef(head.lower(), None)
                phi = None
            children = []
            while pos < len(tokens) and tokens[pos] != "]":
                if not tokens[pos].startswith("["):
                    raise QuerySyntaxError(f"loose token {tokens[pos]!r} inside intent", pos)
                children.append(parse_node(phi))
            if pos >= len(tokens):
                raise QuerySyntaxError("unbalanced brackets: missing ']'")
            pos += 1
            return TopIntent(ref=ref, children=tuple(children))
        # slot node
        sp = placeholder_of(head, "C") if head.startswith("[C") else None
        if sp is None and not head.upper().startswith("SL:"):
            raise QuerySyntaxError(f"expected IN:/SL: token, got {head!r}", pos)
        if sp is None and skeleton:
            raise QuerySyntaxError(f"concrete slot {head!r} in skeleton text")
        slot_ref = sp if sp is not None else _resolve_slot(head[3:], enclosing_phi, schema)
        words: list[str] = []
        span: Placeholder | None = None
        while pos < len(tokens) and tokens[pos] != "]":
            tok = tokens[pos]
            if tok.startswith("["):
                vp = placeholder_of(tok, "V")
                if vp is None:
                    raise QuerySyntaxError(f"nested node {tok!r} inside slot", pos)
                span = vp
            else:
                if skeleton:
                    raise QuerySyntaxError(f"concrete span word {tok!r} in skeleton text")
                words.append(tok)
            pos += 1
        if pos >= len(tokens):
            raise QuerySyntaxError("unbalanced brackets: missing ']'")
        pos += 1
        return TopSlot(ref=slot_ref, span=span if span is not None else Literal(" ".join(words)))

    root = parse_node(None)
    if pos != len(tokens):
        raise QuerySyntaxError(f"trailing input {tokens[pos]!r}", pos)
    if not isinstance(root, TopIntent):
        raise QuerySyntaxError("root must be an intent node")
    return root


def _node_tokens(node) -> list[str]:
    if isinstance(node, TopIntent):
        # IntentRef.token already carries the upper-cased "IN:" prefix since
        # group names follow the "in:..." convention
        out = [f"[{node.ref.token}"]
        for c in node.children:
            out.extend(_node_tokens(c))
        out.append("]")
        return out
    if isinstance(node, TopSlot):
        out = [f"[{node.ref.token}"]
        if isinstance(node.span, Placeholder):
            out.append(node.span.token)
        elif node.span.value != "":
            out.extend(str(node.span.value).split())
        out.append("]")
        return out
    raise TypeError(f"not a top node: {node!r}")


def render_top(ast: TopIntent) -> str:
    return " ".join(_node_tokens(ast))
