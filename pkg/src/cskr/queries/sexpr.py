"""Parser and renderer for the s-expression logical form subset.

Operators: AND, JOIN, R, ARGMAX, ARGMIN, COUNT.  Leaves resolve against a kg
schema: class names, full relation names (``domain.name``), entity ids, or
numeric literals.  Non-numeric atoms that match nothing raise an unresolved
reference error -- the subset has no bare string literals.
"""

from __future__ import annotations

import re

from ..errors import QuerySyntaxError, UnresolvedReferenceError
from ..schema import SourceSchema
from .nodes import (
    PLACEHOLDER_RE,
    SEXPR_OPS,
    ColumnRef,
    EntityRef,
    Literal,
    Placeholder,
    SexprExpr,
    SexprNode,
    TableRef,
)

_ARITY = {"AND": (2, None), "JOIN": (2, 2), "R": (1, 1),
          "ARGMAX": (2, 2), "ARGMIN": (2, 2), "COUNT": (1, 1)}

_NUM_RE = re.compile(r"-?\d+(\.\d+)?\Z")


def _tokenize(text: str) -> list[str]:
    return text.replace("(", " ( ").replace(")", " ) ").split()


class _Resolver:
    def __init__(self, schema: SourceSchema | None, skeleton: bool):
        self.skeleton = skeleton
        self.classes: set[str] = set()
        self.relations: dict[str, ColumnRef] = {}
        self.entities: set[str] = set()
        if schema is not None:
            self.classes = set(schema.classes)
            self.relations = {r.full_name: ColumnRef(r.domain, r.name) for r in schema.relations}
            self.entities = {e.entity_id for e in schema.entities}

    def atom(self, token: str):
        m = PLACEHOLDER_RE.fullmatch(token)
        if m:
            if not self.skeleton:
                raise QuerySyntaxError(f"placeholder {token!r} in a concrete query")
            return Placeholder(m.group(1), int(m.group(2)) if m.group(2) else 0)
        if self.skeleton:
            raise QuerySyntaxError(f"concrete token {token!r} in skeleton text")
        if _NUM_RE.match(token):
            return Literal(float(token) if "." in token else int(token))
        if token in self.classes:
            return TableRef(token)
        if token in self.relations:
            return self.relations[token]
        if token in self.entities:
            return EntityRef(token)
        raise UnresolvedReferenceError(f"unresolved s-expression atom: {token!r}")


def parse_sexpr(text: str, schema: SourceSchema | None = None, *, skeleton: bool = False) -> SexprExpr:
    if not text.strip():
        raise QuerySyntaxError("empty query")
    tokens = _tokenize(text)
    resolver = _Resolver(None if skeleton else schema, skeleton)
    pos = 0

    def parse_expr():
        nonlocal pos
        if pos >= len(tokens):
            raise QuerySyntaxError("unexpected end of s-expression")
        tok = tokens[pos]
        if tok == "(":
            pos += 1
            if pos >= len(tokens):
                raise QuerySyntaxError("unexpected end after '('")
            op = tokens[pos]
            if op not in SEXPR_OPS:
                raise QuerySyntaxError(f"unknown s-expression operator: {op!r}")
            pos += 1
            args = []
            while pos < len(tokens) and tokens[pos] != ")":
                args.append(parse_expr())
            if pos >= len(tokens):
                raise QuerySyntaxError("missing ')'")
            pos += 1
            lo, hi = _ARITY[op]
            if len(args) < lo or (hi is not None and len(args) > hi):
                raise QuerySyntaxError(f"{op} takes {lo}..{hi or 'n'} args, got {len(args)}")
            return SexprNode(op, tuple(args))
        if tok == ")":
            raise QuerySyntaxError("unexpected ')'")
        pos += 1
        return resolver.atom(tok)

    expr = parse_expr()
    if pos != len(tokens):
        raise QuerySyntaxError(f"trailing input after s-expression: {tokens[pos]!r}")
    return expr


def render_sexpr(expr: SexprExpr) -> str:
    if isinstance(expr, SexprNode):
        inner = " ".join(render_sexpr(a) for a in expr.args)
        return f"({expr.op} {inner})"
    if isinstance(expr, Placeholder):
        return expr.token
    if isinstance(expr, TableRef):
        return expr.name
    if isinstance(expr, ColumnRef):
        return expr.full_name
    if isinstance(expr, EntityRef):
        return expr.entity_id
    if isinstance(expr, Literal):
        v = expr.value
        if isinstance(v, float) and v.is_integer():
            return str(int(v))
        return str(v)
    raise TypeError(f"not an s-expression node: {expr!r}")
