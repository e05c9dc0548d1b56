"""AST node types shared by the four structured query languages.

Leaves carry a reference kind: tables/classes/intents (T), columns/relations/
slots (C), entities (E) and literal values (V).  Skeletons reuse the same tree
shapes with :class:`Placeholder` standing in for any leaf, so one grammar
serves both concrete queries and placeholder templates.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Union

SQL, SEXPR, SPARQL, TOP = "sql", "sexpr", "sparql", "top"
LANGS = (SQL, SEXPR, SPARQL, TOP)

PLACEHOLDER_RE = re.compile(r"\[(T|C|E|V)(\d*)\]")


@dataclass(frozen=True)
class Placeholder:
    kind: str  # T, C, E or V
    index: int  # 1-based; dense per kind in canonical skeletons

    @property
    def token(self) -> str:
        return f"[{self.kind}{self.index}]"


@dataclass(frozen=True)
class TableRef:
    """A phi reference: db table or kg class."""

    name: str


@dataclass(frozen=True)
class ColumnRef:
    """A psi reference with its owning phi (db column / kg relation / ds slot).

    For dialogue-state slots that fail schema resolution, ``table`` is empty;
    such refs still skeletonize as C but carry no provenance.
    """

    table: str
    name: str

    @property
    def full_name(self) -> str:
        return f"{self.table}.{self.name}" if self.table else self.name


@dataclass(frozen=True)
class IntentRef:
    """A dialogue-state intent token: group phi plus optional psi suffix.

    ``IN:GET_MESSAGE`` resolves to phi ``in:get`` with suffix ``message``;
    ``IN:SEND_MESSAGE`` is the bare phi ``in:send_message``.
    """

    phi: str
    suffix: str | None = None

    @property
    def token(self) -> str:
        name = self.phi if self.suffix is None else f"{self.phi}_{self.suffix}"
        return name.upper()


@dataclass(frozen=True)
class EntityRef:
    entity_id: str


@dataclass(frozen=True)
class Literal:
    value: Union[str, int, float]


@dataclass(frozen=True)
class Star:
    """The ``*`` select item."""


STAR = Star()

LeafRef = Union[TableRef, ColumnRef, IntentRef, EntityRef, Literal]
MaybePlaced = Union[LeafRef, Placeholder]

KIND_OF_LEAF = {
    TableRef: "T",
    IntentRef: "T",
    ColumnRef: "C",
    EntityRef: "E",
    Literal: "V",
}


# --- sql ---------------------------------------------------------------------


@dataclass(frozen=True)
class AggExpr:
    func: str  # count, sum, avg, min, max
    arg: Union[ColumnRef, Placeholder, Star]


@dataclass(frozen=True)
class Comparison:
    left: Union[ColumnRef, Placeholder]
    op: str  # =, !=, <, >, <=, >=
    right: MaybePlaced


@dataclass(frozen=True)
class InList:
    left: Union[ColumnRef, Placeholder]
    values: tuple[Union[Literal, Placeholder], ...]


@dataclass(frozen=True)
class InSubquery:
    left: Union[ColumnRef, Placeholder]
    select: "SqlSelect"


@dataclass(frozen=True)
class BoolOp:
    op: str  # and, or
    left: "SqlCondition"
    right: "SqlCondition"


SqlCondition = Union[Comparison, InList, InSubquery, BoolOp]


@dataclass(frozen=True)
class Join:
    table: Union[TableRef, Placeholder]
    left: Union[ColumnRef, Placeholder]
    right: Union[ColumnRef, Placeholder]


@dataclass(frozen=True)
class OrderItem:
    expr: Union[ColumnRef, AggExpr, Placeholder]
    desc: bool = False


@dataclass(frozen=True)
class SqlSelect:
    items: tuple[Union[ColumnRef, AggExpr, Placeholder, Star, Literal], ...]
    table: Union[TableRef, Placeholder, None]  # None for constant-only selects
    joins: tuple[Join, ...] = ()
    where: SqlCondition | None = None
    group_by: tuple[Union[ColumnRef, Placeholder], ...] = ()
    order_by: tuple[OrderItem, ...] = ()
    limit: int | None = None


# --- s-expression ------------------------------------------------------------

SEXPR_OPS = ("AND", "JOIN", "R", "ARGMAX", "ARGMIN", "COUNT")


@dataclass(frozen=True)
class SexprNode:
    op: str
    args: tuple[Union["SexprNode", MaybePlaced], ...]


SexprExpr = Union[SexprNode, TableRef, ColumnRef, EntityRef, Literal, Placeholder]


# --- sparql ------------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str

    @property
    def token(self) -> str:
        return f"?{self.name}"


@dataclass(frozen=True)
class Triple:
    subject: Union[Var, EntityRef, Placeholder]
    predicate: Union[ColumnRef, Placeholder]
    object: Union[Var, EntityRef, Literal, Placeholder]


@dataclass(frozen=True)
class FilterCond:
    left: Var
    op: str
    right: Union[Literal, Placeholder]


@dataclass(frozen=True)
class SparqlQuery:
    prefixes: tuple[tuple[str, str], ...]  # (name, iri) in declaration order
    select: tuple[Var, ...]
    distinct: bool
    triples: tuple[Triple, ...]
    filters: tuple[FilterCond, ...] = ()


# --- top ---------------------------------------------------------------------


@dataclass(frozen=True)
class SlotRef:
    """A slot token; ``table`` is the owning intent phi when resolvable."""

    table: str | None
    name: str

    @property
    def token(self) -> str:
        return f"SL:{self.name.upper()}"


KIND_OF_LEAF[SlotRef] = "C"


@dataclass(frozen=True)
class TopSlot:
    ref: Union[SlotRef, Placeholder]
    span: Union[Literal, Placeholder]


@dataclass(frozen=True)
class TopIntent:
    ref: Union[IntentRef, Placeholder]
    children: tuple[Union["TopIntent", TopSlot], ...] = ()


QueryAst = Union[SqlSelect, SexprExpr, SparqlQuery, TopIntent]


def lang_of(ast: QueryAst) -> str:
    if isinstance(ast, SqlSelect):
        return SQL
    if isinstance(ast, SparqlQuery):
        return SPARQL
    if isinstance(ast, TopIntent):
        return TOP
    return SEXPR


def iter_leaves(node) -> Iterator[MaybePlaced]:
    """Yield reference/literal/placeholder leaves in deterministic preorder."""
    if isinstance(node, (TableRef, ColumnRef, IntentRef, EntityRef, Literal, Placeholder)):
        yield node
    elif isinstance(node, Star):
        return
    elif isinstance(node, SqlSelect):
        for it in node.items:
            yield from iter_leaves(it)
        if node.table is not None:
            yield from iter_leaves(node.table)
        for j in node.joins:
            yield from iter_leaves(j.table)
            yield from iter_leaves(j.left)
            yield from iter_leaves(j.right)
        if node.where is not None:
            yield from iter_leaves(node.where)
        for g in node.group_by:
            yield from iter_leaves(g)
        for o in node.order_by:
            yield from iter_leaves(o.expr)
    elif isinstance(node, AggExpr):
        yield from iter_leaves(node.arg)
    elif isinstance(node, Comparison):
        yield from iter_leaves(node.left)
        yield from iter_leaves(node.right)
    elif isinstance(node, InList):
        yield from iter_leaves(node.left)
        for v in node.values:
            yield from iter_leaves(v)
    elif isinstance(node, InSubquery):
        yield from iter_leaves(node.left)
        yield from iter_leaves(node.select)
    elif isinstance(node, BoolOp):
        yield from iter_leaves(node.left)
        yield from iter_leaves(node.right)
    elif isinstance(node, SexprNode):
        for a in node.args:
            yield from iter_leaves(a)
    elif isinstance(node, SparqlQuery):
        for t in node.triples:
            yield from iter_leaves(t.subject)
            yield from iter_leaves(t.predicate)
            yield from iter_leaves(t.object)
        for f in node.filters:
            yield from iter_leaves(f.right)
    elif isinstance(node, Var):
        return
    elif isinstance(node, TopIntent):
        yield from iter_leaves(node.ref)
        for c in node.children:
            yield from iter_leaves(c)
    elif isinstance(node, TopSlot):
        yield from iter_leaves(node.ref)
        yield from iter_leaves(node.span)
    elif isinstance(node, SlotRef):
        yield node
    else:
        raise TypeError(f"not an AST node: {node!r}")


def node_count(node) -> int:
    """Count AST nodes, leaves included (used by composition growth checks)."""
    n = 1
    if isinstance(node, SqlSelect):
        n += sum(node_count(i) for i in node.items)
        if node.table is not None:
            n += node_count(node.table)
        for j in node.joins:
            n += node_count(j.table) + node_count(j.left) + node_count(j.right)
        if node.where is not None:
            n += node_count(node.where)
        n += sum(node_count(g) for g in node.group_by)
        n += sum(node_count(o.expr) for o in node.order_by)
    elif isinstance(node, AggExpr):
        n += node_count(node.arg)
    elif isinstance(node, Comparison):
        n += node_count(node.left) + node_count(node.right)
    elif isinstance(node, InList):
        n += node_count(node.left) + sum(node_count(v) for v in node.values)
    elif isinstance(node, InSubquery):
        n += node_count(node.left) + node_count(node.select)
    elif isinstance(node, BoolOp):
        n += node_count(node.left) + node_count(node.right)
    elif isinstance(node, SexprNode):
        n += sum(node_count(a) for a in node.args)
    elif isinstance(node, SparqlQuery):
        for t in node.triples:
            n += node_count(t.subject) + node_count(t.predicate) + node_count(t.object)
        for f in node.filters:
            n += 1 + node_count(f.right)
    elif isinstance(node, TopIntent):
        n += node_count(node.ref) + sum(node_count(c) for c in node.children)
    elif isinstance(node, TopSlot):
        n += node_count(node.ref) + node_count(node.span)
    return n
