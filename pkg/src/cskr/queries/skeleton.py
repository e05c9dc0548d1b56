"""Query skeletons: placeholder abstraction and schema instantiation.

A skeleton is a query tree whose schema leaves are replaced by typed
placeholders: tables/classes/intents become [Ti], columns/relations/slots
[Ci], entities [Ei] and literal values [Vi].  Indices are dense per kind and
assigned by first occurrence in preorder; occurrences of the same source
element share one placeholder.

``fill_schema`` inverts the abstraction deterministically: given a schema, an
optional data store and a seed, every placeholder binds to a distinct concrete
element of the right kind, with columns attached to the tables already bound
in their scope for sql and s-expressions.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace

from ..errors import CapacityError, QuerySyntaxError
from ..schema import SourceSchema
from .nodes import (
    KIND_OF_LEAF,
    AggExpr,
    BoolOp,
    ColumnRef,
    Comparison,
    EntityRef,
    FilterCond,
    InList,
    InSubquery,
    IntentRef,
    Join,
    Literal,
    OrderItem,
    Placeholder,
    SexprNode,
    SlotRef,
    SparqlQuery,
    SqlSelect,
    Star,
    TableRef,
    TopIntent,
    TopSlot,
    Triple,
    Var,
    iter_leaves,
    lang_of,
    node_count,
)
from .sexpr import parse_sexpr, render_sexpr
from .sparql import parse_sparql, render_sparql
from .sql import parse_sql, render_sql
from .top import parse_top, render_top

_LEAF_TYPES = (TableRef, ColumnRef, IntentRef, EntityRef, Literal, SlotRef, Placeholder)


def _map_leaves(node, fn):
    """Rebuild a tree applying ``fn`` to every reference/literal leaf."""
    if isinstance(node, _LEAF_TYPES):
        return fn(node)
    if isinstance(node, (Star, Var)) or node is None:
        return node
    if isinstance(node, SqlSelect):
        return replace(
            node,
            items=tuple(_map_leaves(i, fn) for i in node.items),
            table=_map_leaves(node.table, fn) if node.table is not None else None,
            joins=tuple(
                Join(_map_leaves(j.table, fn), _map_leaves(j.left, fn), _map_leaves(j.right, fn))
                for j in node.joins
            ),
            where=_map_leaves(node.where, fn),
            group_by=tuple(_map_leaves(g, fn) for g in node.group_by),
            order_by=tuple(OrderItem(_map_leaves(o.expr, fn), o.desc) for o in node.order_by),
        )
    if isinstance(node, AggExpr):
        return AggExpr(node.func, _map_leaves(node.arg, fn))
    if isinstance(node, Comparison):
        return Comparison(_map_leaves(node.left, fn), node.op, _map_leaves(node.right, fn))
    if isinstance(node, InList):
        return InList(_map_leaves(node.left, fn), tuple(_map_leaves(v, fn) for v in node.values))
    if isinstance(node, InSubquery):
        return InSubquery(_map_leaves(node.left, fn), _map_leaves(node.select, fn))
    if isinstance(node, BoolOp):
        return BoolOp(node.op, _map_leaves(node.left, fn), _map_leaves(node.right, fn))
    if isinstance(node, SexprNode):
        return SexprNode(node.op, tuple(_map_leaves(a, fn) for a in node.args))
    if isinstance(node, SparqlQuery):
        return replace(
            node,
            triples=tuple(
                Triple(_map_leaves(t.subject, fn), _map_leaves(t.predicate, fn),
                       _map_leaves(t.object, fn))
                for t in node.triples
            ),
            filters=tuple(
                FilterCond(f.left, f.op, _map_leaves(f.right, fn)) for f in node.filters
            ),
        )
    if isinstance(node, TopIntent):
        return TopIntent(
            ref=_map_leaves(node.ref, fn),
            children=tuple(_map_leaves(c, fn) for c in node.children),
        )
    if isinstance(node, TopSlot):
        return TopSlot(ref=_map_leaves(node.ref, fn), span=_map_leaves(node.span, fn))
    raise TypeError(f"not an AST node: {node!r}")


def reindex_placeholders(root):
    """Renumber placeholders densely per kind by first occurrence.

    Unnumbered placeholders (index 0) never merge; numbered duplicates keep
    sharing one index.
    """
    mapping: dict[tuple[str, int], int] = {}
    counters: dict[str, int] = {}
    fresh = 0

    def assign(leaf):
        nonlocal fresh
        if not isinstance(leaf, Placeholder):
            return leaf
        if leaf.index == 0:
            fresh -= 1
            key = (leaf.kind, fresh)
        else:
            key = (leaf.kind, leaf.index)
        if key not in mapping:
            counters[leaf.kind] = counters.get(leaf.kind, 0) + 1
            mapping[key] = counters[leaf.kind]
        return Placeholder(leaf.kind, mapping[key])

    # two passes keep the walk order authoritative: first occurrence order is
    # the preorder of iter_leaves, which _map_leaves visits identically
    return _map_leaves(root, assign)


def render_skeleton_text(root) -> str:
    lang = lang_of(root)
    if lang == "sql":
        return render_sql(root, upper=True, terminator=True)
    if lang == "sparql":
        return render_sparql(root)
    if lang == "top":
        return render_top(root)
    return render_sexpr(root)


@dataclass(frozen=True)
class QuerySkeleton:
    lang: str
    root: object
    text: str

    @classmethod
    def from_root(cls, root) -> "QuerySkeleton":
        canonical = reindex_placeholders(root)
        return cls(lang=lang_of(canonical), root=canonical, text=render_skeleton_text(canonical))

    @property
    def placeholders(self) -> tuple[Placeholder, ...]:
        seen: dict[Placeholder, None] = {}
        for leaf in iter_leaves(self.root):
            if isinstance(leaf, Placeholder):
                seen.setdefault(leaf)
        return tuple(seen)

    def size(self) -> int:
        return node_count(self.root)


def skeletonize(ast) -> QuerySkeleton:
    """Abstract a concrete query into its placeholder skeleton."""
    assignment: dict[object, Placeholder] = {}
    counters: dict[str, int] = {}

    def abstract(leaf):
        if isinstance(leaf, Placeholder):
            raise QuerySyntaxError("cannot skeletonize: tree already has placeholders")
        if leaf in assignment:
            return assignment[leaf]
        kind = KIND_OF_LEAF[type(leaf)]
        counters[kind] = counters.get(kind, 0) + 1
        placeholder = Placeholder(kind, counters[kind])
        assignment[leaf] = placeholder
        return placeholder

    return QuerySkeleton.from_root(_map_leaves(ast, abstract))


def parse_skeleton(text: str, lang: str) -> QuerySkeleton:
    """Parse canonical-format skeleton text (placeholders only at leaves)."""
    parser = {"sql": parse_sql, "sexpr": parse_sexpr, "sparql": parse_sparql, "top": parse_top}
    if lang not in parser:
        raise QuerySyntaxError(f"unsupported language: {lang!r}")
    return QuerySkeleton.from_root(parser[lang](text, skeleton=True))


# --- filling -----------------------------------------------------------------


class _Filler:
    """Binds placeholders to schema elements; one rng drives all choices."""

    def __init__(self, schema: SourceSchema, store, seed: int):
        self.schema = schema
        self.store = store
        self.rng = random.Random(seed)
        self.bound: dict[Placeholder, object] = {}
        self.used: set[object] = set()
        self.literal_values: set[object] = set()
        self.v_counter = 0

    def _choose(self, placeholder: Placeholder, candidates: list, what: str):
        if placeholder in self.bound:
            return self.bound[placeholder]
        fresh = [c for c in candidates if c not in self.used]
        if not fresh:
            raise CapacityError(
                f"no unused {what} available for {placeholder.token} "
                f"(schema offers {len(candidates)})"
            )
        pick = fresh[self.rng.randrange(len(fresh))]
        self.bound[placeholder] = pick
        self.used.add(pick)
        return pick

    def fresh_literal(self, placeholder: Placeholder, pool: list) -> Literal:
        if placeholder in self.bound:
            return self.bound[placeholder]
        value = None
        for v in pool:
            if v not in self.literal_values:
                value = v
                break
        if value is None:
            # synthetic fallback; bump until distinct so round-trips hold
            self.v_counter += 1
            value = self.v_counter
            while value in self.literal_values:
                value += 1
        lit = Literal(value)
        self.bound[placeholder] = lit
        self.literal_values.add(value)
        return lit


def _store_column_values(store, table: str, column: str) -> list:
    if store is None or not hasattr(store, "tables"):
        return []
    data = store.tables.get(table)
    if data is None or column not in data.columns:
        return []
    idx = data.columns.index(column)
    seen: dict[object, None] = {}
    for row in data.rows:
        v = row[idx]
        if v is not None:
            seen.setdefault(v)
    return list(seen)


def _store_predicate_literals(store, predicate: str) -> list:
    if store is None or not hasattr(store, "triples"):
        return []
    seen: dict[object, None] = {}
    for s, p, o in store.triples:
        if p == predicate and not isinstance(o, str):
            seen.setdefault(o)
    return list(seen)


class _SqlFiller(_Filler):
    def fill(self, sel: SqlSelect) -> SqlSelect:
        if not self.schema.tables:
            raise CapacityError("schema has no tables")
        return self._select(sel)

    def _table(self, t):
        if isinstance(t, Placeholder):
            return self._choose(t, [TableRef(tb.name) for tb in self.schema.tables], "table")
        return t

    def _select(self, sel: SqlSelect) -> SqlSelect:
        table = self._table(sel.table) if sel.table is not None else None
        joins = []
        scope: list[str] = [table.name] if table is not None else []
        for j in sel.joins:
            jt = self._table(j.table)
            scope.append(jt.name)
            joins.append((jt, j.left, j.right))
        columns_by_table = {t.name: t.columns for t in self.schema.tables}
        scope_cols = [
            ColumnRef(t, c) for t in scope for c in columns_by_table.get(t, ())
        ]

        def col(c):
            if not isinstance(c, Placeholder):
                return c
            ref = self._choose(c, scope_cols, "column")
            if ref.table not in scope:
                raise CapacityError(
                    f"{c.token} reused outside the scope of table {ref.table!r}"
                )
            return ref

        def value(v, context: ColumnRef | None):
            if not isinstance(v, Placeholder):
                return v
            pool = (
                _store_column_values(self.store, context.table, context.name)
                if context is not None
                else []
            )
            return self.fresh_literal(v, pool)

        def cond(c):
            if c is None:
                return None
            if isinstance(c, BoolOp):
                return BoolOp(c.op, cond(c.left), cond(c.right))
            if isinstance(c, Comparison):
                left = col(c.left)
                if isinstance(c.right, (ColumnRef, Placeholder)) and (
                    isinstance(c.right, ColumnRef)
                    or c.right.kind == "C"
                ):
                    right = col(c.right)
                else:
                    right = value(c.right, left if isinstance(left, ColumnRef) else None)
                return Comparison(left, c.op, right)
            if isinstance(c, InList):
                left = col(c.left)
                ctx = left if isinstance(left, ColumnRef) else None
                return InList(left, tuple(value(v, ctx) for v in c.values))
            if isinstance(c, InSubquery):
                return InSubquery(col(c.left), self._select(c.select))
            raise TypeError(f"not a condition: {c!r}")

        def item(it):
            if isinstance(it, Star) or isinstance(it, Literal):
                return it
            if isinstance(it, AggExpr):
                arg = it.arg if isinstance(it.arg, Star) else col(it.arg)
                return AggExpr(it.func, arg)
            if isinstance(it, Placeholder) and it.kind == "V":
                return value(it, None)
            return col(it)

        return replace(
            sel,
            items=tuple(item(i) for i in sel.items),
            table=table,
            joins=tuple(Join(jt, col(le), col(ri)) for jt, le, ri in joins),
            where=cond(sel.where),
            group_by=tuple(col(g) for g in sel.group_by),
            order_by=tuple(OrderItem(item(o.expr), o.desc) for o in sel.order_by),
        )


class _SexprFiller(_Filler):
    def fill(self, expr):
        if not self.schema.classes:
            raise CapacityError("schema has no classes")
        self.relations = list(self.schema.relations)
        self.by_domain = {}
        self.by_range = {}
        for r in self.relations:
            self.by_domain.setdefault(r.domain, []).append(r)
            self.by_range.setdefault(r.range, []).append(r)
        return self._expr(expr, None)

    def _class(self, leaf, ctx):
        if isinstance(leaf, Placeholder):
            return self._choose(leaf, [TableRef(c) for c in self.schema.classes], "class")
        return leaf

    def _relation(self, leaf, candidates):
        if not isinstance(leaf, Placeholder):
            return leaf
        refs = [ColumnRef(r.domain, r.name) for r in candidates]
        if not any(ref not in self.used for ref in refs):
            refs = [ColumnRef(r.domain, r.name) for r in self.relations]
        return self._choose(leaf, refs, "relation")

    def _entity(self, leaf):
        if isinstance(leaf, Placeholder):
            if leaf.kind == "V":
                return self.fresh_literal(leaf, [])
            return self._choose(
                leaf, [EntityRef(e.entity_id) for e in self.schema.entities], "entity"
            )
        return leaf

    def _range_of(self, rel_ref: ColumnRef) -> str | None:
        for r in self.relations:
            if r.domain == rel_ref.table and r.name == rel_ref.name:
                return r.range
        return None

    def _expr(self, node, ctx: str | None):
        if isinstance(node, Placeholder):
            if node.kind == "T":
                return self._class(node, ctx)
            if node.kind == "E" or node.kind == "V":
                return self._entity(node)
            raise CapacityError(f"bare {node.token} is not a fillable s-expression")
        if isinstance(node, (TableRef, EntityRef, Literal, ColumnRef)):
            return node
        if not isinstance(node, SexprNode):
            raise TypeError(f"not an s-expression node: {node!r}")
        if node.op == "AND":
            first = node.args[0]
            if isinstance(first, Placeholder) and first.kind == "T":
                first = self._class(first, ctx)
            else:
                first = self._expr(first, ctx)
            new_ctx = first.name if isinstance(first, TableRef) else ctx
            rest = tuple(self._expr(a, new_ctx) for a in node.args[1:])
            return SexprNode("AND", (first, *rest))
        if node.op == "JOIN":
            rel_node, sub = node.args
            inverted = isinstance(rel_node, SexprNode) and rel_node.op == "R"
            raw = rel_node.args[0] if inverted else rel_node
            if inverted:
                candidates = self.by_range.get(ctx, self.relations) if ctx else self.relations
            else:
                candidates = self.by_domain.get(ctx, self.relations) if ctx else self.relations
            rel = self._relation(raw, candidates)
            if isinstance(rel, ColumnRef):
                sub_ctx = rel.table if inverted else self._range_of(rel)
            else:
                sub_ctx = None
            filled_sub = self._expr(sub, sub_ctx)
            filled_rel = SexprNode("R", (rel,)) if inverted else rel
            return SexprNode("JOIN", (filled_rel, filled_sub))
        if node.op in ("ARGMAX", "ARGMIN"):
            subject, rel_node = node.args
            filled_subject = self._expr(subject, ctx)
            sub_ctx = (
                filled_subject.name if isinstance(filled_subject, TableRef)
                else _sexpr_class_of(filled_subject) or ctx
            )
            candidates = self.by_domain.get(sub_ctx, self.relations) if sub_ctx else self.relations
            rel = self._relation(rel_node, candidates)
            return SexprNode(node.op, (filled_subject, rel))
        if node.op == "COUNT":
            return SexprNode("COUNT", (self._expr(node.args[0], ctx),))
        if node.op == "R":
            return SexprNode("R", (self._relation(node.args[0], self.relations),))
        raise TypeError(f"unknown operator {node.op!r}")


def _sexpr_class_of(node) -> str | None:
    """Best-effort class of an s-expression's result set."""
    if isinstance(node, TableRef):
        return node.name
    if isinstance(node, SexprNode) and node.op == "AND":
        return _sexpr_class_of(node.args[0])
    return None


class _SparqlFiller(_Filler):
    def fill(self, query: SparqlQuery) -> SparqlQuery:
        relations = [ColumnRef(r.domain, r.name) for r in self.schema.relations]
        entities = [EntityRef(e.entity_id) for e in self.schema.entities]

        def term(t, context_pred: ColumnRef | None):
            if not isinstance(t, Placeholder):
                return t
            if t.kind == "C":
                return self._choose(t, relations, "relation")
            if t.kind == "E":
                return self._choose(t, entities, "entity")
            pool = (
                _store_predicate_literals(self.store, context_pred.full_name)
                if context_pred is not None
                else []
            )
            return self.fresh_literal(t, pool)

        triples = []
        for t in query.triples:
            pred = term(t.predicate, None)
            subj = term(t.subject, None)
            obj = term(t.object, pred if isinstance(pred, ColumnRef) else None)
            triples.append(Triple(subj, pred, obj))
        filters = tuple(
            FilterCond(f.left, f.op, term(f.right, None)) for f in query.filters
        )
        prefixes = query.prefixes or (("ns", "http://rdf.freebase.com/ns/"),)
        return replace(query, prefixes=tuple(prefixes), triples=tuple(triples), filters=filters)


class _TopFiller(_Filler):
    def fill(self, root: TopIntent) -> TopIntent:
        if not self.schema.intents:
            raise CapacityError("schema has no intents")
        self.slots_by_phi = {i.name: i.slots for i in self.schema.intents}
        intent_refs = []
        for intent in self.schema.intents:
            if intent.slots:
                intent_refs.extend(IntentRef(intent.name, s) for s in intent.slots)
            else:
                intent_refs.append(IntentRef(intent.name, None))
        self.intent_refs = intent_refs
        return self._intent(root)

    def _intent(self, node: TopIntent) -> TopIntent:
        ref = node.ref
        if isinstance(ref, Placeholder):
            ref = self._choose(ref, self.intent_refs, "intent")
        children = []
        for c in node.children:
            if isinstance(c, TopIntent):
                children.append(self._intent(c))
            else:
                children.append(self._slot(c, ref.phi))
        return TopIntent(ref=ref, children=tuple(children))

    def _slot(self, node: TopSlot, phi: str) -> TopSlot:
        ref = node.ref
        if isinstance(ref, Placeholder):
            slots = [SlotRef(phi, s) for s in self.slots_by_phi.get(phi, ())]
            ref = self._choose(ref, slots, f"slot of intent {phi!r}")
        span = node.span
        if isinstance(span, Placeholder):
            if span in self.bound:
                span = self.bound[span]
            else:
                value = f"value {len(self.literal_values) + 1}"
                self.bound[span] = Literal(value)
                self.literal_values.add(value)
                span = self.bound[span]
        return TopSlot(ref=ref, span=span)


_FILLERS = {"sql": _SqlFiller, "sexpr": _SexprFiller, "sparql": _SparqlFiller, "top": _TopFiller}


def fill_schema(skeleton: QuerySkeleton, schema: SourceSchema, store=None, seed: int = 0):
    """Instantiate a skeleton against a schema; identical inputs give
    identical bindings."""
    filler_cls = _FILLERS.get(skeleton.lang)
    if filler_cls is None:
        raise QuerySyntaxError(f"unsupported language: {skeleton.lang!r}")
    return filler_cls(schema, store, seed).fill(skeleton.root)
