"""Parser, resolver and renderer for the SQL subset.

Grammar: SELECT (columns | * | COUNT/SUM/AVG/MIN/MAX), FROM with JOIN ... ON
equality, WHERE with {=, !=, <, >, <=, >=, IN (subquery | value list), AND,
OR}, GROUP BY, ORDER BY [ASC|DESC], LIMIT.  Concrete queries render with
lowercase keywords; skeleton text renders uppercase with a trailing ";".

Parsing is schema-free; a resolution pass then binds every column to its
owning table (bare names search the FROM tables in order) and validates names.
Skeleton mode accepts only placeholders in schema and value positions.
"""

from __future__ import annotations

import re
from dataclasses import replace

from ..errors import QuerySyntaxError, UnresolvedReferenceError
from ..schema import SourceSchema
from .nodes import (
    PLACEHOLDER_RE,
    STAR,
    AggExpr,
    BoolOp,
    ColumnRef,
    Comparison,
    InList,
    InSubquery,
    Join,
    Literal,
    OrderItem,
    Placeholder,
    SqlSelect,
    Star,
    TableRef,
)

AGG_FUNCS = ("count", "sum", "avg", "min", "max")
_KEYWORDS = {
    "select", "from", "where", "join", "inner", "on", "and", "or", "in",
    "group", "order", "by", "asc", "desc", "limit",
}

_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<placeholder>\[(?:T|C|E|V)\d*\])
      | (?P<number>-?\d+\.\d+|-?\d+)
      | (?P<string>'(?:[^']|'')*')
      | (?P<ident>[A-Za-z_][\w.]*)
      | (?P<op><=|>=|!=|=|<|>)
      | (?P<punct>[(),;*])
    )""",
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip():
                raise QuerySyntaxError(f"bad sql token {text[pos:pos + 10]!r}", pos)
            break
        pos = m.end()
        for kind in ("placeholder", "number", "string", "ident", "op", "punct"):
            val = m.group(kind)
            if val is not None:
                tokens.append((kind, val, m.start()))
                break
    return tokens


class _SqlParser:
    """Recursive-descent parser; emits unresolved ColumnRefs (table may be '')."""

    def __init__(self, text: str, skeleton: bool):
        self.tokens = _tokenize(text)
        self.i = 0
        self.skeleton = skeleton

    def _peek(self, offset: int = 0):
        j = self.i + offset
        return self.tokens[j] if j < len(self.tokens) else ("eof", "", -1)

    def _next(self):
        tok = self._peek()
        self.i += 1
        return tok

    def _kw(self, word: str) -> bool:
        kind, val, _ = self._peek()
        return kind == "ident" and val.lower() == word

    def _expect_kw(self, word: str):
        if not self._kw(word):
            kind, val, pos = self._peek()
            raise QuerySyntaxError(f"expected {word!r}, got {val!r}", pos)
        self._next()

    def _expect_punct(self, ch: str):
        kind, val, pos = self._peek()
        if kind != "punct" or val != ch:
            raise QuerySyntaxError(f"expected {ch!r}, got {val!r}", pos)
        self._next()

    @staticmethod
    def _placeholder(val: str) -> Placeholder:
        m = PLACEHOLDER_RE.fullmatch(val)
        idx = int(m.group(2)) if m.group(2) else 0  # 0 marks an unnumbered slot
        return Placeholder(m.group(1), idx)

    def _table(self):
        kind, val, pos = self._next()
        if kind == "placeholder":
            p = self._placeholder(val)
            if p.kind != "T" or not self.skeleton:
                raise QuerySyntaxError(f"unexpected placeholder {val!r} for a table", pos)
            return p
        if kind != "ident" or val.lower() in _KEYWORDS:
            raise QuerySyntaxError(f"expected table name, got {val!r}", pos)
        if self.skeleton:
            raise QuerySyntaxError(f"concrete table {val!r} in skeleton text", pos)
        return TableRef(val)

    def _column(self):
        kind, val, pos = self._next()
        if kind == "placeholder":
            p = self._placeholder(val)
            if p.kind != "C" or not self.skeleton:
                raise QuerySyntaxError(f"unexpected placeholder {val!r} for a column", pos)
            return p
        if kind != "ident" or val.lower() in _KEYWORDS:
            raise QuerySyntaxError(f"expected column name, got {val!r}", pos)
        if self.skeleton:
            raise QuerySyntaxError(f"concrete column {val!r} in skeleton text", pos)
        if "." in val:
            table, name = val.split(".", 1)
            return ColumnRef(table, name)
        return ColumnRef("", val)

    def _value(self):
        kind, val, pos = self._next()
        if kind == "placeholder":
            p = self._placeholder(val)
            if p.kind != "V" or not self.skeleton:
                raise QuerySyntaxError(f"unexpected placeholder {val!r} for a value", pos)
            return p
        if self.skeleton:
            raise QuerySyntaxError(f"concrete value {val!r} in skeleton text", pos)
        if kind == "number":
            return Literal(float(val) if "." in val else int(val))
        if kind == "string":
            return Literal(val[1:-1].replace("''", "'"))
        raise QuerySyntaxError(f"expected a value, got {val!r}", pos)

    def parse(self) -> SqlSelect:
        sel = self._select()
        kind, val, pos = self._peek()
        if kind == "punct" and val == ";":
            self._next()
            kind, val, pos = self._peek()
        if kind != "eof":
            raise QuerySyntaxError(f"trailing input {val!r}", pos)
        return sel

    def _select(self) -> SqlSelect:
        self._expect_kw("select")
        items = self._select_items()
        table = None
        joins = []
        if self._kw("from"):
            self._next()
            table = self._table()
        elif not all(isinstance(i, Literal) for i in items):
            self._expect_kw("from")
        while self._kw("inner") or self._kw("join"):
            if self._kw("inner"):
                self._next()
            self._expect_kw("join")
            jt = self._table()
            self._expect_kw("on")
            left = self._column()
            kind, val, pos = self._next()
            if (kind, val) != ("op", "="):
                raise QuerySyntaxError(f"expected '=' in join condition, got {val!r}", pos)
            joins.append(Join(jt, left, self._column()))
        where = None
        if self._kw("where"):
            self._next()
            where = self._or_expr()
        group_by: list = []
        if self._kw("group"):
            self._next()
            self._expect_kw("by")
            group_by.append(self._column())
            while self._peek()[:2] == ("punct", ","):
                self._next()
                group_by.append(self._column())
        order_by: list[OrderItem] = []
        if self._kw("order"):
            self._next()
            self._expect_kw("by")
            order_by.append(self._order_item())
            while self._peek()[:2] == ("punct", ","):
                self._next()
                order_by.append(self._order_item())
        limit = None
        if self._kw("limit"):
            self._next()
            kind, val, pos = self._next()
            if kind != "number" or "." in val:
                raise QuerySyntaxError(f"expected integer limit, got {val!r}", pos)
            limit = int(val)
        return SqlSelect(
            items=tuple(items),
            table=table,
            joins=tuple(joins),
            where=where,
            group_by=tuple(group_by),
            order_by=tuple(order_by),
            limit=limit,
        )

    def _select_items(self):
        if self._peek()[:2] == ("punct", "*"):
            self._next()
            return [STAR]
        items = [self._select_item()]
        while self._peek()[:2] == ("punct", ","):
            self._next()
            items.append(self._select_item())
        return items

    def _select_item(self):
        kind, val, _ = self._peek()
        if kind in ("number", "string"):
            return self._value()
        if kind == "ident" and val.lower() in AGG_FUNCS and self._peek(1)[:2] == ("punct", "("):
            return self._agg()
        return self._column()

    def _agg(self) -> AggExpr:
        _, func, _ = self._next()
        self._expect_punct("(")
        if self._peek()[:2] == ("punct", "*"):
            self._next()
            arg = STAR
        else:
            arg = self._column()
        self._expect_punct(")")
        return AggExpr(func.lower(), arg)

    def _order_item(self) -> OrderItem:
        kind, val, _ = self._peek()
        if kind == "ident" and val.lower() in AGG_FUNCS and self._peek(1)[:2] == ("punct", "("):
            expr = self._agg()
        else:
            expr = self._column()
        desc = False
        if self._kw("asc"):
            self._next()
        elif self._kw("desc"):
            self._next()
            desc = True
        return OrderItem(expr, desc)

    def _or_expr(self):
        left = self._and_expr()
        while self._kw("or"):
            self._next()
            left = BoolOp("or", left, self._and_expr())
        return left

    def _and_expr(self):
        left = self._primary()
        while self._kw("and"):
            self._next()
            left = BoolOp("and", left, self._primary())
        return left

    def _primary(self):
        if self._peek()[:2] == ("punct", "("):
            self._next()
            cond = self._or_expr()
            self._expect_punct(")")
            return cond
        left = self._column()
        kind, val, pos = self._peek()
        if kind == "ident" and val.lower() == "in":
            self._next()
            return self._in_rhs(left)
        if kind != "op":
            raise QuerySyntaxError(f"expected comparison operator, got {val!r}", pos)
        self._next()
        kind2, val2, _ = self._peek()
        if kind2 == "ident" and val2.lower() not in _KEYWORDS:
            right = self._column()
        else:
            right = self._value()
        return Comparison(left, val, right)

    def _in_rhs(self, left):
        kind, val, pos = self._peek()
        if kind == "placeholder":
            return InList(left, (self._value(),))
        if (kind, val) != ("punct", "("):
            raise QuerySyntaxError(f"expected '(' after IN, got {val!r}", pos)
        self._next()
        if self._kw("select"):
            sub = self._select()
            self._expect_punct(")")
            return InSubquery(left, sub)
        values = [self._value()]
        while self._peek()[:2] == ("punct", ","):
            self._next()
            values.append(self._value())
        self._expect_punct(")")
        return InList(left, tuple(values))


def _resolve_select(sel: SqlSelect, columns_by_table: dict[str, tuple[str, ...]]) -> SqlSelect:
    """Bind columns to FROM-scope tables; each subquery opens its own scope."""
    scope: list[str] = []
    tables = () if sel.table is None else (sel.table,)
    for t in (*tables, *(j.table for j in sel.joins)):
        if isinstance(t, TableRef):
            if t.name not in columns_by_table:
                raise UnresolvedReferenceError(f"unknown table: {t.name!r}")
            scope.append(t.name)

    def col(c):
        if isinstance(c, (Placeholder, Star)):
            return c
        if c.table:
            if c.table not in columns_by_table:
                raise UnresolvedReferenceError(f"unknown table: {c.table!r}")
            if c.name not in columns_by_table[c.table]:
                raise UnresolvedReferenceError(f"unknown column: {c.full_name!r}")
            return c
        for t in scope:
            if c.name in columns_by_table[t]:
                return ColumnRef(t, c.name)
        raise UnresolvedReferenceError(f"column {c.name!r} not found in FROM tables")

    def item(it):
        if isinstance(it, Literal):
            return it
        if isinstance(it, AggExpr):
            return AggExpr(it.func, col(it.arg))
        return col(it)

    def cond(c):
        if c is None:
            return None
        if isinstance(c, BoolOp):
            return BoolOp(c.op, cond(c.left), cond(c.right))
        if isinstance(c, Comparison):
            right = col(c.right) if isinstance(c.right, ColumnRef) else c.right
            return Comparison(col(c.left), c.op, right)
        if isinstance(c, InList):
            return InList(col(c.left), c.values)
        if isinstance(c, InSubquery):
            return InSubquery(col(c.left), _resolve_select(c.select, columns_by_table))
        raise TypeError(f"not a condition: {c!r}")

    return replace(
        sel,
        items=tuple(item(i) for i in sel.items),
        joins=tuple(Join(j.table, col(j.left), col(j.right)) for j in sel.joins),
        where=cond(sel.where),
        group_by=tuple(col(g) for g in sel.group_by),
        order_by=tuple(OrderItem(item(o.expr), o.desc) for o in sel.order_by),
    )


def parse_sql(text: str, schema: SourceSchema | None = None, *, skeleton: bool = False) -> SqlSelect:
    if not text.strip():
        raise QuerySyntaxError("empty query")
    ast = _SqlParser(text, skeleton).parse()
    if not skeleton and schema is not None:
        ast = _resolve_select(ast, {t.name: t.columns for t in schema.tables})
    return ast


def _render_value(v) -> str:
    if isinstance(v, Placeholder):
        return v.token
    val = v.value
    if isinstance(val, str):
        escaped = val.replace("'", "''")
        return f"'{escaped}'"
    if isinstance(val, float) and val.is_integer():
        return str(int(val))
    return str(val)


class _SqlRenderer:
    def __init__(self, upper: bool):
        self.upper = upper

    def kw(self, word: str) -> str:
        return word.upper() if self.upper else word

    def column(self, c, qualify: bool) -> str:
        if isinstance(c, Placeholder):
            return c.token
        return f"{c.table}.{c.name}" if qualify and c.table else c.name

    def render(self, ast: SqlSelect) -> str:
        qualify = bool(ast.joins)
        parts = [self.kw("select"), self._items(ast, qualify)]
        if ast.table is not None:
            parts += [self.kw("from"), self._table(ast.table)]
        for j in ast.joins:
            parts += [self.kw("join"), self._table(j.table), self.kw("on"),
                      self.column(j.left, True), "=", self.column(j.right, True)]
        if ast.where is not None:
            parts += [self.kw("where"), self._cond(ast.where, qualify)]
        if ast.group_by:
            parts += [self.kw("group"), self.kw("by"),
                      ", ".join(self.column(g, qualify) for g in ast.group_by)]
        if ast.order_by:
            rendered = []
            for o in ast.order_by:
                txt = self._item(o.expr, qualify)
                if o.desc:
                    txt += f" {self.kw('desc')}"
                rendered.append(txt)
            parts += [self.kw("order"), self.kw("by"), ", ".join(rendered)]
        if ast.limit is not None:
            parts += [self.kw("limit"), str(ast.limit)]
        return " ".join(parts)

    def _table(self, t) -> str:
        return t.token if isinstance(t, Placeholder) else t.name

    def _items(self, ast: SqlSelect, qualify: bool) -> str:
        return ", ".join(self._item(i, qualify) for i in ast.items)

    def _item(self, item, qualify: bool) -> str:
        if isinstance(item, Star):
            return "*"
        if isinstance(item, Literal):
            return _render_value(item)
        if isinstance(item, AggExpr):
            inner = "*" if isinstance(item.arg, Star) else self.column(item.arg, qualify)
            return f"{self.kw(item.func)}({inner})"
        return self.column(item, qualify)

    def _cond(self, cond, qualify: bool, parens: bool = False) -> str:
        if isinstance(cond, BoolOp):
            txt = (f"{self._cond(cond.left, qualify, True)} {self.kw(cond.op)} "
                   f"{self._cond(cond.right, qualify, True)}")
            return f"({txt})" if parens and cond.op == "or" else txt
        if isinstance(cond, Comparison):
            right = (self.column(cond.right, qualify)
                     if isinstance(cond.right, ColumnRef) else _render_value(cond.right))
            return f"{self.column(cond.left, qualify)} {cond.op} {right}"
        if isinstance(cond, InList):
            vals = ", ".join(_render_value(v) for v in cond.values)
            return f"{self.column(cond.left, qualify)} {self.kw('in')} ({vals})"
        if isinstance(cond, InSubquery):
            sub = _SqlRenderer(self.upper).render(cond.select)
            return f"{self.column(cond.left, qualify)} {self.kw('in')} ({sub})"
        raise TypeError(f"not a condition: {cond!r}")


def render_sql(ast: SqlSelect, *, upper: bool = False, terminator: bool = False) -> str:
    text = _SqlRenderer(upper).render(ast)
    return text + ";" if terminator else text
