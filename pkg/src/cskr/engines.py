"""In-memory query execution for the synthesis gate and execution accuracy.

Three store kinds: relational tables for sql, triple stores for s-expressions
and sparql, and the dialogue-state schema itself for top trees (which have no
data; execution degenerates to structural validation).  A query whose result
has zero rows gets status "empty", which the synthesis gate treats as a
rejection; errors carry a message instead of raising.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .queries.nodes import (
    AggExpr,
    BoolOp,
    ColumnRef,
    Comparison,
    EntityRef,
    InList,
    InSubquery,
    IntentRef,
    Literal,
    Placeholder,
    SexprNode,
    SlotRef,
    SparqlQuery,
    SqlSelect,
    Star,
    TableRef,
    TopIntent,
    TopSlot,
    Var,
    lang_of,
)
from .schema import SourceSchema

SUCCESS, EMPTY, ERROR = "success", "empty", "error"


@dataclass(frozen=True)
class TableData:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    def __post_init__(self):
        for r in self.rows:
            if len(r) != len(self.columns):
                raise ValueError(
                    f"row arity {len(r)} != column arity {len(self.columns)}"
                )


@dataclass(frozen=True)
class RelationalStore:
    tables: Mapping[str, TableData]

    @classmethod
    def from_json(cls, payload: str | Mapping) -> "RelationalStore":
        data = json.loads(payload) if isinstance(payload, str) else payload
        tables = {}
        for t in data.get("tables", []):
            if t["name"] in tables:
                raise ValueError(f"duplicate table {t['name']!r}")
            tables[t["name"]] = TableData(
                columns=tuple(t["columns"]),
                rows=tuple(tuple(r) for r in t.get("rows", [])),
            )
        return cls(tables=tables)

    def to_json(self) -> dict:
        return {
            "tables": [
                {"name": n, "columns": list(d.columns), "rows": [list(r) for r in d.rows]}
                for n, d in self.tables.items()
            ]
        }


@dataclass(frozen=True)
class TripleStore:
    """Sorted triples plus entity-to-class type assertions.

    The JSON-lines form uses one ``{"s":..., "p":..., "o":...}`` object per
    line; the reserved predicate ``"type"`` records type assertions.
    """

    triples: tuple[tuple, ...]
    entity_types: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    @classmethod
    def build(
        cls,
        triples: Iterable[tuple],
        entity_types: Mapping[str, Iterable[str]] | None = None,
    ) -> "TripleStore":
        uniq = sorted(set(tuple(t) for t in triples), key=lambda t: (t[0], t[1], str(t[2])))
        types = {
            e: tuple(sorted(set(cs))) for e, cs in sorted((entity_types or {}).items())
        }
        return cls(triples=tuple(uniq), entity_types=types)

    @classmethod
    def from_jsonl(cls, text: str) -> "TripleStore":
        triples = []
        types: dict[str, set[str]] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if row["p"] == "type":
                types.setdefault(row["s"], set()).add(row["o"])
            else:
                triples.append((row["s"], row["p"], row["o"]))
        return cls.build(triples, types)

    def to_jsonl(self) -> str:
        lines = []
        for e, cs in self.entity_types.items():
            for c in cs:
                lines.append(json.dumps({"s": e, "p": "type", "o": c}))
        for s, p, o in self.triples:
            lines.append(json.dumps({"s": s, "p": p, "o": o}))
        return "\n".join(lines) + ("\n" if lines else "")

    def class_extension(self, cls_name: str) -> set:
        return {e for e, cs in self.entity_types.items() if cls_name in cs}


@dataclass(frozen=True)
class ExecOutcome:
    status: str
    rows: tuple[tuple, ...] = ()
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == SUCCESS


class _EvalError(Exception):
    pass


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _compare(left, op: str, right) -> bool:
    if left is None or right is None:
        return False  # three-valued logic collapsed to false
    if _is_num(left) and _is_num(right):
        pass
    elif isinstance(left, str) and isinstance(right, str):
        pass
    else:
        raise _EvalError(f"type mismatch comparing {left!r} {op} {right!r}")
    if op == "=":
        return left == right
    if op == "!=":
        return left != right
    if op == "<":
        return left < right
    if op == ">":
        return left > right
    if op == "<=":
        return left <= right
    if op == ">=":
        return left >= right
    raise _EvalError(f"unknown operator {op!r}")


def _values_equal(a, b) -> bool:
    if a is None or b is None:
        return a is b
    if _is_num(a) and _is_num(b):
        return float(a) == float(b)
    return a == b


# --- sql -----------------------------------------------------------------


def _sql_env_rows(sel: SqlSelect, store: RelationalStore) -> list[dict]:
    def table_rows(ref) -> list[dict]:
        if not isinstance(ref, TableRef):
            raise _EvalError(f"unresolved table reference: {ref!r}")
        data = store.tables.get(ref.name)
        if data is None:
            raise _EvalError(f"table {ref.name!r} not in store")
        return [
            {(ref.name, c): v for c, v in zip(data.columns, row)} for row in data.rows
        ]

    if sel.table is None:
        envs: list[dict] = [{}]
    else:
        envs = table_rows(sel.table)
    for j in sel.joins:
        joined = []
        right_rows = table_rows(j.table)
        for env in envs:
            for renv in right_rows:
                merged = {**env, **renv}
                if _values_equal(
                    _sql_col(merged, j.left), _sql_col(merged, j.right)
                ) and _sql_col(merged, j.left) is not None:
                    joined.append(merged)
        envs = joined
    return envs


def _sql_col(env: dict, ref) -> object:
    if not isinstance(ref, ColumnRef):
        raise _EvalError(f"unresolved column reference: {ref!r}")
    key = (ref.table, ref.name)
    if key not in env:
        raise _EvalError(f"column {ref.full_name!r} not in row scope")
    return env[key]


def _sql_where(env: dict, cond, store: RelationalStore) -> bool:
    if isinstance(cond, BoolOp):
        if cond.op == "and":
            return _sql_where(env, cond.left, store) and _sql_where(env, cond.right, store)
        return _sql_where(env, cond.left, store) or _sql_where(env, cond.right, store)
    if isinstance(cond, Comparison):
        left = _sql_col(env, cond.left)
        right = (
            _sql_col(env, cond.right)
            if isinstance(cond.right, ColumnRef)
            else cond.right.value
        )
        return _compare(left, cond.op, right)
    if isinstance(cond, InList):
        left = _sql_col(env, cond.left)
        return any(_values_equal(left, v.value) for v in cond.values)
    if isinstance(cond, InSubquery):
        left = _sql_col(env, cond.left)
        sub = _exec_sql(cond.select, store)
        return any(row and _values_equal(left, row[0]) for row in sub)
    raise _EvalError(f"bad condition node: {cond!r}")


def _aggregate(func: str, values: list) -> object:
    if func == "count":
        return len(values)
    numeric = [v for v in values if v is not None]
    if not numeric:
        return None
    if func == "sum":
        return sum(numeric)
    if func == "avg":
        return sum(numeric) / len(numeric)
    if func == "min":
        return min(numeric)
    if func == "max":
        return max(numeric)
    raise _EvalError(f"unknown aggregate {func!r}")


def _sort_key(v):
    if v is None:
        return (-1, 0)
    if _is_num(v):
        return (0, float(v))
    return (1, str(v))


def _exec_sql(sel: SqlSelect, store: RelationalStore) -> list[tuple]:
    envs = _sql_env_rows(sel, store)
    if sel.where is not None:
        envs = [e for e in envs if _sql_where(e, sel.where, store)]

    def star_columns() -> list[ColumnRef]:
        cols = []
        tables = [] if sel.table is None else [sel.table]
        tables += [j.table for j in sel.joins]
        for t in tables:
            for c in store.tables[t.name].columns:
                cols.append(ColumnRef(t.name, c))
        return cols

    has_agg = any(isinstance(i, AggExpr) for i in sel.items) or bool(sel.group_by)

    def item_value(item, env):
        if isinstance(item, Star):
            return tuple(_sql_col(env, c) for c in star_columns())
        if isinstance(item, Literal):
            return (item.value,)
        return (_sql_col(env, item),)

    if not has_agg:
        out = []
        for env in envs:
            row: list = []
            for item in sel.items:
                row.extend(item_value(item, env))
            key_source = env
            out.append((tuple(row), key_source))
    else:
        groups: dict[tuple, list[dict]] = {}
        for env in envs:
            key = tuple(_sql_col(env, g) for g in sel.group_by)
            groups.setdefault(key, []).append(env)
        if not sel.group_by and not groups:
            groups[()] = []
        out = []
        for key, members in groups.items():
            row: list = []
            for item in sel.items:
                if isinstance(item, AggExpr):
                    if isinstance(item.arg, Star):
                        row.append(len(members))
                    else:
                        row.append(
                            _aggregate(item.func, [_sql_col(e, item.arg) for e in members])
                        )
                elif isinstance(item, Star):
                    row.extend(
                        _sql_col(members[0], c) if members else None for c in star_columns()
                    )
                elif isinstance(item, Literal):
                    row.append(item.value)
                else:
                    row.append(_sql_col(members[0], item) if members else None)
            out.append((tuple(row), (key, members)))

    if sel.order_by:
        def order_value(o, source):
            if not has_agg:
                return _sql_col(source, o.expr) if isinstance(o.expr, ColumnRef) else None
            _, members = source
            if isinstance(o.expr, AggExpr):
                if isinstance(o.expr.arg, Star):
                    return len(members)
                return _aggregate(o.expr.func, [_sql_col(e, o.expr.arg) for e in members])
            return _sql_col(members[0], o.expr) if members else None

        # stable per-key passes, least-significant first, handle mixed asc/desc
        for o in reversed(sel.order_by):
            out.sort(key=lambda entry, o=o: _sort_key(order_value(o, entry[1])),
                     reverse=o.desc)

    rows = [row for row, _ in out]
    if sel.limit is not None:
        rows = rows[: sel.limit]
    return rows


# --- s-expression ----------------------------------------------------------


def _exec_sexpr(expr, store: TripleStore):
    if isinstance(expr, TableRef):
        return store.class_extension(expr.name)
    if isinstance(expr, EntityRef):
        return {expr.entity_id}
    if isinstance(expr, Literal):
        return {expr.value}
    if isinstance(expr, Placeholder):
        raise _EvalError(f"placeholder {expr.token} in executable query")
    if not isinstance(expr, SexprNode):
        raise _EvalError(f"bad s-expression node: {expr!r}")
    if expr.op == "AND":
        sets = [_exec_sexpr(a, store) for a in expr.args]
        result = sets[0]
        for s in sets[1:]:
            result = result & s
        return result
    if expr.op == "JOIN":
        rel_node, sub = expr.args
        subjects = _exec_sexpr(sub, store)
        inverted = isinstance(rel_node, SexprNode) and rel_node.op == "R"
        rel = rel_node.args[0] if inverted else rel_node
        if not isinstance(rel, ColumnRef):
            raise _EvalError(f"JOIN needs a relation, got {rel!r}")
        name = rel.full_name
        if inverted:
            return {o for s, p, o in store.triples if p == name and s in subjects}
        return {s for s, p, o in store.triples if p == name and o in subjects}
    if expr.op in ("ARGMAX", "ARGMIN"):
        subject, rel = expr.args
        base = _exec_sexpr(subject, store)
        if not isinstance(rel, ColumnRef):
            raise _EvalError(f"{expr.op} needs a relation, got {rel!r}")
        name = rel.full_name
        take_max = expr.op == "ARGMAX"
        scored = {}
        for s, p, o in store.triples:
            if p == name and s in base and _is_num(o):
                best = scored.get(s)
                if best is None or (o > best if take_max else o < best):
                    scored[s] = o
        if not scored:
            return set()
        extreme = max(scored.values()) if take_max else min(scored.values())
        return {s for s, v in scored.items() if v == extreme}
    if expr.op == "COUNT":
        return len(_exec_sexpr(expr.args[0], store))
    raise _EvalError(f"unknown operator {expr.op!r}")


# --- sparql ------------------------------------------------------------------


def _exec_sparql(ast: SparqlQuery, store: TripleStore) -> list[tuple]:
    def term_value(term, binding):
        if isinstance(term, Var):
            return binding.get(term.name, _UNBOUND)
        if isinstance(term, EntityRef):
            return term.entity_id
        if isinstance(term, ColumnRef):
            return term.full_name
        if isinstance(term, Literal):
            return term.value
        raise _EvalError(f"bad sparql term: {term!r}")

    bindings = [dict()]
    for pattern in ast.triples:
        new_bindings = []
        for binding in bindings:
            want_s = term_value(pattern.subject, binding)
            want_p = term_value(pattern.predicate, binding)
            want_o = term_value(pattern.object, binding)
            for s, p, o in store.triples:
                if want_p is not _UNBOUND and p != want_p:
                    continue
                if want_s is not _UNBOUND and s != want_s:
                    continue
                if want_o is not _UNBOUND and not _values_equal(o, want_o):
                    continue
                nb = dict(binding)
                if isinstance(pattern.subject, Var):
                    nb[pattern.subject.name] = s
                if isinstance(pattern.predicate, Var):
                    nb[pattern.predicate.name] = p
                if isinstance(pattern.object, Var):
                    nb[pattern.object.name] = o
                new_bindings.append(nb)
        bindings = new_bindings
        if not bindings:
            break
    for f in ast.filters:
        kept = []
        for b in bindings:
            left = b.get(f.left.name)
            if left is None:
                raise _EvalError(f"FILTER variable ?{f.left.name} unbound")
            if _compare(left, f.op, f.right.value):
                kept.append(b)
        bindings = kept
    rows = []
    for b in bindings:
        row = []
        for v in ast.select:
            if v.name not in b:
                raise _EvalError(f"selected variable ?{v.name} unbound")
            row.append(b[v.name])
        rows.append(tuple(row))
    if ast.distinct:
        rows = list(dict.fromkeys(rows))
    return rows


class _Unbound:
    pass


_UNBOUND = _Unbound()


# --- top ---------------------------------------------------------------------


def _exec_top(ast: TopIntent, schema: SourceSchema) -> None:
    slots_by_intent = {i.name: set(i.slots) for i in schema.intents}

    def check(node):
        if isinstance(node, TopIntent):
            ref = node.ref
            if not isinstance(ref, IntentRef):
                raise _EvalError(f"unresolved intent node: {ref!r}")
            if ref.phi not in slots_by_intent:
                raise _EvalError(f"intent {ref.token!r} not in schema")
            if ref.suffix is not None and ref.suffix not in slots_by_intent[ref.phi]:
                raise _EvalError(f"intent {ref.token!r} not in schema")
            for c in node.children:
                check(c)
        elif isinstance(node, TopSlot):
            ref = node.ref
            if not isinstance(ref, SlotRef):
                raise _EvalError(f"unresolved slot node: {ref!r}")
            if ref.table is None or ref.name not in slots_by_intent.get(ref.table, ()):
                raise _EvalError(f"slot {ref.token!r} not legal for its intent")
        else:
            raise _EvalError(f"bad top node: {node!r}")

    check(ast)


def execute(ast, store) -> ExecOutcome:
    """Run a query against its store kind; never raises for data errors."""
    lang = lang_of(ast)
    try:
        if lang == "sql":
            if not isinstance(store, RelationalStore):
                raise TypeError("sql queries need a RelationalStore")
            rows = _exec_sql(ast, store)
            rows = tuple(tuple(r) for r in rows)
        elif lang in ("sexpr",):
            if not isinstance(store, TripleStore):
                raise TypeError("s-expression queries need a TripleStore")
            result = _exec_sexpr(ast, store)
            if isinstance(result, int):
                rows = ((result,),)
            else:
                rows = tuple((e,) for e in sorted(result, key=str))
        elif lang == "sparql":
            if not isinstance(store, TripleStore):
                raise TypeError("sparql queries need a TripleStore")
            rows = tuple(_exec_sparql(ast, store))
        elif lang == "top":
            if not isinstance(store, SourceSchema) or store.kind != "ds":
                raise TypeError("top queries validate against a dialogue-state schema")
            _exec_top(ast, store)
            return ExecOutcome(status=SUCCESS, rows=(("valid",),))
        else:
            raise TypeError(f"unsupported language: {lang!r}")
    except _EvalError as exc:
        return ExecOutcome(status=ERROR, message=str(exc))
    if not rows:
        return ExecOutcome(status=EMPTY)
    return ExecOutcome(status=SUCCESS, rows=rows)


def _normalize_row(row: tuple) -> tuple:
    return tuple(float(v) if _is_num(v) else v for v in row)


def result_equal(a: ExecOutcome, b: ExecOutcome, ordered: bool = False) -> bool:
    """Multiset comparison of outcomes; order matters only when asked for."""
    if a.status != b.status:
        return False
    if a.status == ERROR:
        return False
    if a.status == EMPTY:
        return True
    left = [_normalize_row(r) for r in a.rows]
    right = [_normalize_row(r) for r in b.rows]
    if ordered:
        return left == right
    return Counter(left) == Counter(right)
