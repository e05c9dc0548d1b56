"""Parser and renderer for the SPARQL subset.

Supported: PREFIX declarations, SELECT (DISTINCT) over variables, conjunctive
triple patterns, FILTER with comparisons.  The canonical rendering is a single
line with single spaces and each triple terminated by " .".

Benchmark exports often squash newlines, gluing keywords to the previous
token (``?xWHERE {``); a pre-lexing step re-inserts those boundaries, so
uppercase SELECT/WHERE/FILTER/PREFIX are reserved words.
"""

from __future__ import annotations

import re

from ..errors import QuerySyntaxError, UnresolvedReferenceError
from ..schema import SourceSchema
from .nodes import (
    PLACEHOLDER_RE,
    ColumnRef,
    EntityRef,
    FilterCond,
    Literal,
    Placeholder,
    SparqlQuery,
    Triple,
    Var,
)

_GLUE_FIXES = (
    (re.compile(r"(?<=\S)(PREFIX|SELECT|WHERE|FILTER)\b"), r" \1"),
    (re.compile(r"\.(?=\?|\}|<)"), ". "),
    (re.compile(r"\{(?=\S)"), "{ "),
    (re.compile(r"(?<=\S)\}"), " }"),
    (re.compile(r"(?<=\S)\("), " ("),
    (re.compile(r"\((?=\S)"), "( "),
    (re.compile(r"(?<=\S)\)"), " )"),
)

_NUM_RE = re.compile(r"-?\d+(\.\d+)?\Z")
_VAR_RE = re.compile(r"\?[A-Za-z_][\w]*\Z")
_PNAME_RE = re.compile(r"([A-Za-z_][\w]*):(\S+)\Z")
_IRI_RE = re.compile(r"<[^<>\s]*>")


def _tokenize(text: str) -> list[str]:
    # Stash IRIs so keyword/operator padding cannot split them, then re-insert
    # boundaries that newline squashing removed and pad comparison operators.
    iris: list[str] = []

    def stash(m: re.Match) -> str:
        iris.append(m.group(0))
        return f"\x00{len(iris) - 1}\x00"

    text = _IRI_RE.sub(stash, text)
    for pattern, repl in _GLUE_FIXES:
        text = pattern.sub(repl, text)
    text = re.sub(r"(<=|>=|!=|=|<|>)", r" \1 ", text)
    tokens = []
    for tok in text.split():
        m = re.fullmatch(r"\x00(\d+)\x00", tok)
        tokens.append(iris[int(m.group(1))] if m else tok)
    return tokens


class _SparqlParser:
    def __init__(self, text: str, schema: SourceSchema | None, skeleton: bool):
        self.tokens = _tokenize(text)
        self.i = 0
        self.skeleton = skeleton
        self.relations: dict[str, ColumnRef] = {}
        self.entities: set[str] = set()
        if schema is not None and not skeleton:
            self.relations = {r.full_name: ColumnRef(r.domain, r.name) for r in schema.relations}
            self.entities = {e.entity_id for e in schema.entities}
        self.schema_given = schema is not None and not skeleton

    def _peek(self) -> str:
        return self.tokens[self.i] if self.i < len(self.tokens) else ""

    def _next(self) -> str:
        tok = self._peek()
        if not tok:
            raise QuerySyntaxError("unexpected end of sparql query")
        self.i += 1
        return tok

    def _expect(self, word: str):
        tok = self._next()
        if tok != word:
            raise QuerySyntaxError(f"expected {word!r}, got {tok!r}")

    def parse(self) -> SparqlQuery:
        prefixes: list[tuple[str, str]] = []
        while self._peek() == "PREFIX":
            self._next()
            name = self._next()
            if not name.endswith(":"):
                raise QuerySyntaxError(f"bad prefix name {name!r}")
            iri = self._next()
            if not (iri.startswith("<") and iri.endswith(">")):
                raise QuerySyntaxError(f"bad prefix iri {iri!r}")
            prefixes.append((name[:-1], iri[1:-1]))
        self._expect("SELECT")
        distinct = False
        if self._peek() == "DISTINCT":
            self._next()
            distinct = True
        select: list[Var] = []
        while _VAR_RE.match(self._peek() or ""):
            select.append(Var(self._next()[1:]))
        if not select:
            raise QuerySyntaxError("SELECT needs at least one variable")
        self._expect("WHERE")
        self._expect("{")
        triples: list[Triple] = []
        filters: list[FilterCond] = []
        while self._peek() and self._peek() != "}":
            if self._peek() == "FILTER":
                self._next()
                filters.append(self._filter())
            else:
                s = self._term(position="subject")
                p = self._term(position="predicate")
                o = self._term(position="object")
                triples.append(Triple(s, p, o))
                if self._peek() == ".":
                    self._next()
        self._expect("}")
        if self.i != len(self.tokens):
            raise QuerySyntaxError(f"trailing input {self._peek()!r}")
        if not triples:
            raise QuerySyntaxError("empty graph pattern")
        return SparqlQuery(
            prefixes=tuple(prefixes),
            select=tuple(select),
            distinct=distinct,
            triples=tuple(triples),
            filters=tuple(filters),
        )

    def _filter(self) -> FilterCond:
        self._expect("(")
        var_tok = self._next()
        if not _VAR_RE.match(var_tok):
            raise QuerySyntaxError(f"FILTER needs a variable, got {var_tok!r}")
        op = self._next()
        if op not in ("=", "!=", "<", ">", "<=", ">="):
            raise QuerySyntaxError(f"bad FILTER operator {op!r}")
        right = self._literal(self._next())
        self._expect(")")
        return FilterCond(Var(var_tok[1:]), op, right)

    def _literal(self, tok: str):
        m = PLACEHOLDER_RE.fullmatch(tok)
        if m:
            if not self.skeleton:
                raise QuerySyntaxError(f"placeholder {tok!r} in a concrete query")
            return Placeholder(m.group(1), int(m.group(2)) if m.group(2) else 0)
        if _NUM_RE.match(tok):
            return Literal(float(tok) if "." in tok else int(tok))
        if tok.startswith('"') and tok.endswith('"'):
            return Literal(tok[1:-1])
        raise QuerySyntaxError(f"bad literal {tok!r}")

    def _term(self, position: str):
        tok = self._next()
        m = PLACEHOLDER_RE.fullmatch(tok)
        if m:
            if not self.skeleton:
                raise QuerySyntaxError(f"placeholder {tok!r} in a concrete query")
            p = Placeholder(m.group(1), int(m.group(2)) if m.group(2) else 0)
            ok = {"subject": ("E",), "predicate": ("C",), "object": ("E", "V")}[position]
            if p.kind not in ok:
                raise QuerySyntaxError(f"placeholder kind {p.kind} invalid as {position}")
            return p
        if _VAR_RE.match(tok):
            return Var(tok[1:])
        if self.skeleton:
            raise QuerySyntaxError(f"concrete token {tok!r} in skeleton text")
        pm = _PNAME_RE.match(tok)
        if pm:
            local = pm.group(2)
            if position == "predicate":
                if self.schema_given:
                    ref = self.relations.get(local)
                    if ref is None:
                        raise UnresolvedReferenceError(f"unknown relation: {local!r}")
                    return ref
                if "." in local:
                    domain, name = local.rsplit(".", 1)
                    return ColumnRef(domain, name)
                return ColumnRef("", local)
            if self.schema_given and local not in self.entities:
                raise UnresolvedReferenceError(f"unknown entity: {local!r}")
            return EntityRef(local)
        if tok.startswith('"') or _NUM_RE.match(tok):
            if position != "object":
                raise QuerySyntaxError(f"literal {tok!r} only allowed as object")
            return self._literal(tok)
        raise QuerySyntaxError(f"bad term {tok!r} as {position}")


def parse_sparql(text: str, schema: SourceSchema | None = None, *, skeleton: bool = False) -> SparqlQuery:
    if not text.strip():
        raise QuerySyntaxError("empty query")
    return _SparqlParser(text, schema, skeleton).parse()


def _render_term(term, prefix: str) -> str:
    if isinstance(term, Var):
        return term.token
    if isinstance(term, Placeholder):
        return term.token
    if isinstance(term, EntityRef):
        return f"{prefix}:{term.entity_id}" if prefix else term.entity_id
    if isinstance(term, ColumnRef):
        return f"{prefix}:{term.full_name}" if prefix else term.full_name
    if isinstance(term, Literal):
        v = term.value
        if isinstance(v, str):
            return f'"{v}"'
        if isinstance(v, float) and v.is_integer():
            return str(int(v))
        return str(v)
    raise TypeError(f"not a sparql term: {term!r}")


def render_sparql(ast: SparqlQuery) -> str:
    prefix = ast.prefixes[0][0] if ast.prefixes else ""
    parts = []
    for name, iri in ast.prefixes:
        parts.append(f"PREFIX {name}: <{iri}>")
    sel = " ".join(v.token for v in ast.select)
    parts.append(f"SELECT DISTINCT {sel}" if ast.distinct else f"SELECT {sel}")
    parts.append("WHERE {")
    for t in ast.triples:
        parts.append(
            f"{_render_term(t.subject, prefix)} {_render_term(t.predicate, prefix)} "
            f"{_render_term(t.object, prefix)} ."
        )
    for f in ast.filters:
        parts.append(f"FILTER ( {f.left.token} {f.op} {_render_term(f.right, prefix)} )")
    parts.append("}")
    return " ".join(parts)
