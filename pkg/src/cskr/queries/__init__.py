"""Structured query parsing, rendering, abstraction and instantiation."""

from __future__ import annotations

from ..errors import QuerySyntaxError
from ..schema import SourceSchema
from . import nodes
from .nodes import LANGS, QueryAst, lang_of
from .sexpr import parse_sexpr, render_sexpr
from .sparql import parse_sparql, render_sparql
from .sql import parse_sql, render_sql
from .top import parse_top, render_top

_PARSERS = {
    nodes.SQL: parse_sql,
    nodes.SEXPR: parse_sexpr,
    nodes.SPARQL: parse_sparql,
    nodes.TOP: parse_top,
}


def parse_query(text: str, lang: str, schema: SourceSchema | None = None) -> QueryAst:
    """Parse concrete query text, resolving references against ``schema``."""
    if lang not in _PARSERS:
        raise QuerySyntaxError(f"unsupported language: {lang!r}")
    return _PARSERS[lang](text, schema)


def render_query(ast: QueryAst) -> str:
    """Deterministic normal-form text for a concrete query AST."""
    lang = lang_of(ast)
    if lang == nodes.SQL:
        return render_sql(ast)
    if lang == nodes.SPARQL:
        return render_sparql(ast)
    if lang == nodes.TOP:
        return render_top(ast)
    return render_sexpr(ast)


from .skeleton import (  # noqa: E402  (depends on the dispatch above)
    QuerySkeleton,
    fill_schema,
    parse_skeleton,
    skeletonize,
)

__all__ = [
    "LANGS",
    "QueryAst",
    "QuerySkeleton",
    "fill_schema",
    "lang_of",
    "nodes",
    "parse_query",
    "parse_skeleton",
    "render_query",
    "skeletonize",
]
