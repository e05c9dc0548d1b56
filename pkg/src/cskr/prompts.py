"""Prompt rendering for the generator roles.

One template per (language, stage) preserves each benchmark family's exact
block layout, including its whitespace quirks; slots are substituted with
plain string replacement so question text containing braces stays intact.

Render profiles capture the per-family conventions: kg building prompts
prefix entities, dialogue-state building and filter targets are upper-cased
while filter inputs keep source case.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .schema import SchemaSubset, UnifiedSchema, render_unified


def _load(name: str) -> str:
    return resources.files("cskr.templates").joinpath(name).read_text()


_CACHE: dict[str, str] = {}


def template(name: str) -> str:
    if name not in _CACHE:
        _CACHE[name] = _load(name)
    return _CACHE[name]


@dataclass(frozen=True)
class RenderProfile:
    filter_case: str | None = None       # schema text inside filter prompts
    build_case: str | None = None        # schema text inside build prompts
    build_entities: bool = False         # prefix kg entities in build prompts
    target_case: str | None = None       # rendering of filter targets
    target_fold: bool = False            # case-insensitive parse of replies


PROFILES: dict[str, RenderProfile] = {
    "sql": RenderProfile(),
    "sexpr": RenderProfile(build_entities=True),
    "sparql": RenderProfile(build_entities=True),
    "top": RenderProfile(build_case="upper", target_case="upper", target_fold=True),
}


def profile_for(lang: str) -> RenderProfile:
    return PROFILES[lang]


def filter_schema_text(lang: str, u: UnifiedSchema) -> str:
    return render_unified(u, case=profile_for(lang).filter_case)


def build_schema_text(lang: str, u: UnifiedSchema) -> str:
    p = profile_for(lang)
    return render_unified(u, include_entities=p.build_entities, case=p.build_case)


def filter_target_text(lang: str, subset: SchemaSubset) -> str:
    return subset.render(case=profile_for(lang).target_case)


def render_filter_prompt(lang: str, question: str, u: UnifiedSchema) -> str:
    body = template(f"{lang}_filter.txt")
    return body.replace("{schema}", filter_schema_text(lang, u)).replace(
        "{question}", question
    )


def render_build_prompt(lang: str, question: str, u: UnifiedSchema) -> str:
    body = template(f"{lang}_build.txt")
    return body.replace("{schema}", build_schema_text(lang, u)).replace(
        "{question}", question
    )


def render_compose_prompt(skeleton1: str, skeleton2: str) -> str:
    body = template("compose.txt")
    return body.replace("{example1}", skeleton1).replace("{example2}", skeleton2)


def render_question_prompt(query_text: str, schema_text: str) -> str:
    body = template("question_gen.txt")
    return body.replace("{query}", query_text).replace("{schema}", schema_text)


# dialogue-state blocks put a blank line between "OUTPUT:" and the target
_TARGET_PREFIX = {"top": "\n"}


def format_example_block(lang: str, prompt: str, target: str) -> str:
    """Serialize one training example in the benchmark block layout."""
    prefix = _TARGET_PREFIX.get(lang, "")
    return f"INPUT:\n{prompt}OUTPUT:\n{prefix}{target}\n"
