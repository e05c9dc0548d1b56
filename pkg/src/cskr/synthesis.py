"""Structure-guided pseudo-sample synthesis.

Each attempt samples one schema and a batch of skeletons from the task's
pools, composes a new skeleton (deterministic rules or a generator prompt
over the first two), instantiates it against the schema, and keeps the result
only if it executes successfully -- and, when novelty is required, only if
the composed skeleton does not already occur in the training pool.  Retained
samples get a generated natural-language question.

All randomness derives from ``seed * 1_000_003 + attempt`` so identical
configurations reproduce identical samples; replaying that recipe is the
documented way to predict the sampled indices.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

from .backends import ROLE_QUESTION, ROLE_SYNTH, GenerationClient, GenRequest
from .engines import execute
from .errors import CapacityError, ComposeError, CskrError, QuerySyntaxError
from .prompts import build_schema_text, render_compose_prompt, render_question_prompt
from .queries import QuerySkeleton, fill_schema, parse_skeleton, render_query, skeletonize
from .queries.nodes import (
    BoolOp,
    InList,
    InSubquery,
    Placeholder,
    SexprNode,
    SqlSelect,
    Star,
    TopIntent,
    Var,
)
from .queries.skeleton import reindex_placeholders, render_skeleton_text, _map_leaves
from .schema import SourceSchema, unify

log = logging.getLogger(__name__)

_SEED_STRIDE = 1_000_003


@dataclass(frozen=True)
class SynthesisConfig:
    structures_per_attempt: int = 5  # how many skeletons each attempt draws
    target_count: int = 1
    max_attempts: int | None = None  # defaults to 50x target
    mode: str = "rule"  # "rule" or "generator"
    novelty_required: bool = True
    seed: int = 0

    @property
    def attempts_budget(self) -> int:
        return self.max_attempts if self.max_attempts is not None else 50 * self.target_count


@dataclass
class StructurePool:
    """Deduplicated skeletons plus the schemas available for filling."""

    skeletons: list[QuerySkeleton]
    schemas: list[tuple[str, SourceSchema]]

    @classmethod
    def from_task(cls, task) -> "StructurePool":
        from .queries import parse_query  # local import avoids cycle at import time

        seen: dict[str, QuerySkeleton] = {}
        for sample in task.train:
            ast = parse_query(sample.query, task.lang, task.schema_for(sample))
            sk = skeletonize(ast)
            seen.setdefault(sk.text, sk)
        schemas = [(ref, task.schemas[ref]) for ref in sorted(task.schemas)]
        return cls(skeletons=list(seen.values()), schemas=schemas)

    @property
    def skeleton_texts(self) -> set[str]:
        return {s.text for s in self.skeletons}


@dataclass(frozen=True)
class PseudoSample:
    question: str
    schema_ref: str
    query: str
    skeleton: str
    provenance: dict = field(hash=False, default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "schema_ref": self.schema_ref,
            "query": self.query,
            "skeleton": self.skeleton,
            "provenance": self.provenance,
        }


def sample_inputs(
    pool: StructurePool, cfg: SynthesisConfig, attempt: int
) -> tuple[tuple[str, SourceSchema], list[QuerySkeleton]]:
    """Draw one schema and T skeletons for an attempt (see module docstring
    for the seeding recipe)."""
    if not pool.skeletons or not pool.schemas:
        raise CskrError("structure pool is empty")
    rng = random.Random(cfg.seed * _SEED_STRIDE + attempt)
    schema = pool.schemas[rng.randrange(len(pool.schemas))]
    t = cfg.structures_per_attempt
    n = len(pool.skeletons)
    if n >= t:
        indices = rng.sample(range(n), t)
    else:
        indices = [rng.randrange(n) for _ in range(t)]
    return schema, [pool.skeletons[i] for i in indices]


# --- composition ---------------------------------------------------------


def _offset(root, amount: int):
    def bump(leaf):
        if isinstance(leaf, Placeholder) and leaf.index > 0:
            return Placeholder(leaf.kind, leaf.index + amount)
        return leaf

    return _map_leaves(root, bump)


def _first_t_slot(node):
    """Preorder path to the first T placeholder of an s-expression tree."""
    if isinstance(node, Placeholder) and node.kind == "T":
        return ()
    if isinstance(node, SexprNode):
        for i, a in enumerate(node.args):
            path = _first_t_slot(a)
            if path is not None:
                return (i, *path)
    return None


def _sexpr_replace(node, path, replacement):
    if path == ():
        return replacement
    i, *rest = path
    args = list(node.args)
    args[i] = _sexpr_replace(args[i], tuple(rest), replacement)
    return SexprNode(node.op, tuple(args))


def _compose_sexpr(a, b):
    host = a.root
    guest = _offset(b.root, 10_000)
    path = _first_t_slot(host)
    if path is None:
        return SexprNode("AND", (host, guest))
    return _sexpr_replace(host, path, guest)


def _replace_first_in(cond, subquery):
    """Swap the right side of the first IN predicate for a subquery."""
    if isinstance(cond, (InList, InSubquery)):
        return InSubquery(cond.left, subquery), True
    if isinstance(cond, BoolOp):
        left, done = _replace_first_in(cond.left, subquery)
        if done:
            return BoolOp(cond.op, left, cond.right), True
        right, done = _replace_first_in(cond.right, subquery)
        return BoolOp(cond.op, cond.left, right), done
    return cond, False


def _compose_sql(a, b):
    # the second skeleton becomes the host: its select list degrades to *,
    # and its first IN predicate absorbs the first skeleton as a subquery;
    # hosts without IN gain a fresh-column IN conjunct
    host: SqlSelect = _offset(b.root, 10_000)
    guest: SqlSelect = a.root
    items = (Star(),)
    where = host.where
    if where is not None:
        where, done = _replace_first_in(where, guest)
    else:
        done = False
    if not done:
        fresh = Placeholder("C", 90_000)
        clause = InSubquery(fresh, guest)
        where = clause if where is None else BoolOp("and", where, clause)
    return SqlSelect(
        items=items,
        table=host.table,
        joins=host.joins,
        where=where,
        group_by=host.group_by,
        order_by=host.order_by,
        limit=host.limit,
    )


def _compose_top(a, b):
    host: TopIntent = a.root
    guest: TopIntent = _offset(b.root, 10_000)
    return TopIntent(ref=host.ref, children=(*host.children, guest))


def _compose_sparql(a, b):
    host = a.root
    guest = _offset(b.root, 10_000)
    # share the first select variable: the guest's first variable is renamed
    # to it, remaining guest variables move out of the host's namespace
    target = host.select[0].name
    guest_vars: list[str] = []
    for t in guest.triples:
        for term in (t.subject, t.object):
            if isinstance(term, Var) and term.name not in guest_vars:
                guest_vars.append(term.name)
    host_vars = {term.name for t in host.triples
                 for term in (t.subject, t.object) if isinstance(term, Var)}
    renames: dict[str, str] = {}
    counter = 0
    for i, name in enumerate(guest_vars):
        if i == 0:
            renames[name] = target
        else:
            counter += 1
            fresh = f"m{counter}"
            while fresh in host_vars:
                counter += 1
                fresh = f"m{counter}"
            renames[name] = fresh
            host_vars.add(fresh)

    def rename(term):
        if isinstance(term, Var):
            return Var(renames.get(term.name, term.name))
        return term

    from .queries.nodes import FilterCond, SparqlQuery, Triple

    triples = host.triples + tuple(
        Triple(rename(t.subject), t.predicate, rename(t.object)) for t in guest.triples
    )
    filters = host.filters + tuple(
        FilterCond(rename(f.left), f.op, f.right) for f in guest.filters
    )
    prefixes = list(host.prefixes)
    for p in guest.prefixes:
        if p not in prefixes:
            prefixes.append(p)
    return SparqlQuery(
        prefixes=tuple(prefixes),
        select=host.select,
        distinct=host.distinct or guest.distinct,
        triples=triples,
        filters=filters,
    )


_RULES = {
    "sexpr": _compose_sexpr,
    "sql": _compose_sql,
    "top": _compose_top,
    "sparql": _compose_sparql,
}


def compose_structures(
    skeletons: list[QuerySkeleton],
    mode: str = "rule",
    client: GenerationClient | None = None,
) -> QuerySkeleton:
    """Merge the first two skeletons into a deeper one."""
    if not skeletons:
        raise ComposeError("no skeletons to compose")
    a = skeletons[0]
    b = skeletons[1] if len(skeletons) > 1 else skeletons[0]
    if a.lang != b.lang:
        raise ComposeError(f"cannot compose {a.lang} with {b.lang}")
    if mode == "generator":
        if client is None:
            raise ComposeError("generator mode needs a generation client")
        prompt = render_compose_prompt(a.text, b.text)
        reply = client.generate(GenRequest(role=ROLE_SYNTH, prompt=prompt))
        try:
            return parse_skeleton(reply.text.strip(), a.lang)
        except CskrError as exc:
            raise ComposeError(f"generator reply is not a skeleton: {exc}") from exc
    if mode != "rule":
        raise ComposeError(f"unknown composition mode {mode!r}")
    root = _RULES[a.lang](a, b)
    return QuerySkeleton.from_root(reindex_placeholders(root))


def generate_pseudo_question(query_ast, schema: SourceSchema, lang: str,
                             client: GenerationClient) -> str:
    """Ask the question-generator role to describe an executable query."""
    prompt = render_question_prompt(render_query(query_ast), build_schema_text(lang, unify(schema)))
    reply = client.generate(GenRequest(role=ROLE_QUESTION, prompt=prompt))
    for line in reply.text.splitlines():
        line = line.strip()
        if line:
            return line
    raise CskrError("question generator returned an empty reply")


@dataclass
class SynthesisResult:
    samples: list[PseudoSample]
    attempts_used: int
    exhausted: bool


def synthesize_memory(
    pool: StructurePool,
    stores: dict[str, object],
    client: GenerationClient,
    cfg: SynthesisConfig,
    lang: str,
) -> SynthesisResult:
    """Run the synthesis loop until the target count or the attempt budget."""
    samples: list[PseudoSample] = []
    known = pool.skeleton_texts
    attempt = 0
    while len(samples) < cfg.target_count and attempt < cfg.attempts_budget:
        attempt += 1
        idx = attempt - 1
        try:
            (schema_ref, schema), skels = sample_inputs(pool, cfg, idx)
            composed = compose_structures(skels, cfg.mode, client)
            filled = fill_schema(
                composed, schema,
                store=stores.get(schema_ref) if lang != "top" else None,
                seed=cfg.seed * _SEED_STRIDE + idx + 1,
            )
            store = schema if lang == "top" else stores.get(schema_ref)
            if store is None:
                raise CskrError(f"no store available for schema {schema_ref!r}")
            outcome = execute(filled, store)
            if not outcome.ok:
                continue
            final_skeleton = skeletonize(filled)
            if cfg.novelty_required and final_skeleton.text in known:
                continue
            question = generate_pseudo_question(filled, schema, lang, client)
            samples.append(
                PseudoSample(
                    question=question,
                    schema_ref=schema_ref,
                    query=render_query(filled),
                    skeleton=final_skeleton.text,
                    provenance={
                        "attempt": idx,
                        "sources": [s.text for s in skels[:2]],
                    },
                )
            )
        except (CapacityError, ComposeError, QuerySyntaxError) as exc:
            log.debug("attempt %d rejected: %s", idx, exc)
            continue
    exhausted = len(samples) < cfg.target_count
    if exhausted:
        log.warning(
            "synthesis exhausted %d attempts with %d/%d samples",
            attempt, len(samples), cfg.target_count,
        )
    return SynthesisResult(samples=samples, attempts_used=attempt, exhausted=exhausted)
