"""Stage dataset assembly, two-stage inference and continual-learning metrics.

The reasoning pipeline is decoupled: stage one filters the unified schema down
to the elements a question needs, stage two builds the query from the question
and the raw schema.  A filter reply that cannot be parsed, or that selects
nothing, degrades to the full schema instead of aborting, so filtering can
never break the pipeline.

Metrics follow the usual continual-learning definitions over the accuracy
matrix acc[k][j] (test accuracy on task k after training through task j, with
column 0 holding single-task baselines):

    AA  = mean_k acc[k][K]
    BWT = mean_{k<K} (acc[k][K] - acc[k][k])
    FWT = mean_{k>=2} (acc[k][k] - acc[k][0])
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .backends import ROLE_BUILDER, ROLE_FILTER, GenerationClient, GenRequest
from .data import Task, TaskStream
from .engines import execute, result_equal
from .errors import ConfigError, CskrError, SubsetParseError
from .prompts import (
    build_schema_text,
    filter_schema_text,
    filter_target_text,
    profile_for,
    render_build_prompt,
    render_filter_prompt,
)
from .queries import parse_query
from .queries.nodes import SqlSelect
from .schema import SchemaSubset, parse_unified, unify
from .unify_ops import extract_used_schema


@dataclass(frozen=True)
class StageExample:
    question: str
    schema_text: str           # filter: unified rendering | build: raw-style text
    subset_text: str           # gold or predicted relevant-schema rendering
    target: str
    source_task: str
    origin: str                # "current" | "replay-real" | "replay-pseudo"

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "schema_text": self.schema_text,
            "subset_text": self.subset_text,
            "target": self.target,
            "source_task": self.source_task,
            "origin": self.origin,
        }


@dataclass
class StageDataset:
    stage: str                 # "filter" | "build"
    task_name: str
    examples: list[StageExample]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in self.examples)

    @property
    def replay_count(self) -> int:
        return sum(1 for e in self.examples if e.origin != "current")


def _current_examples(task: Task, stage: str) -> list[StageExample]:
    out = []
    for sample in task.train:
        schema = task.schema_for(sample)
        u = unify(schema)
        ast = parse_query(sample.query, task.lang, schema)
        subset = extract_used_schema(ast, u)
        if stage == "filter":
            out.append(
                StageExample(
                    question=sample.question,
                    schema_text=filter_schema_text(task.lang, u),
                    subset_text=filter_target_text(task.lang, subset),
                    target=filter_target_text(task.lang, subset),
                    source_task=task.name,
                    origin="current",
                )
            )
        else:
            out.append(
                StageExample(
                    question=sample.question,
                    schema_text=build_schema_text(task.lang, u),
                    subset_text=filter_target_text(task.lang, subset),
                    target=sample.query,
                    source_task=task.name,
                    origin="current",
                )
            )
    return out


def assemble_stage_dataset(
    stream: TaskStream,
    k: int,
    stage: str,
    memories: dict[int, tuple[list, list]],
) -> StageDataset:
    """Current task k's examples followed by all prior tasks' replay entries.

    ``memories`` maps task index to its (schema-view, structure-view) banks;
    banks must exist for every index below k.
    """
    if stage not in ("filter", "build"):
        raise ConfigError(f"unknown stage {stage!r}")
    task = stream.tasks[k - 1]
    examples = _current_examples(task, stage)
    for kp in range(1, k):
        if kp not in memories:
            raise ConfigError(f"missing memory bank for task {kp}")
        bank_a, bank_b = memories[kp]
        prior = stream.tasks[kp - 1]
        if stage == "filter":
            for entry in bank_a:
                examples.append(
                    StageExample(
                        question=entry.question,
                        schema_text=entry.schema_text,
                        subset_text=entry.subset_text,
                        target=entry.subset_text,
                        source_task=prior.name,
                        origin="replay-real",
                    )
                )
        else:
            for entry in bank_b:
                schema = prior.schemas[entry.schema_ref]
                u = unify(schema)
                ast = parse_query(entry.query, prior.lang, schema)
                subset = extract_used_schema(ast, u)
                examples.append(
                    StageExample(
                        question=entry.question,
                        schema_text=build_schema_text(prior.lang, u),
                        subset_text=filter_target_text(prior.lang, subset),
                        target=entry.query,
                        source_task=prior.name,
                        origin=f"replay-{entry.origin}",
                    )
                )
    return StageDataset(stage=stage, task_name=task.name, examples=examples)


@dataclass
class InferResult:
    prediction: str
    subset: SchemaSubset
    used_fallback: bool


def full_subset(u) -> SchemaSubset:
    return SchemaSubset(parent=u, groups=u.groups)


def infer(sample, task: Task, client: GenerationClient) -> InferResult:
    """Two-stage inference; the filter stage can only narrow, never abort."""
    schema = task.schema_for(sample)
    u = unify(schema)
    filter_prompt = render_filter_prompt(task.lang, sample.question, u)
    reply = client.generate(GenRequest(role=ROLE_FILTER, prompt=filter_prompt))
    used_fallback = False
    try:
        subset = parse_unified(
            reply.text, u, fold_case=profile_for(task.lang).target_fold
        )
        if subset.is_empty:
            subset = full_subset(u)
            used_fallback = True
    except SubsetParseError:
        subset = full_subset(u)
        used_fallback = True
    build_prompt = render_build_prompt(task.lang, sample.question, u)
    build_reply = client.generate(GenRequest(role=ROLE_BUILDER, prompt=build_prompt))
    return InferResult(
        prediction=build_reply.text.strip(),
        subset=subset,
        used_fallback=used_fallback,
    )


_WS_RE = re.compile(r"\s+")


def normalize_query_text(text: str) -> str:
    return _WS_RE.sub(" ", text.strip().rstrip(";").strip().lower())


def _has_order_by(ast) -> bool:
    return isinstance(ast, SqlSelect) and bool(ast.order_by)


def accuracy(
    predictions: list[str],
    golds: list[str],
    mode: str,
    task: Task | None = None,
    samples: list | None = None,
) -> float:
    """Fraction of matches under exact or execution comparison.

    Execution mode parses and runs both sides; any error on either side
    counts as a mismatch.
    """
    if len(predictions) != len(golds):
        raise ValueError("prediction/gold lists are misaligned")
    if not predictions:
        return 0.0
    if mode == "exact":
        hits = sum(
            1 for p, g in zip(predictions, golds)
            if p.strip() and normalize_query_text(p) == normalize_query_text(g)
        )
        return hits / len(predictions)
    if mode != "execution":
        raise ConfigError(f"unknown accuracy mode {mode!r}")
    if task is None or samples is None:
        raise ConfigError("execution accuracy needs the task and its samples")
    hits = 0
    for pred, gold, sample in zip(predictions, golds, samples):
        store = task.store_for(sample)
        if store is None:
            raise ConfigError(
                f"execution accuracy needs a store for schema {sample.schema_ref!r}"
            )
        schema = task.schema_for(sample)
        try:
            gold_ast = parse_query(gold, task.lang, schema)
            gold_out = execute(gold_ast, store)
            pred_ast = parse_query(pred, task.lang, schema)
            pred_out = execute(pred_ast, store)
        except CskrError:
            continue
        if result_equal(gold_out, pred_out, ordered=_has_order_by(gold_ast)):
            hits += 1
    return hits / len(predictions)


def default_accuracy_mode(task: Task) -> str:
    """Execution for data-backed languages, exact for dialogue-state trees."""
    return "exact" if task.lang == "top" else "execution"


# --- metrics ------------------------------------------------------------------


@dataclass
class AccuracyMatrix:
    """acc[k][j] grid, 1-based tasks; column 0 holds single-task baselines."""

    num_tasks: int
    values: list[list[float | None]] = field(default_factory=list)

    def __post_init__(self):
        if not self.values:
            self.values = [
                [None] * (self.num_tasks + 1) for _ in range(self.num_tasks)
            ]

    def set(self, k: int, j: int, value: float) -> None:
        self.values[k - 1][j] = value

    def get(self, k: int, j: int) -> float | None:
        return self.values[k - 1][j]

    def to_json(self) -> str:
        return json.dumps(
            {"num_tasks": self.num_tasks, "values": self.values},
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "AccuracyMatrix":
        data = json.loads(text)
        return cls(num_tasks=data["num_tasks"], values=data["values"])

    def require_complete(self) -> None:
        for k in range(1, self.num_tasks + 1):
            if self.get(k, 0) is None or self.get(k, self.num_tasks) is None:
                raise ValueError(f"matrix incomplete at task {k}")
            for j in range(k, self.num_tasks + 1):
                if self.get(k, j) is None:
                    raise ValueError(f"matrix incomplete at acc[{k}][{j}]")


def compute_metrics(matrix: AccuracyMatrix) -> tuple[float, float | None, float | None]:
    """(AA, BWT, FWT); the transfer metrics are absent for single-task runs."""
    matrix.require_complete()
    k_total = matrix.num_tasks
    aa = sum(matrix.get(k, k_total) for k in range(1, k_total + 1)) / k_total
    if k_total == 1:
        return aa, None, None
    bwt = sum(
        matrix.get(k, k_total) - matrix.get(k, k) for k in range(1, k_total)
    ) / (k_total - 1)
    fwt = sum(
        matrix.get(k, k) - matrix.get(k, 0) for k in range(2, k_total + 1)
    ) / (k_total - 1)
    return aa, bwt, fwt
