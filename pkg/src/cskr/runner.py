"""Stream orchestration: train/evaluate phases, persistence and reports.

Training itself is a hook, not an implementation: the runner assembles the
exact stage datasets a fine-tuning job would consume and hands them to the
configured learner -- an oracle-window update for desk runs, an HTTP POST for
external trainers, or nothing.  Everything persisted under the run directory
is deterministic for a fixed seed with oracle backends: memory banks, stage
datasets, matrix and reports.

Phase 0 runs one isolated pass per task to fill the single-task baselines
acc[k][0]; phase 1 walks the stream in order, training, building both memory
banks (clustered real entries plus execution-gated pseudo entries), and
re-evaluating every seen task.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from .backends import (
    ROLE_BUILDER,
    ROLE_FILTER,
    ROLE_QUESTION,
    ROLE_SYNTH,
    EchoBackend,
    GenerationClient,
    HttpChatBackend,
    OracleBackend,
    OracleRecord,
    TemplateQuestionBackend,
)
from .data import Task, TaskStream, load_task
from .embedding import HashingEmbedder
from .errors import ConfigError, CskrError, RunAborted
from .harness import (
    AccuracyMatrix,
    accuracy,
    assemble_stage_dataset,
    compute_metrics,
    default_accuracy_mode,
    infer,
)
from .memory import (
    MemoryEntryB,
    build_real_structure_memory,
    build_schema_memory,
    write_jsonl,
)
from .prompts import filter_target_text
from .queries import parse_query
from .schema import unify
from .synthesis import StructurePool, SynthesisConfig, synthesize_memory
from .unify_ops import extract_used_schema

log = logging.getLogger(__name__)

API_KEY_ENV = "CSKR_API_KEY"


@dataclass
class RunConfig:
    stream_paths: list[str]
    seed: int = 0
    memory_size_a: int = 5
    memory_size_b: int = 5
    real_pseudo_ratio: tuple[int, int] = (4, 1)
    structures_per_attempt: int = 5
    synthesis_mode: str = "rule"
    novelty_required: bool = True
    max_attempts: int | None = None
    accuracy_mode: str | None = None  # None -> per-language default
    train_cap: int | None = 1000
    test_cap: int | None = 300
    strict_heterogeneity: bool = False
    backend: dict = field(default_factory=lambda: {"mode": "oracle"})
    learner: dict = field(default_factory=lambda: {"mode": "oracle"})

    @classmethod
    def from_json(cls, payload: str | dict) -> "RunConfig":
        data = json.loads(payload) if isinstance(payload, str) else dict(payload)
        paths = data.get("stream")
        if not paths or not isinstance(paths, list):
            raise ConfigError("config needs a non-empty 'stream' list of task bundles")
        ratio = data.get("real_pseudo_ratio", [4, 1])
        if len(ratio) != 2 or min(ratio) < 0 or sum(ratio) == 0:
            raise ConfigError(f"bad real_pseudo_ratio: {ratio!r}")
        cfg = cls(
            stream_paths=[str(p) for p in paths],
            seed=int(data.get("seed", 0)),
            memory_size_a=int(data.get("memory_size_a", 5)),
            memory_size_b=int(data.get("memory_size_b", 5)),
            real_pseudo_ratio=(int(ratio[0]), int(ratio[1])),
            structures_per_attempt=int(data.get("structures_per_attempt", 5)),
            synthesis_mode=data.get("synthesis_mode", "rule"),
            novelty_required=bool(data.get("novelty_required", True)),
            max_attempts=data.get("max_attempts"),
            accuracy_mode=data.get("accuracy"),
            train_cap=data.get("train_cap", 1000),
            test_cap=data.get("test_cap", 300),
            strict_heterogeneity=bool(data.get("strict_heterogeneity", False)),
            backend=data.get("backend", {"mode": "oracle"}),
            learner=data.get("learner", {"mode": "oracle"}),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.memory_size_a < 1 or self.memory_size_b < 1:
            raise ConfigError("memory sizes must be >= 1")
        if self.synthesis_mode not in ("rule", "generator"):
            raise ConfigError(f"unknown synthesis mode {self.synthesis_mode!r}")
        if self.accuracy_mode not in (None, "exact", "execution"):
            raise ConfigError(f"unknown accuracy mode {self.accuracy_mode!r}")
        mode = self.backend.get("mode")
        if mode not in ("oracle", "http", "echo"):
            raise ConfigError(f"unknown backend mode {mode!r}")
        if mode == "http":
            roles = self.backend.get("http", {}).get("roles", {})
            for role in (ROLE_FILTER, ROLE_BUILDER):
                if role not in roles:
                    raise ConfigError(f"http backend config missing role {role!r}")
                if "endpoint" not in roles[role] or "model" not in roles[role]:
                    raise ConfigError(f"http role {role!r} needs endpoint and model")
        if self.learner.get("mode") not in ("oracle", "external", "none"):
            raise ConfigError(f"unknown learner mode {self.learner.get('mode')!r}")
        if self.learner.get("mode") == "external" and "endpoint" not in self.learner:
            raise ConfigError("external learner needs an endpoint")

    @property
    def pseudo_size(self) -> int:
        real_w, pseudo_w = self.real_pseudo_ratio
        return self.memory_size_b * pseudo_w // (real_w + pseudo_w)

    @property
    def real_size(self) -> int:
        return self.memory_size_b - self.pseudo_size

    def canonical_dict(self) -> dict:
        return {
            "stream": self.stream_paths,
            "seed": self.seed,
            "memory_size_a": self.memory_size_a,
            "memory_size_b": self.memory_size_b,
            "real_pseudo_ratio": list(self.real_pseudo_ratio),
            "structures_per_attempt": self.structures_per_attempt,
            "synthesis_mode": self.synthesis_mode,
            "novelty_required": self.novelty_required,
            "max_attempts": self.max_attempts,
            "accuracy": self.accuracy_mode,
            "train_cap": self.train_cap,
            "test_cap": self.test_cap,
            "strict_heterogeneity": self.strict_heterogeneity,
            "backend": self.backend,
            "learner": self.learner,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def load_stream(config: RunConfig) -> TaskStream:
    tasks = [
        load_task(p, train_cap=config.train_cap, test_cap=config.test_cap)
        for p in config.stream_paths
    ]
    stream = TaskStream(tasks=tasks)
    stream.validate_heterogeneity(config.strict_heterogeneity)
    names = [t.name for t in tasks]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate task names in stream: {names}")
    return stream


def build_oracle_records(stream: TaskStream) -> list[OracleRecord]:
    records = []
    for task in stream.tasks:
        for sample in (*task.train, *task.test):
            schema = task.schema_for(sample)
            u = unify(schema)
            ast = parse_query(sample.query, task.lang, schema)
            subset = extract_used_schema(ast, u)
            records.append(
                OracleRecord(
                    sample_id=sample.sample_id,
                    task_name=task.name,
                    question=sample.question,
                    outputs={
                        ROLE_FILTER: filter_target_text(task.lang, subset),
                        ROLE_BUILDER: sample.query,
                    },
                )
            )
    return records


def build_client(config: RunConfig, stream: TaskStream) -> tuple[GenerationClient, OracleBackend | None]:
    mode = config.backend.get("mode", "oracle")
    question_backend = TemplateQuestionBackend()
    if mode == "oracle":
        opts = config.backend.get("oracle", {})
        oracle = OracleBackend(
            build_oracle_records(stream),
            p=float(opts.get("p", 0.0)),
            seed=config.seed,
        )
        client = GenerationClient({
            ROLE_FILTER: oracle,
            ROLE_BUILDER: oracle,
            ROLE_QUESTION: question_backend,
            ROLE_SYNTH: oracle,
        })
        return client, oracle
    if mode == "echo":
        replies = config.backend.get("echo", {}).get("replies", "")
        echo = EchoBackend(replies)
        client = GenerationClient({
            ROLE_FILTER: echo,
            ROLE_BUILDER: echo,
            ROLE_QUESTION: question_backend,
            ROLE_SYNTH: echo,
        })
        return client, None
    roles = config.backend.get("http", {}).get("roles", {})
    api_key = os.environ.get(API_KEY_ENV, "")
    backends = {}
    for role, spec in roles.items():
        backends[role] = HttpChatBackend(
            endpoint=spec["endpoint"],
            model=spec["model"],
            api_key=api_key,
            timeout=float(spec.get("timeout", 30.0)),
            max_retries=int(spec.get("max_retries", 3)),
        )
    backends.setdefault(ROLE_QUESTION, question_backend)
    return GenerationClient(backends), None


class OracleLearner:
    """Updates the oracle's learning window instead of fine-tuning."""

    def __init__(self, oracle: OracleBackend, stream: TaskStream, policy: str = "cumulative"):
        if policy not in ("cumulative", "current", "all"):
            raise ConfigError(f"unknown oracle learner policy {policy!r}")
        self.oracle = oracle
        self.stream = stream
        self.policy = policy

    def train_isolated(self, k: int, task: Task, datasets: dict) -> None:
        self.oracle.set_window({task.name})

    def train_stream(self, k: int, task: Task, datasets: dict) -> None:
        names = [t.name for t in self.stream.tasks]
        if self.policy == "all":
            self.oracle.set_window(set(names))
        elif self.policy == "cumulative":
            self.oracle.set_window(set(names[:k]))
        else:
            self.oracle.set_window({task.name})


class ExternalLearner:
    """POSTs stage datasets to a fine-tuning service and expects a 2xx ack."""

    def __init__(self, endpoint: str, timeout: float = 60.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def _post(self, phase: str, k: int, task: Task, datasets: dict) -> None:
        import httpx

        payload = {
            "phase": phase,
            "task_index": k,
            "task": task.name,
            "datasets": {
                stage: [e.to_dict() for e in ds.examples] for stage, ds in datasets.items()
            },
        }
        resp = httpx.post(self.endpoint, json=payload, timeout=self.timeout)
        if resp.status_code // 100 != 2:
            raise CskrError(f"trainer endpoint returned {resp.status_code}")

    def train_isolated(self, k: int, task: Task, datasets: dict) -> None:
        self._post("isolated", k, task, datasets)

    def train_stream(self, k: int, task: Task, datasets: dict) -> None:
        self._post("stream", k, task, datasets)


class NullLearner:
    def train_isolated(self, k: int, task: Task, datasets: dict) -> None:
        pass

    def train_stream(self, k: int, task: Task, datasets: dict) -> None:
        pass


def build_learner(config: RunConfig, oracle: OracleBackend | None, stream: TaskStream):
    mode = config.learner.get("mode", "oracle")
    if mode == "oracle":
        if oracle is None:
            raise ConfigError("oracle learner requires the oracle backend mode")
        return OracleLearner(oracle, stream, policy=config.learner.get("policy", "cumulative"))
    if mode == "external":
        return ExternalLearner(config.learner["endpoint"])
    return NullLearner()


@dataclass
class EvalRecord:
    sample_id: str
    prediction: str
    gold: str
    used_fallback: bool


@dataclass
class MetricsReport:
    aa: float
    bwt: float | None
    fwt: float | None
    matrix: AccuracyMatrix
    task_names: list[str]
    accuracy_modes: dict[str, str]
    config_hash: str
    seed: int
    backend_ids: dict[str, str]

    def to_dict(self) -> dict:
        return {
            "aa": self.aa,
            "bwt": self.bwt,
            "fwt": self.fwt,
            "matrix": json.loads(self.matrix.to_json()),
            "task_names": self.task_names,
            "accuracy_modes": self.accuracy_modes,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "backend_ids": self.backend_ids,
        }

    def to_text(self) -> str:
        def pct(v):
            return "n/a" if v is None else f"{100 * v:.1f}"

        lines = [
            f"AA {pct(self.aa)} | BWT {pct(self.bwt)} | FWT {pct(self.fwt)}",
            "",
            "accuracy matrix (rows: tasks, cols: baseline then after-task-j):",
        ]
        header = ["task"] + ["base"] + [f"j={j}" for j in range(1, self.matrix.num_tasks + 1)]
        lines.append("  ".join(f"{h:>10}" for h in header))
        for k in range(1, self.matrix.num_tasks + 1):
            row = [self.task_names[k - 1][:10]]
            for j in range(0, self.matrix.num_tasks + 1):
                v = self.matrix.get(k, j)
                row.append("." if v is None else f"{100 * v:.1f}")
            lines.append("  ".join(f"{c:>10}" for c in row))
        return "\n".join(lines) + "\n"


def evaluate_task(task: Task, client: GenerationClient, mode: str) -> tuple[float, list[EvalRecord]]:
    predictions, golds, records = [], [], []
    for sample in task.test:
        result = infer(sample, task, client)
        predictions.append(result.prediction)
        golds.append(sample.query)
        records.append(
            EvalRecord(
                sample_id=sample.sample_id,
                prediction=result.prediction,
                gold=sample.query,
                used_fallback=result.used_fallback,
            )
        )
    frac = accuracy(predictions, golds, mode, task=task, samples=task.test)
    return frac, records


def _pseudo_entries(task: Task, config: RunConfig, client: GenerationClient,
                    count: int, task_index: int) -> list[MemoryEntryB]:
    if count <= 0:
        return []
    pool = StructurePool.from_task(task)
    synth_cfg = SynthesisConfig(
        structures_per_attempt=config.structures_per_attempt,
        target_count=count,
        max_attempts=config.max_attempts,
        mode=config.synthesis_mode,
        novelty_required=config.novelty_required,
        seed=config.seed * 9_973 + task_index,
    )
    result = synthesize_memory(pool, task.stores, client, synth_cfg, task.lang)
    if result.exhausted:
        log.warning("task %s: pseudo synthesis retained %d/%d samples",
                    task.name, len(result.samples), count)
    return [
        MemoryEntryB(
            question=s.question,
            schema_ref=s.schema_ref,
            query=s.query,
            skeleton=s.skeleton,
            origin="pseudo",
        )
        for s in result.samples
    ]


def run_stream(stream: TaskStream, config: RunConfig, client: GenerationClient,
               learner, out_dir: str | Path) -> MetricsReport:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    k_total = len(stream)
    matrix = AccuracyMatrix(num_tasks=k_total)
    modes = {
        t.name: (config.accuracy_mode or default_accuracy_mode(t)) for t in stream.tasks
    }
    memories: dict[int, tuple[list, list]] = {}
    embedder = HashingEmbedder()

    def checkpoint(stage: str, exc: Exception):
        path = out / "checkpoint.json"
        path.write_text(json.dumps({
            "failed_stage": stage,
            "matrix": json.loads(matrix.to_json()),
            "error": str(exc),
        }, indent=2))
        raise RunAborted(f"run aborted during {stage}: {exc}", str(path)) from exc

    # phase 0: isolated single-task baselines
    for k, task in enumerate(stream.tasks, start=1):
        try:
            datasets = {
                "filter": assemble_stage_dataset(stream, k, "filter", {}),
                "build": assemble_stage_dataset(stream, k, "build", {}),
            }
            learner.train_isolated(k, task, datasets)
            frac, _ = evaluate_task(task, client, modes[task.name])
            matrix.set(k, 0, frac)
        except CskrError as exc:
            checkpoint(f"baseline task {k}", exc)

    # phase 1: sequential stream
    for k, task in enumerate(stream.tasks, start=1):
        try:
            datasets = {
                "filter": assemble_stage_dataset(stream, k, "filter", memories),
                "build": assemble_stage_dataset(stream, k, "build", memories),
            }
            ds_dir = out / "datasets"
            ds_dir.mkdir(exist_ok=True)
            for stage, ds in datasets.items():
                (ds_dir / f"task{k}_{stage}.jsonl").write_text(ds.to_jsonl())
            learner.train_stream(k, task, datasets)

            bank_a = build_schema_memory(task, embedder, config.memory_size_a)
            bank_real = build_real_structure_memory(task, embedder, config.real_size)
            bank_pseudo = _pseudo_entries(task, config, client, config.pseudo_size, k)
            bank_b = bank_real + bank_pseudo
            mem_dir = out / "memory" / f"task{k}"
            mem_dir.mkdir(parents=True, exist_ok=True)
            write_jsonl(mem_dir / "a.jsonl", bank_a)
            write_jsonl(mem_dir / "b.jsonl", bank_b)
            memories[k] = (bank_a, bank_b)

            for i in range(1, k + 1):
                seen = stream.tasks[i - 1]
                frac, _ = evaluate_task(seen, client, modes[seen.name])
                matrix.set(i, k, frac)
        except CskrError as exc:
            checkpoint(f"stream task {k}", exc)

    aa, bwt, fwt = compute_metrics(matrix)
    report = MetricsReport(
        aa=aa,
        bwt=bwt,
        fwt=fwt,
        matrix=matrix,
        task_names=[t.name for t in stream.tasks],
        accuracy_modes=modes,
        config_hash=config.config_hash(),
        seed=config.seed,
        backend_ids=client.identifiers,
    )
    (out / "matrix.json").write_text(matrix.to_json())
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    (out / "report.txt").write_text(report.to_text())
    return report


def run_from_config(config: RunConfig, out_dir: str | Path) -> MetricsReport:
    stream = load_stream(config)
    client, oracle = build_client(config, stream)
    learner = build_learner(config, oracle, stream)
    return run_stream(stream, config, client, learner, out_dir)
