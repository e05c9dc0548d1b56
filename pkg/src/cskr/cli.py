"""Command-line entry point.

Subcommands: ingest (validate task bundles), run (execute a stream config),
synthesize (standalone pseudo-sample generation), memory build (persist
replay banks for one task), report (re-render a persisted accuracy matrix).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .backends import (
    ROLE_BUILDER,
    ROLE_FILTER,
    ROLE_QUESTION,
    ROLE_SYNTH,
    GenerationClient,
    TemplateQuestionBackend,
)
from .data import load_task, save_task
from .errors import ConfigError, CskrError, RunAborted
from .harness import AccuracyMatrix, compute_metrics
from .memory import MemoryEntryB, build_real_structure_memory, build_schema_memory, write_jsonl
from .queries import parse_query
from .runner import MetricsReport, RunConfig, build_client, load_stream, run_from_config
from .schema import unify
from .synthesis import StructurePool, SynthesisConfig, synthesize_memory
from .unify_ops import extract_used_schema

log = logging.getLogger("cskr")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cskr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="validate task bundles")
    p_ingest.add_argument("tasks", nargs="+", help="task bundle directories")
    p_ingest.add_argument("--out", required=True, help="output directory")
    p_ingest.add_argument("--lenient", action="store_true",
                          help="quarantine bad rows instead of failing")

    p_run = sub.add_parser("run", help="run a continual task stream")
    p_run.add_argument("--config", required=True, help="run configuration JSON")
    p_run.add_argument("--out", required=True, help="run output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override config seed")
    p_run.add_argument("--accuracy", choices=["exact", "execution"], default=None)

    p_syn = sub.add_parser("synthesize", help="generate execution-gated pseudo samples")
    p_syn.add_argument("--task", required=True, help="task bundle directory")
    p_syn.add_argument("--count", type=int, default=1)
    p_syn.add_argument("--mode", choices=["rule", "generator"], default="rule")
    p_syn.add_argument("--out", required=True, help="output JSON-lines file")
    p_syn.add_argument("--seed", type=int, default=0)
    p_syn.add_argument("--config", default=None,
                       help="run config providing a backend (generator mode)")
    p_syn.add_argument("--allow-partial", action="store_true")

    p_mem = sub.add_parser("memory", help="replay memory operations")
    mem_sub = p_mem.add_subparsers(dest="memory_command", required=True)
    p_build = mem_sub.add_parser("build", help="build and persist both banks for a task")
    p_build.add_argument("--task", required=True)
    p_build.add_argument("--out", required=True)
    p_build.add_argument("--size-a", type=int, default=5)
    p_build.add_argument("--size-b", type=int, default=5)
    p_build.add_argument("--ratio", default="4:1", help="real:pseudo ratio")
    p_build.add_argument("--seed", type=int, default=0)
    p_build.add_argument("--mode", choices=["rule", "generator"], default="rule")

    p_rep = sub.add_parser("report", help="re-render a persisted matrix")
    p_rep.add_argument("--matrix", required=True)
    p_rep.add_argument("--out", default=None, help="write report text here")

    return parser


def _default_client() -> GenerationClient:
    return GenerationClient({ROLE_QUESTION: TemplateQuestionBackend()})


def cmd_ingest(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    any_invalid = False
    reports = []
    for bundle in args.tasks:
        task = load_task(bundle)
        failures = []
        good_train, good_test = [], []
        for split, samples, keep in (("train", task.train, good_train),
                                     ("test", task.test, good_test)):
            for sample in samples:
                try:
                    schema = task.schema_for(sample)
                    ast = parse_query(sample.query, task.lang, schema)
                    extract_used_schema(ast, unify(schema))
                    keep.append(sample)
                except CskrError as exc:
                    failures.append({
                        "split": split,
                        "id": sample.sample_id,
                        "query": sample.query,
                        "error": str(exc),
                    })
        reports.append({
            "task": task.name,
            "total": len(task.train) + len(task.test),
            "valid": len(good_train) + len(good_test),
            "failures": failures,
        })
        if failures:
            any_invalid = True
            for f in failures:
                log.error("%s %s/%s: %s", task.name, f["split"], f["id"], f["error"])
        task_out = out / task.name
        task.train, task.test = good_train, good_test
        save_task(task, task_out)
        if failures:
            with open(task_out / "quarantine.jsonl", "w", encoding="utf-8") as fh:
                for f in failures:
                    fh.write(json.dumps(f, sort_keys=True) + "\n")
    (out / "validation_report.json").write_text(json.dumps(reports, indent=2) + "\n")
    for r in reports:
        print(f"{r['task']}: {r['valid']}/{r['total']} valid, "
              f"{len(r['failures'])} failures")
    if any_invalid and not args.lenient:
        return 1
    return 0


def cmd_run(args) -> int:
    config = RunConfig.from_json(Path(args.config).read_text())
    if args.seed is not None:
        config.seed = args.seed
    if args.accuracy is not None:
        config.accuracy_mode = args.accuracy
    config.validate()
    try:
        report = run_from_config(config, args.out)
    except RunAborted as exc:
        log.error("%s (checkpoint: %s)", exc, exc.checkpoint_path)
        return 1
    print(report.to_text())
    return 0


def cmd_synthesize(args) -> int:
    task = load_task(args.task)
    pool = StructurePool.from_task(task)
    if args.config:
        config = RunConfig.from_json(Path(args.config).read_text())
        from .data import TaskStream

        client, _ = build_client(config, TaskStream(tasks=[task]))
    else:
        if args.mode == "generator":
            raise ConfigError("generator mode needs --config with a backend section")
        client = _default_client()
    cfg = SynthesisConfig(
        target_count=args.count,
        mode=args.mode,
        seed=args.seed,
    )
    result = synthesize_memory(pool, task.stores, client, cfg, task.lang)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for s in result.samples:
            fh.write(json.dumps(s.to_dict(), sort_keys=True) + "\n")
    print(f"wrote {len(result.samples)}/{args.count} pseudo samples "
          f"({result.attempts_used} attempts)")
    if result.exhausted:
        log.warning("attempt budget exhausted before reaching the target")
        return 0 if args.allow_partial else 1
    return 0


def cmd_memory_build(args) -> int:
    try:
        real_w, pseudo_w = (int(x) for x in args.ratio.split(":"))
    except ValueError:
        raise ConfigError(f"bad ratio {args.ratio!r}, expected like 4:1") from None
    if real_w < 0 or pseudo_w < 0 or real_w + pseudo_w == 0:
        raise ConfigError(f"bad ratio {args.ratio!r}")
    task = load_task(args.task)
    from .embedding import HashingEmbedder

    embedder = HashingEmbedder()
    pseudo_count = args.size_b * pseudo_w // (real_w + pseudo_w)
    real_count = args.size_b - pseudo_count
    bank_a = build_schema_memory(task, embedder, args.size_a)
    bank_b = build_real_structure_memory(task, embedder, real_count)
    if pseudo_count:
        pool = StructurePool.from_task(task)
        cfg = SynthesisConfig(target_count=pseudo_count, mode=args.mode, seed=args.seed)
        result = synthesize_memory(pool, task.stores, _default_client(), cfg, task.lang)
        bank_b = bank_b + [
            MemoryEntryB(question=s.question, schema_ref=s.schema_ref, query=s.query,
                         skeleton=s.skeleton, origin="pseudo")
            for s in result.samples
        ]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "a.jsonl", bank_a)
    write_jsonl(out / "b.jsonl", bank_b)
    print(f"wrote {len(bank_a)} schema-view and {len(bank_b)} structure-view entries")
    return 0


def cmd_report(args) -> int:
    matrix = AccuracyMatrix.from_json(Path(args.matrix).read_text())
    aa, bwt, fwt = compute_metrics(matrix)
    sibling = Path(args.matrix).parent / "report.json"
    if sibling.exists():
        meta = json.loads(sibling.read_text())
        names = meta.get("task_names", [])
        modes = meta.get("accuracy_modes", {})
        config_hash = meta.get("config_hash", "")
        seed = meta.get("seed", 0)
        backend_ids = meta.get("backend_ids", {})
    else:
        names, modes, config_hash, seed, backend_ids = [], {}, "", 0, {}
    if len(names) != matrix.num_tasks:
        names = [f"task{k}" for k in range(1, matrix.num_tasks + 1)]
    report = MetricsReport(
        aa=aa, bwt=bwt, fwt=fwt, matrix=matrix, task_names=names,
        accuracy_modes=modes, config_hash=config_hash, seed=seed,
        backend_ids=backend_ids,
    )
    text = report.to_text()
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "ingest":
            return cmd_ingest(args)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "synthesize":
            return cmd_synthesize(args)
        if args.command == "memory":
            return cmd_memory_build(args)
        if args.command == "report":
            return cmd_report(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return 2
    except CskrError as exc:
        log.error("%s", exc)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
