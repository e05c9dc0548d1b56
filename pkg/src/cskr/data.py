"""Task bundles: samples, schemas and stores on disk.

A task bundle directory holds::

    train.jsonl / test.jsonl    {"id", "question", "schema_ref", "query", "lang"}
    schemas/<ref>.json          source schema (db / kg / ds)
    stores/<ref>.json           relational store (db tasks)
    stores/<ref>.jsonl          triple store (kg tasks)

Dialogue-state tasks have no store files; execution validates against the
schema itself.  When a split cap is configured, rows are kept by ascending
sample id, which makes subsampling reproducible across machines.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .engines import RelationalStore, TripleStore
from .errors import ConfigError
from .schema import SourceSchema

LANG_TO_KIND = {"sql": "db", "sexpr": "kg", "sparql": "kg", "top": "ds"}


@dataclass(frozen=True)
class Sample:
    sample_id: str
    question: str
    schema_ref: str
    query: str


@dataclass
class Task:
    name: str
    lang: str
    train: list[Sample]
    test: list[Sample]
    schemas: dict[str, SourceSchema]
    stores: dict[str, object] = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return LANG_TO_KIND[self.lang]

    def schema_for(self, sample: Sample) -> SourceSchema:
        try:
            return self.schemas[sample.schema_ref]
        except KeyError:
            raise ConfigError(
                f"task {self.name!r}: schema {sample.schema_ref!r} missing"
            ) from None

    def store_for(self, sample: Sample):
        """Execution target for a sample: data store, or the schema for top."""
        if self.lang == "top":
            return self.schema_for(sample)
        return self.stores.get(sample.schema_ref)


@dataclass
class TaskStream:
    tasks: list[Task]

    def __len__(self) -> int:
        return len(self.tasks)

    def validate_heterogeneity(self, strict: bool = False) -> None:
        """With ``strict``, every pair of tasks must differ in knowledge kind."""
        if not strict:
            return
        kinds = [t.kind for t in self.tasks]
        for i in range(len(kinds)):
            for j in range(i + 1, len(kinds)):
                if kinds[i] == kinds[j]:
                    raise ConfigError(
                        f"tasks {self.tasks[i].name!r} and {self.tasks[j].name!r} "
                        f"share knowledge kind {kinds[i]!r}"
                    )


def _load_split(path: Path, cap: int | None) -> tuple[list[Sample], str | None]:
    samples = []
    lang = None
    if not path.exists():
        return samples, lang
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            lang = row.get("lang", lang)
            samples.append(
                Sample(
                    sample_id=str(row.get("id", f"{i:06d}")),
                    question=row["question"],
                    schema_ref=row["schema_ref"],
                    query=row["query"],
                )
            )
    samples.sort(key=lambda s: s.sample_id)
    if cap is not None:
        samples = samples[:cap]
    return samples, lang


def load_task(
    bundle_dir: str | Path,
    name: str | None = None,
    train_cap: int | None = None,
    test_cap: int | None = None,
) -> Task:
    bundle = Path(bundle_dir)
    if not bundle.is_dir():
        raise ConfigError(f"task bundle {bundle} is not a directory")
    train, lang1 = _load_split(bundle / "train.jsonl", train_cap)
    test, lang2 = _load_split(bundle / "test.jsonl", test_cap)
    lang = lang1 or lang2
    if lang is None:
        raise ConfigError(f"task bundle {bundle} has no samples")
    if lang not in LANG_TO_KIND:
        raise ConfigError(f"unsupported language {lang!r} in {bundle}")
    schemas: dict[str, SourceSchema] = {}
    schema_dir = bundle / "schemas"
    if schema_dir.is_dir():
        for f in sorted(schema_dir.glob("*.json")):
            schemas[f.stem] = SourceSchema.from_json(f.read_text())
    stores: dict[str, object] = {}
    store_dir = bundle / "stores"
    if store_dir.is_dir():
        for f in sorted(store_dir.iterdir()):
            if f.suffix == ".json":
                stores[f.stem] = RelationalStore.from_json(f.read_text())
            elif f.suffix == ".jsonl":
                stores[f.stem] = TripleStore.from_jsonl(f.read_text())
    task = Task(
        name=name or bundle.name,
        lang=lang,
        train=train,
        test=test,
        schemas=schemas,
        stores=stores,
    )
    for sample in (*train, *test):
        if sample.schema_ref not in schemas:
            raise ConfigError(
                f"task {task.name!r}: sample {sample.sample_id} references "
                f"missing schema {sample.schema_ref!r}"
            )
    return task


def save_task(task: Task, bundle_dir: str | Path) -> Path:
    bundle = Path(bundle_dir)
    (bundle / "schemas").mkdir(parents=True, exist_ok=True)
    for split, rows in (("train", task.train), ("test", task.test)):
        with open(bundle / f"{split}.jsonl", "w", encoding="utf-8") as fh:
            for s in rows:
                fh.write(
                    json.dumps(
                        {
                            "id": s.sample_id,
                            "question": s.question,
                            "schema_ref": s.schema_ref,
                            "query": s.query,
                            "lang": task.lang,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
    for ref, schema in task.schemas.items():
        (bundle / "schemas" / f"{ref}.json").write_text(
            json.dumps(schema.to_json(), indent=2) + "\n"
        )
    if task.stores:
        (bundle / "stores").mkdir(exist_ok=True)
        for ref, store in task.stores.items():
            if isinstance(store, RelationalStore):
                (bundle / "stores" / f"{ref}.json").write_text(
                    json.dumps(store.to_json(), indent=2) + "\n"
                )
            elif isinstance(store, TripleStore):
                (bundle / "stores" / f"{ref}.jsonl").write_text(store.to_jsonl())
    return bundle
