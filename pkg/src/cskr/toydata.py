"""Deterministic synthetic task bundles for smoke runs and tests.

Every generator derives all content from its seed, so two calls with the same
arguments produce byte-identical bundles.  Questions carry their sample id as
a bracketed prefix, which keeps them unique across a stream -- the oracle
backend relies on that to match prompts back to samples.

Run ``python -m cskr.toydata OUTDIR`` to materialize a three-task stream
(db / kg / dialogue-state) plus a ready-to-run oracle configuration.
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

from .data import Sample, Task, TaskStream, save_task
from .engines import RelationalStore, TableData, TripleStore
from .schema import SourceSchema

REGIONS = ("east", "west", "north")
LABELS = ("red", "green", "blue")


def toy_sql_task(name: str = "toy-sql", n_train: int = 12, n_test: int = 6,
                 seed: int = 0) -> Task:
    rng = random.Random(seed * 7919 + 11)
    schema = SourceSchema.db([
        ("alpha", ["alpha_id", "name", "score", "region"]),
        ("beta", ["beta_id", "alpha_id", "amount", "label"]),
    ])
    alpha_rows = tuple(
        (i, f"name{i}", 10 + rng.randrange(90), REGIONS[rng.randrange(3)])
        for i in range(20)
    )
    beta_rows = tuple(
        (j, rng.randrange(20), 5 + rng.randrange(50), LABELS[rng.randrange(3)])
        for j in range(25)
    )
    store = RelationalStore(tables={
        "alpha": TableData(columns=("alpha_id", "name", "score", "region"), rows=alpha_rows),
        "beta": TableData(columns=("beta_id", "alpha_id", "amount", "label"), rows=beta_rows),
    })
    scores = sorted({r[2] for r in alpha_rows})
    amounts = sorted({r[2] for r in beta_rows})

    def make(i: int, sid: str) -> Sample:
        kind = i % 6
        if kind == 0:
            v = scores[rng.randrange(max(1, len(scores) - 3))]
            query = f"select count(*) from alpha where score > {v}"
            question = f"[{sid}] How many alpha rows score above {v}?"
        elif kind == 1:
            region = REGIONS[i % 3]
            query = f"select name from alpha where region = '{region}'"
            question = f"[{sid}] Which alpha names sit in the {region} region?"
        elif kind == 2:
            v = scores[rng.randrange(len(scores) // 2)]
            query = f"select name from alpha where score >= {v} order by score desc limit 3"
            question = f"[{sid}] Top three alpha names with score at least {v}?"
        elif kind == 3:
            region = REGIONS[(i + 1) % 3]
            query = ("select beta.label from alpha join beta on alpha.alpha_id = beta.alpha_id "
                     f"where alpha.region = '{region}'")
            question = f"[{sid}] Which beta labels attach to alpha rows in {region}?"
        elif kind == 4:
            query = "select region, count(*) from alpha group by region"
            question = f"[{sid}] How many alpha rows per region?"
        else:
            v = amounts[rng.randrange(max(1, len(amounts) - 2))]
            query = ("select name from alpha where alpha_id in "
                     f"(select alpha_id from beta where amount > {v})")
            question = f"[{sid}] Which alpha names have beta amounts above {v}?"
        return Sample(sample_id=sid, question=question, schema_ref="main", query=query)

    train = [make(i, f"{name}-tr{i:03d}") for i in range(n_train)]
    test = [make(i, f"{name}-te{i:03d}") for i in range(n_test)]
    return Task(name=name, lang="sql", train=train, test=test,
                schemas={"main": schema}, stores={"main": store})


def toy_sexpr_task(name: str = "toy-sexpr", n_train: int = 12, n_test: int = 6,
                   seed: int = 0) -> Task:
    rng = random.Random(seed * 7919 + 23)
    artists = [f"m.art{i}" for i in range(6)]
    albums = [f"m.alb{i}" for i in range(6)]
    schema = SourceSchema.kg(
        classes=["mus.artist", "mus.album"],
        relations=[
            ("recorded", "mus.artist", "mus.album"),
            ("influenced", "mus.artist", "mus.artist"),
            ("rating", "mus.album", "type.float"),
        ],
        entities=[(a, f"artist {i}") for i, a in enumerate(artists)]
                 + [(b, f"album {i}") for i, b in enumerate(albums)],
    )
    triples = []
    for i, artist in enumerate(artists):
        triples.append((artist, "mus.artist.recorded", albums[i % len(albums)]))
        triples.append((artist, "mus.artist.recorded", albums[(i + 2) % len(albums)]))
        triples.append((artist, "mus.artist.influenced", artists[(i + 1) % len(artists)]))
    for i, album in enumerate(albums):
        triples.append((album, "mus.album.rating", 1 + rng.randrange(10)))
    store = TripleStore.build(
        triples,
        entity_types={**{a: ["mus.artist"] for a in artists},
                      **{b: ["mus.album"] for b in albums}},
    )

    def make(i: int, sid: str) -> Sample:
        kind = i % 4
        if kind == 0:
            e = albums[i % len(albums)]
            query = f"(AND mus.artist (JOIN mus.artist.recorded {e}))"
            question = f"[{sid}] Which artist recorded {e}?"
        elif kind == 1:
            e = albums[(i + 1) % len(albums)]
            query = f"(COUNT (AND mus.artist (JOIN mus.artist.recorded {e})))"
            question = f"[{sid}] How many artists recorded {e}?"
        elif kind == 2:
            query = "(ARGMAX mus.album mus.album.rating)"
            question = f"[{sid}] Which album has the highest rating?"
        else:
            e = artists[i % len(artists)]
            query = f"(AND mus.artist (JOIN mus.artist.influenced {e}))"
            question = f"[{sid}] Which artist influenced {e}?"
        return Sample(sample_id=sid, question=question, schema_ref="main", query=query)

    train = [make(i, f"{name}-tr{i:03d}") for i in range(n_train)]
    test = [make(i, f"{name}-te{i:03d}") for i in range(n_test)]
    return Task(name=name, lang="sexpr", train=train, test=test,
                schemas={"main": schema}, stores={"main": store})


def toy_sparql_task(name: str = "toy-sparql", n_train: int = 12, n_test: int = 6,
                    seed: int = 0) -> Task:
    rng = random.Random(seed * 7919 + 37)
    cities = [f"m.city{i}" for i in range(6)]
    countries = [f"m.ctry{i}" for i in range(3)]
    langs = [f"m.lang{i}" for i in range(3)]
    schema = SourceSchema.kg(
        classes=["geo.city", "geo.country"],
        relations=[
            ("located_in", "geo.city", "geo.country"),
            ("population", "geo.city", "type.int"),
            ("speaks", "geo.country", "lang.language"),
        ],
        entities=[(c, f"city {i}") for i, c in enumerate(cities)]
                 + [(c, f"country {i}") for i, c in enumerate(countries)]
                 + [(l, f"language {i}") for i, l in enumerate(langs)],
    )
    triples = []
    for i, city in enumerate(cities):
        triples.append((city, "geo.city.located_in", countries[i % 3]))
        triples.append((city, "geo.city.population", 1000 * (1 + rng.randrange(50))))
    for i, country in enumerate(countries):
        triples.append((country, "geo.country.speaks", langs[i % 3]))
    store = TripleStore.build(
        triples,
        entity_types={**{c: ["geo.city"] for c in cities},
                      **{c: ["geo.country"] for c in countries}},
    )
    prefix = "PREFIX ns: <http://rdf.freebase.com/ns/>"

    def make(i: int, sid: str) -> Sample:
        kind = i % 3
        if kind == 0:
            c = countries[i % 3]
            query = f"{prefix} SELECT DISTINCT ?x WHERE {{ ?x ns:geo.city.located_in ns:{c} . }}"
            question = f"[{sid}] Which cities lie in {c}?"
        elif kind == 1:
            c = cities[i % len(cities)]
            query = (f"{prefix} SELECT DISTINCT ?x WHERE {{ ns:{c} ns:geo.city.located_in ?c . "
                     "?c ns:geo.country.speaks ?x . }")
            question = f"[{sid}] What language is spoken where {c} lies?"
        else:
            query = (f"{prefix} SELECT DISTINCT ?x WHERE {{ ?x ns:geo.city.population ?p . "
                     "FILTER ( ?p > 10000 ) }")
            question = f"[{sid}] Which cities have population above ten thousand (case {i})?"
        return Sample(sample_id=sid, question=question, schema_ref="main", query=query)

    train = [make(i, f"{name}-tr{i:03d}") for i in range(n_train)]
    test = [make(i, f"{name}-te{i:03d}") for i in range(n_test)]
    return Task(name=name, lang="sparql", train=train, test=test,
                schemas={"main": schema}, stores={"main": store})


def toy_top_task(name: str = "toy-top", n_train: int = 12, n_test: int = 6,
                 seed: int = 0) -> Task:
    rng = random.Random(seed * 7919 + 53)
    schema = SourceSchema.ds([
        ("in:get", ["weather", "message", "reminder", "timer"]),
        ("in:create", ["alarm", "reminder"]),
        ("in:send_message", []),
        ("in:delete", ["alarm", "timer"]),
    ])
    spans = ("tomorrow", "next week", "at noon", "in paris", "for mom")

    def make(i: int, sid: str) -> Sample:
        kind = i % 4
        span = spans[rng.randrange(len(spans))]
        if kind == 0:
            query = f"[IN:GET_WEATHER [SL:WEATHER {span} ] ]"
            question = f"[{sid}] What is the weather {span}?"
        elif kind == 1:
            query = f"[IN:CREATE_ALARM [SL:REMINDER {span} ] ]"
            question = f"[{sid}] Set an alarm reminder {span}."
        elif kind == 2:
            query = "[IN:SEND_MESSAGE ]"
            question = f"[{sid}] Send a message now (case {i})."
        else:
            query = f"[IN:DELETE_TIMER [SL:TIMER {span} ] ]"
            question = f"[{sid}] Remove the timer {span}."
        return Sample(sample_id=sid, question=question, schema_ref="main", query=query)

    train = [make(i, f"{name}-tr{i:03d}") for i in range(n_train)]
    test = [make(i, f"{name}-te{i:03d}") for i in range(n_test)]
    return Task(name=name, lang="top", train=train, test=test,
                schemas={"main": schema}, stores={})


_FACTORIES = {
    "sql": toy_sql_task,
    "sexpr": toy_sexpr_task,
    "sparql": toy_sparql_task,
    "top": toy_top_task,
}


def toy_stream(langs=("sql", "sexpr", "top"), n_train: int = 12, n_test: int = 6,
               seed: int = 0) -> TaskStream:
    tasks = []
    for i, lang in enumerate(langs):
        tasks.append(_FACTORIES[lang](name=f"toy-{lang}", n_train=n_train,
                                      n_test=n_test, seed=seed + i))
    return TaskStream(tasks=tasks)


def write_toy_stream(out_dir: str | Path, langs=("sql", "sexpr", "top"),
                     n_train: int = 12, n_test: int = 6, seed: int = 0) -> Path:
    """Materialize bundles plus an oracle run configuration; returns the
    config path."""
    out = Path(out_dir)
    stream = toy_stream(langs=langs, n_train=n_train, n_test=n_test, seed=seed)
    paths = []
    for task in stream.tasks:
        bundle = out / "tasks" / task.name
        save_task(task, bundle)
        paths.append(str(bundle))
    config = {
        "stream": paths,
        "seed": seed,
        "memory_size_a": 5,
        "memory_size_b": 5,
        "real_pseudo_ratio": [4, 1],
        "structures_per_attempt": 5,
        "synthesis_mode": "rule",
        "backend": {"mode": "oracle", "oracle": {"policy": "cumulative", "p": 0.0}},
        "learner": {"mode": "oracle"},
    }
    config_path = out / "run_config.json"
    config_path.write_text(json.dumps(config, indent=2) + "\n")
    return config_path


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    if len(args) != 1:
        print("usage: python -m cskr.toydata OUTDIR", file=sys.stderr)
        return 2
    config = write_toy_stream(args[0])
    print(f"wrote toy stream; run config at {config}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
