"""Source schemas and their DB-style unified representation.

Three kinds of structured knowledge are supported: relational databases
(``db``), knowledge graphs (``kg``) and dialogue states (``ds``).  Every kind
is converted into the same abstract shape: a list of groups, each pairing an
abstract table name (phi) with abstract column names (psi).  The textual form
joins groups with ``" | "`` and renders each group as ``"phi : psi1, psi2"``;
database schemas separate columns with ``" , "`` instead, matching the native
serialization of each benchmark family.

All types are frozen; functions are pure, so concurrent use needs no locks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import DanglingReferenceError, SchemaInvalidError, SubsetParseError

DB, KG, DS = "db", "kg", "ds"
_KINDS = (DB, KG, DS)


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[str, ...]


@dataclass(frozen=True)
class Relation:
    name: str
    domain: str
    range: str

    @property
    def full_name(self) -> str:
        """Query-form identifier, e.g. ``location.country.languages_spoken``."""
        return f"{self.domain}.{self.name}"


@dataclass(frozen=True)
class Entity:
    entity_id: str
    label: str


@dataclass(frozen=True)
class Intent:
    name: str
    slots: tuple[str, ...]


@dataclass(frozen=True)
class SourceSchema:
    """Tagged union over the three source schema forms."""

    kind: str
    tables: tuple[Table, ...] = ()
    classes: tuple[str, ...] = ()
    relations: tuple[Relation, ...] = ()
    entities: tuple[Entity, ...] = ()
    intents: tuple[Intent, ...] = ()

    @classmethod
    def db(cls, tables: Iterable[tuple[str, Iterable[str]]]) -> "SourceSchema":
        s = cls(kind=DB, tables=tuple(Table(n, tuple(cs)) for n, cs in tables))
        s.validate()
        return s

    @classmethod
    def kg(
        cls,
        classes: Iterable[str],
        relations: Iterable[tuple[str, str, str]],
        entities: Iterable[tuple[str, str]] = (),
    ) -> "SourceSchema":
        s = cls(
            kind=KG,
            classes=tuple(classes),
            relations=tuple(Relation(*r) for r in relations),
            entities=tuple(Entity(*e) for e in entities),
        )
        s.validate()
        return s

    @classmethod
    def ds(cls, intents: Iterable[tuple[str, Iterable[str]]]) -> "SourceSchema":
        s = cls(kind=DS, intents=tuple(Intent(n, tuple(sl)) for n, sl in intents))
        s.validate()
        return s

    @classmethod
    def from_json(cls, payload: str | Mapping) -> "SourceSchema":
        data = json.loads(payload) if isinstance(payload, str) else payload
        kind = data.get("type")
        if kind == DB:
            return cls.db((t["name"], t["columns"]) for t in data.get("tables", []))
        if kind == KG:
            return cls.kg(
                data.get("classes", []),
                ((r["name"], r["domain"], r["range"]) for r in data.get("relations", [])),
                ((e["id"], e["label"]) for e in data.get("entities", [])),
            )
        if kind == DS:
            return cls.ds((i["name"], i["slots"]) for i in data.get("intents", []))
        raise SchemaInvalidError(f"unknown schema type: {kind!r}")

    def to_json(self) -> dict:
        if self.kind == DB:
            return {
                "type": DB,
                "tables": [{"name": t.name, "columns": list(t.columns)} for t in self.tables],
            }
        if self.kind == KG:
            return {
                "type": KG,
                "classes": list(self.classes),
                "relations": [
                    {"name": r.name, "domain": r.domain, "range": r.range} for r in self.relations
                ],
                "entities": [{"id": e.entity_id, "label": e.label} for e in self.entities],
            }
        return {
            "type": DS,
            "intents": [{"name": i.name, "slots": list(i.slots)} for i in self.intents],
        }

    def validate(self) -> None:
        if self.kind not in _KINDS:
            raise SchemaInvalidError(f"unknown schema kind: {self.kind!r}")
        if self.kind == DB:
            _check_unique((t.name for t in self.tables), "table")
            for t in self.tables:
                _check_unique(t.columns, f"column of table {t.name!r}")
        elif self.kind == KG:
            _check_unique(self.classes, "class")
            _check_unique((e.entity_id for e in self.entities), "entity id")
            known = set(self.classes)
            seen: set[tuple[str, str]] = set()
            for r in self.relations:
                if r.domain not in known:
                    raise SchemaInvalidError(
                        f"relation {r.name!r} has undeclared domain class {r.domain!r}"
                    )
                if (r.domain, r.name) in seen:
                    raise SchemaInvalidError(
                        f"duplicate relation {r.name!r} on class {r.domain!r}"
                    )
                seen.add((r.domain, r.name))
        else:
            _check_unique((i.name for i in self.intents), "intent")
            for i in self.intents:
                _check_unique(i.slots, f"slot of intent {i.name!r}")


def _check_unique(names: Iterable[str], what: str) -> None:
    seen: set[str] = set()
    for n in names:
        if n in seen:
            raise SchemaInvalidError(f"duplicate {what}: {n!r}")
        seen.add(n)


# provenance descriptors: ("table", name) / ("column", table, name) /
# ("class", name) / ("relation", domain, name) / ("intent", name) /
# ("slot", intent, name)
Provenance = tuple


@dataclass(frozen=True)
class UnifiedSchema:
    """Abstract tables with abstract columns plus provenance into the source."""

    source: SourceSchema
    groups: tuple[tuple[str, tuple[str, ...]], ...]
    provenance: Mapping[tuple[str, str | None], Provenance] = field(hash=False)

    @property
    def kind(self) -> str:
        return self.source.kind

    def group(self, phi: str) -> tuple[str, ...] | None:
        for name, psis in self.groups:
            if name == phi:
                return psis
        return None

    def has(self, phi: str, psi: str | None = None) -> bool:
        psis = self.group(phi)
        if psis is None:
            return False
        return psi is None or psi in psis


def unify(schema: SourceSchema) -> UnifiedSchema:
    """Convert any source schema form into the unified representation."""
    schema.validate()
    groups: list[tuple[str, tuple[str, ...]]] = []
    prov: dict[tuple[str, str | None], Provenance] = {}
    if schema.kind == DB:
        for t in schema.tables:
            groups.append((t.name, t.columns))
            prov[(t.name, None)] = ("table", t.name)
            for c in t.columns:
                prov[(t.name, c)] = ("column", t.name, c)
    elif schema.kind == KG:
        for cls in schema.classes:
            rels = tuple(r.name for r in schema.relations if r.domain == cls)
            groups.append((cls, rels))
            prov[(cls, None)] = ("class", cls)
            for r in rels:
                prov[(cls, r)] = ("relation", cls, r)
    else:
        for i in schema.intents:
            groups.append((i.name, i.slots))
            prov[(i.name, None)] = ("intent", i.name)
            for s in i.slots:
                prov[(i.name, s)] = ("slot", i.name, s)
    return UnifiedSchema(source=schema, groups=tuple(groups), provenance=prov)


def _fold(text: str, case: str | None) -> str:
    if case == "upper":
        return text.upper()
    if case == "lower":
        return text.lower()
    return text


def render_groups(
    groups: Iterable[tuple[str, Iterable[str]]],
    *,
    psi_sep: str = ", ",
    case: str | None = None,
) -> str:
    parts = []
    for phi, psis in groups:
        psis = list(psis)
        if psis:
            parts.append(_fold(f"{phi} : {psi_sep.join(psis)}", case))
        else:
            parts.append(_fold(phi, case))
    return " | ".join(parts)


def render_unified(
    u: UnifiedSchema,
    *,
    include_entities: bool = False,
    case: str | None = None,
    psi_sep: str | None = None,
) -> str:
    """Render the textual form of a unified schema.

    ``psi_sep`` defaults to ``" , "`` for db sources and ``", "`` otherwise.
    ``include_entities`` prefixes kg entities as ``"label: id"`` groups, which
    query-building prompts use; entities are never part of the groups proper.
    """
    sep = psi_sep if psi_sep is not None else (" , " if u.kind == DB else ", ")
    body = render_groups(u.groups, psi_sep=sep, case=case)
    if include_entities and u.kind == KG and u.source.entities:
        prefix = " | ".join(f"{e.label}: {e.entity_id}" for e in u.source.entities)
        return f"{prefix} | {body}" if body else prefix
    return body


@dataclass(frozen=True)
class SchemaSubset:
    """A selection of (phi, psi) pairs from a parent unified schema.

    ``groups`` follows the parent's ordering.  ``unknown`` collects elements
    from generator output that do not exist in the parent; they are reported
    rather than dropped so downstream stages can keep going.
    """

    parent: UnifiedSchema
    groups: tuple[tuple[str, tuple[str, ...]], ...]
    unknown: tuple[tuple[str, str | None], ...] = ()

    @property
    def is_empty(self) -> bool:
        return not self.groups

    def render(self, *, case: str | None = None, psi_sep: str | None = None) -> str:
        sep = psi_sep if psi_sep is not None else (" , " if self.parent.kind == DB else ", ")
        return render_groups(self.groups, psi_sep=sep, case=case)

    def sort_key_text(self) -> str:
        """Canonical order-insensitive rendering used as a clustering key."""
        parts = []
        for phi, psis in sorted(self.groups):
            parts.append(f"{phi} : {', '.join(sorted(psis))}" if psis else phi)
        return " | ".join(parts)

    def elements(self) -> tuple[tuple[str, str | None], ...]:
        out: list[tuple[str, str | None]] = []
        for phi, psis in self.groups:
            if psis:
                out.extend((phi, psi) for psi in psis)
            else:
                out.append((phi, None))
        return tuple(out)


def subset_from_elements(
    parent: UnifiedSchema, elements: Iterable[tuple[str, str | None]]
) -> SchemaSubset:
    """Build a subset in parent order from (phi, psi-or-None) pairs."""
    wanted: dict[str, set[str]] = {}
    bare: set[str] = set()
    for phi, psi in elements:
        if not parent.has(phi, psi):
            raise DanglingReferenceError(f"element not in schema: ({phi!r}, {psi!r})")
        if psi is None:
            bare.add(phi)
        else:
            wanted.setdefault(phi, set()).add(psi)
    groups = []
    for phi, psis in parent.groups:
        if phi in wanted:
            groups.append((phi, tuple(p for p in psis if p in wanted[phi])))
        elif phi in bare:
            groups.append((phi, ()))
    return SchemaSubset(parent=parent, groups=tuple(groups))


def parse_unified(text: str, parent: UnifiedSchema, *, fold_case: bool = False) -> SchemaSubset:
    """Parse generator output in the unified textual format against a parent.

    Unknown phis/psis go to the ``unknown`` report.  ``fold_case`` matches
    case-insensitively (dialogue-state replies are upper-cased by convention).
    Raises :class:`SubsetParseError` only for structurally broken text such as
    empty group segments.
    """
    text = text.strip()
    if not text:
        return SchemaSubset(parent=parent, groups=())

    def norm(s: str) -> str:
        return s.casefold() if fold_case else s

    phi_by_norm = {norm(phi): (phi, psis) for phi, psis in parent.groups}
    selected: dict[str, set[str]] = {}
    bare: set[str] = set()
    unknown: list[tuple[str, str | None]] = []
    for segment in text.split("|"):
        segment = segment.strip()
        if not segment:
            raise SubsetParseError(f"empty schema group in: {text!r}")
        if " : " in segment:
            phi_text, rest = segment.split(" : ", 1)
            psi_texts = [p.strip() for p in rest.split(",")]
        else:
            phi_text, psi_texts = segment, []
        phi_text = phi_text.strip()
        if not phi_text:
            raise SubsetParseError(f"missing group name in: {segment!r}")
        hit = phi_by_norm.get(norm(phi_text))
        if hit is None:
            unknown.append((phi_text, None))
            unknown.extend((phi_text, p) for p in psi_texts if p)
            continue
        phi, psis = hit
        if not psi_texts:
            bare.add(phi)
        psi_by_norm = {norm(p): p for p in psis}
        for p in psi_texts:
            if not p:
                raise SubsetParseError(f"empty column name in group {phi_text!r}")
            got = psi_by_norm.get(norm(p))
            if got is None:
                unknown.append((phi, p))
            else:
                selected.setdefault(phi, set()).add(got)
    groups = []
    for phi, psis in parent.groups:
        if phi in selected:
            groups.append((phi, tuple(p for p in psis if p in selected[phi])))
        elif phi in bare:
            groups.append((phi, ()))
    return SchemaSubset(parent=parent, groups=tuple(groups), unknown=tuple(unknown))
