"""Schema-usage extraction: which unified-schema elements a query touches.

Slot tokens in top trees never contribute -- the published filtering targets
for dialogue-state tasks consist of the intent resolution alone, so only
intent tokens count as schema references there.
"""

from __future__ import annotations

from .errors import DanglingReferenceError
from .queries.nodes import (
    ColumnRef,
    EntityRef,
    IntentRef,
    Literal,
    Placeholder,
    SlotRef,
    TableRef,
    iter_leaves,
)
from .schema import SchemaSubset, UnifiedSchema, subset_from_elements


def extract_used_schema(ast, u: UnifiedSchema) -> SchemaSubset:
    """Map every resolved schema reference in ``ast`` back through provenance."""
    elements: list[tuple[str, str | None]] = []
    for leaf in iter_leaves(ast):
        if isinstance(leaf, Placeholder):
            raise ValueError("cannot extract schema usage from a skeleton")
        if isinstance(leaf, TableRef):
            elements.append((leaf.name, None))
        elif isinstance(leaf, ColumnRef):
            if not leaf.table:
                raise DanglingReferenceError(
                    f"column {leaf.name!r} was parsed without schema resolution"
                )
            elements.append((leaf.table, leaf.name))
        elif isinstance(leaf, IntentRef):
            elements.append((leaf.phi, leaf.suffix))
        elif isinstance(leaf, (SlotRef, EntityRef, Literal)):
            continue
    return subset_from_elements(u, elements)
