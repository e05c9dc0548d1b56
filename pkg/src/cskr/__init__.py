"""Continual structured-knowledge reasoning toolkit.

Unifies database / knowledge-graph / dialogue-state schemas into one textual
form, parses and abstracts the four query languages, builds dual-perspective
replay memories with execution-validated pseudo samples, and evaluates task
streams with continual-learning metrics against pluggable generator backends.
"""

from .errors import CskrError
from .schema import SourceSchema, UnifiedSchema, parse_unified, render_unified, unify

__version__ = "0.1.0"

__all__ = [
    "CskrError",
    "SourceSchema",
    "UnifiedSchema",
    "__version__",
    "parse_unified",
    "render_unified",
    "unify",
]
