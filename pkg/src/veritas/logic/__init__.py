"""Ground propositional logic: syntax, parsing, and satisfiability."""

from .parser import ParseError, parse, parse_atom
from .sat import (
    DEFAULT_MAX_ATOMS,
    ResourceLimitError,
    entails,
    is_consistent,
    is_tautology,
)
from .syntax import (
    And,
    Atom,
    Formula,
    Iff,
    Implies,
    Not,
    Or,
    Valuation,
    atoms_of,
    evaluate,
    render_canonical,
)

__all__ = [
    "And",
    "Atom",
    "DEFAULT_MAX_ATOMS",
    "Formula",
    "Iff",
    "Implies",
    "Not",
    "Or",
    "ParseError",
    "ResourceLimitError",
    "Valuation",
    "atoms_of",
    "entails",
    "evaluate",
    "is_consistent",
    "is_tautology",
    "parse",
    "parse_atom",
    "render_canonical",
]
