"""Satisfiability and entailment over sets of ground formulas.

The main path clausifies the conjunction of the input formulas by direct
distribution (no auxiliary variables, so models stay over the original
atoms) and runs DPLL with unit propagation and pure-literal elimination.
If distribution blows past a clause budget the check falls back to truth
table enumeration, which is only viable for small atom counts.
"""

from __future__ import annotations

from typing import Iterable

from .syntax import And, Atom, Formula, Iff, Implies, Not, Or, atoms_of, evaluate

DEFAULT_MAX_ATOMS = 64

_CLAUSE_BUDGET = 4096
_TRUTH_TABLE_MAX_ATOMS = 20


class ResourceLimitError(RuntimeError):
    """Raised when a query exceeds the configured atom budget."""


class _ClauseBudgetExceeded(Exception):
    pass


def is_consistent(formulas: Iterable[Formula], max_atoms: int = DEFAULT_MAX_ATOMS) -> bool:
    """Decide whether the formulas are jointly satisfiable."""
    formulas = list(formulas)
    atoms: set[Atom] = set()
    for formula in formulas:
        atoms |= atoms_of(formula)
    if len(atoms) > max_atoms:
        raise ResourceLimitError(
            f"query spans {len(atoms)} atoms, limit is {max_atoms}"
        )
    if _has_complementary_pair(formulas):
        return False
    index = {atom: i + 1 for i, atom in enumerate(sorted(atoms, key=_atom_key))}
    try:
        clauses = _clausify(formulas, index)
    except _ClauseBudgetExceeded:
        if len(atoms) > _TRUTH_TABLE_MAX_ATOMS:
            raise ResourceLimitError(
                f"clause budget exceeded and {len(atoms)} atoms is too many "
                "for truth-table fallback"
            ) from None
        return _truth_table_satisfiable(formulas, sorted(atoms, key=_atom_key))
    return _dpll(clauses)


def entails(base: Iterable[Formula], formula: Formula,
            max_atoms: int = DEFAULT_MAX_ATOMS) -> bool:
    """Decide whether the base logically entails the formula."""
    return not is_consistent([*base, Not(formula)], max_atoms=max_atoms)


def is_tautology(formula: Formula, max_atoms: int = DEFAULT_MAX_ATOMS) -> bool:
    return entails([], formula, max_atoms=max_atoms)


def _atom_key(atom: Atom) -> tuple[str, tuple[str, ...]]:
    return (atom.predicate, atom.args)


def _has_complementary_pair(formulas: list[Formula]) -> bool:
    """Cheap pre-filter: look for some f together with (! f)."""
    seen = set(formulas)
    for formula in formulas:
        if isinstance(formula, Not) and formula.operand in seen:
            return True
    return False


def _clausify(formulas: list[Formula], index: dict[Atom, int]) -> list[frozenset[int]]:
    clauses: list[frozenset[int]] = []
    for formula in formulas:
        for clause in _cnf(_nnf(formula, positive=True), index):
            if not _is_tautological_clause(clause):
                clauses.append(clause)
            if len(clauses) > _CLAUSE_BUDGET:
                raise _ClauseBudgetExceeded
    return clauses


def _nnf(formula: Formula, positive: bool) -> Formula:
    """Push negations to the atoms, eliminating -> and <-> on the way."""
    if isinstance(formula, Atom):
        return formula if positive else Not(formula)
    if isinstance(formula, Not):
        return _nnf(formula.operand, not positive)
    if isinstance(formula, And):
        left = _nnf(formula.left, positive)
        right = _nnf(formula.right, positive)
        return And(left, right) if positive else Or(left, right)
    if isinstance(formula, Or):
        left = _nnf(formula.left, positive)
        right = _nnf(formula.right, positive)
        return Or(left, right) if positive else And(left, right)
    if isinstance(formula, Implies):
        return _nnf(Or(Not(formula.left), formula.right), positive)
    if isinstance(formula, Iff):
        expanded = And(
            Or(Not(formula.left), formula.right),
            Or(Not(formula.right), formula.left),
        )
        return _nnf(expanded, positive)
    raise TypeError(f"not a formula: {formula!r}")


def _cnf(formula: Formula, index: dict[Atom, int]) -> list[frozenset[int]]:
    """Distribute an NNF formula into clauses over integer literals."""
    if isinstance(formula, Atom):
        return [frozenset({index[formula]})]
    if isinstance(formula, Not):
        operand = formula.operand
        if not isinstance(operand, Atom):
            raise TypeError("negation not at atom level after NNF")
        return [frozenset({-index[operand]})]
    if isinstance(formula, And):
        return _cnf(formula.left, index) + _cnf(formula.right, index)
    if isinstance(formula, Or):
        left = _cnf(formula.left, index)
        right = _cnf(formula.right, index)
        if len(left) * len(right) > _CLAUSE_BUDGET:
            raise _ClauseBudgetExceeded
        return [a | b for a in left for b in right]
    raise TypeError(f"unexpected connective after NNF: {formula!r}")


def _is_tautological_clause(clause: frozenset[int]) -> bool:
    return any(-lit in clause for lit in clause)


def _dpll(clauses: list[frozenset[int]]) -> bool:
    while True:
        if not clauses:
            return True
        if any(not clause for clause in clauses):
            return False
        unit = next((clause for clause in clauses if len(clause) == 1), None)
        if unit is not None:
            reduced = _assign(clauses, next(iter(unit)))
            if reduced is None:
                return False
            clauses = reduced
            continue
        literals = {lit for clause in clauses for lit in clause}
        pure = sorted((lit for lit in literals if -lit not in literals), key=abs)
        if pure:
            for lit in pure:
                reduced = _assign(clauses, lit)
                if reduced is None:
                    return False
                clauses = reduced
            continue
        branch = min(abs(lit) for clause in clauses for lit in clause)
        positive = _assign(clauses, branch)
        if positive is not None and _dpll(positive):
            return True
        negative = _assign(clauses, -branch)
        return negative is not None and _dpll(negative)


def _assign(clauses: list[frozenset[int]], lit: int) -> list[frozenset[int]] | None:
    """Apply a literal assignment; None signals an immediate conflict."""
    result: list[frozenset[int]] = []
    for clause in clauses:
        if lit in clause:
            continue
        if -lit in clause:
            clause = clause - {-lit}
            if not clause:
                return None
        result.append(clause)
    return result


def _truth_table_satisfiable(formulas: list[Formula], atoms: list[Atom]) -> bool:
    for bits in range(1 << len(atoms)):
        valuation = {atom: bool(bits >> i & 1) for i, atom in enumerate(atoms)}
        if all(evaluate(formula, valuation) for formula in formulas):
            return True
    return False
