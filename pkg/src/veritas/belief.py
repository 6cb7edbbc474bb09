"""Belief base with provenance, confidence tiers, and AGM-style change.

A BeliefBase is an immutable snapshot: every operation returns a new base
at the next epoch and records the set of active formulas for that epoch,
so any two epochs can be diffed later.  Contraction is partial meet over
brute-force remainder sets, revision follows the Levi identity, and
nothing is ever silently dropped: every removal lands in the retraction
log with a reason.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable

from .logic import Formula, Not, entails, is_consistent, render_canonical
from .logic.sat import ResourceLimitError

DEFAULT_THETA = 0.95
REMAINDER_CAP = 16

DEMOTED_PROBABILITY = 0.005


class DomainError(ValueError):
    """Raised when a probability argument falls outside its domain."""


class ConsistencyError(RuntimeError):
    """Raised when an operation would break or requires consistency."""


class TautologyContractionWarning(UserWarning):
    """Contracting a tautology cannot succeed; the base is returned as is."""


class ConfidenceTier(enum.IntEnum):
    REJECTED = 0
    DISFAVOURED = 1
    EQUIVOCAL = 2
    SUPPORTED = 3
    ENDORSED = 4
    COMMITTED = 5


class FourState(enum.Enum):
    REJECTED = "Rejected"
    UNCERTAIN = "Uncertain"
    PROVISIONAL = "Provisional"
    COMMITTED = "Committed"


class StatusTag(enum.Enum):
    DERIVED = "derived"
    APPROXIMATE = "approximate"
    OPERATIONAL = "operationally-justified"
    RETRACTED = "retracted"


def classify_confidence(probability: float) -> ConfidenceTier:
    """Map a probability to its six-level confidence tier.

    Band edges: 0.01, 0.3, 0.7, 0.9 and 0.99, each closed on the left.
    """
    _check_probability(probability)
    if probability < 0.01:
        return ConfidenceTier.REJECTED
    if probability < 0.3:
        return ConfidenceTier.DISFAVOURED
    if probability < 0.7:
        return ConfidenceTier.EQUIVOCAL
    if probability < 0.9:
        return ConfidenceTier.SUPPORTED
    if probability < 0.99:
        return ConfidenceTier.ENDORSED
    return ConfidenceTier.COMMITTED


def project_four_state(probability: float) -> FourState:
    """Project a probability onto the coarse four-state scale.

    Thresholds 0.50 / 0.95 / 0.99 separate Rejected, Uncertain,
    Provisional and Committed.
    """
    _check_probability(probability)
    if probability < 0.50:
        return FourState.REJECTED
    if probability < 0.95:
        return FourState.UNCERTAIN
    if probability < 0.99:
        return FourState.PROVISIONAL
    return FourState.COMMITTED


def bayes_update(prior: float, likelihood: float, marginal: float) -> float:
    """Posterior = prior * likelihood / marginal, with domain checks."""
    _check_probability(prior)
    _check_probability(likelihood)
    if marginal <= 0.0 or marginal > 1.0:
        raise DomainError(f"marginal must be in (0, 1], got {marginal}")
    posterior = prior * likelihood / marginal
    if posterior > 1.0 + 1e-9:
        raise DomainError(
            f"inconsistent inputs: posterior {posterior} exceeds 1"
        )
    return min(posterior, 1.0)


def weakest_link(probabilities: Iterable[float]) -> float:
    """Probability carried by a deduction: the minimum over its premises."""
    values = list(probabilities)
    if not values:
        raise DomainError("a deduction needs at least one premise")
    for value in values:
        _check_probability(value)
    return min(values)


def _check_probability(value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"probability out of range: {value}")


@dataclass(frozen=True)
class Provenance:
    """Where a belief came from: source label, timestamp, confidence."""

    source: str
    timestamp: int
    confidence: float

    def __post_init__(self) -> None:
        _check_probability(self.confidence)
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp: {self.timestamp}")


@dataclass(frozen=True)
class BeliefEntry:
    """One held formula with its probability and bookkeeping.

    The tier is derived from the probability and never set directly;
    assertable is False for entries stored below the assertion gate.
    """

    formula: Formula
    probability: float
    provenance: Provenance
    status: StatusTag = StatusTag.DERIVED
    justification: str | None = None
    assertable: bool = True
    tier: ConfidenceTier = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "tier", classify_confidence(self.probability))

    @property
    def key(self) -> str:
        return render_canonical(self.formula)


@dataclass(frozen=True)
class RetractionRecord:
    epoch: int
    formula: str
    reason: str


@dataclass(frozen=True)
class BeliefBase:
    """Immutable belief snapshot plus the trail that led to it."""

    epoch: int = 0
    entries: tuple[BeliefEntry, ...] = ()
    retraction_log: tuple[RetractionRecord, ...] = ()
    history: tuple[frozenset[str], ...] = (frozenset(),)

    @classmethod
    def from_entries(cls, entries: Iterable[BeliefEntry]) -> BeliefBase:
        ordered = _sorted_entries(entries)
        return cls(
            epoch=0,
            entries=ordered,
            history=(frozenset(e.key for e in ordered),),
        )

    def formulas(self) -> list[Formula]:
        return [entry.formula for entry in self.entries]

    def assertable_formulas(self) -> list[Formula]:
        return [entry.formula for entry in self.entries if entry.assertable]

    def find(self, formula: Formula) -> BeliefEntry | None:
        key = render_canonical(formula)
        for entry in self.entries:
            if entry.key == key:
                return entry
        return None

    def _advance(
        self,
        entries: Iterable[BeliefEntry],
        retractions: Iterable[RetractionRecord] = (),
    ) -> BeliefBase:
        ordered = _sorted_entries(entries)
        return BeliefBase(
            epoch=self.epoch + 1,
            entries=ordered,
            retraction_log=self.retraction_log + tuple(retractions),
            history=self.history + (frozenset(e.key for e in ordered),),
        )


def _sorted_entries(entries: Iterable[BeliefEntry]) -> tuple[BeliefEntry, ...]:
    return tuple(sorted(entries, key=lambda e: e.key))


def expand(base: BeliefBase, entry: BeliefEntry) -> BeliefBase:
    """Add an entry without giving anything up.

    Re-observing a formula already present replaces its entry.  Raises
    ConsistencyError when the result would be unsatisfiable.
    """
    others = [e for e in base.entries if e.key != entry.key]
    if not is_consistent([e.formula for e in others] + [entry.formula]):
        raise ConsistencyError(
            f"expansion by {entry.key} would make the base inconsistent"
        )
    return base._advance(others + [entry])


def remainders(
    formulas: Iterable[Formula],
    target: Formula,
    cap: int = REMAINDER_CAP,
) -> frozenset[frozenset[Formula]]:
    """All maximal subsets that fail to entail the target.

    Enumerates subsets by decreasing size, skipping anything contained
    in a remainder already found, so only maximal sets survive.
    """
    pool = sorted(set(formulas), key=render_canonical)
    if len(pool) > cap:
        raise ResourceLimitError(
            f"remainder enumeration over {len(pool)} formulas, cap is {cap}"
        )
    found: list[frozenset[Formula]] = []
    masks = sorted(range(1 << len(pool)), key=lambda m: -bin(m).count("1"))
    for mask in masks:
        subset = frozenset(f for i, f in enumerate(pool) if mask >> i & 1)
        if any(subset <= bigger for bigger in found):
            continue
        if not entails(subset, target):
            found.append(subset)
    return frozenset(found)


def contract(base: BeliefBase, target: Formula) -> BeliefBase:
    """Partial meet contraction: give up the target formula.

    The selection function keeps the remainders with the largest total
    provenance confidence and intersects them on ties.  Contracting a
    tautology is impossible and returns the base unchanged after a
    warning; a target the base never entailed is a no-op.
    """
    if entails([], target):
        warnings.warn(
            f"cannot contract tautology {render_canonical(target)}",
            TautologyContractionWarning,
        )
        return base
    active = base.formulas()
    if not entails(active, target):
        return base
    candidates = remainders(active, target)
    kept = _select_remainder(base, candidates)
    kept_keys = {render_canonical(f) for f in kept}
    reason = f"contract({render_canonical(target)})"
    survivors = [e for e in base.entries if e.key in kept_keys]
    dropped = [
        RetractionRecord(base.epoch + 1, e.key, reason)
        for e in base.entries
        if e.key not in kept_keys
    ]
    return base._advance(survivors, dropped)


def _select_remainder(
    base: BeliefBase,
    candidates: frozenset[frozenset[Formula]],
) -> frozenset[Formula]:
    if not candidates:
        return frozenset()
    weight_of = {e.key: e.provenance.confidence for e in base.entries}

    def weight(remainder: frozenset[Formula]) -> float:
        return sum(weight_of.get(render_canonical(f), 0.0) for f in remainder)

    ordered = sorted(
        candidates,
        key=lambda r: tuple(sorted(render_canonical(f) for f in r)),
    )
    best = max(weight(r) for r in ordered)
    tied = [r for r in ordered if weight(r) == best]
    if len(tied) == 1:
        return tied[0]
    meet = tied[0]
    for remainder in tied[1:]:
        meet &= remainder
    return meet


def revise(base: BeliefBase, entry: BeliefEntry) -> BeliefBase:
    """Levi identity: contract the negation, then expand by the entry."""
    if not is_consistent([entry.formula]):
        raise ConsistencyError(
            f"cannot revise by unsatisfiable {entry.key}"
        )
    contracted = contract(base, Not(entry.formula))
    fresh = contracted.retraction_log[len(base.retraction_log):]
    relabelled = base.retraction_log + tuple(
        RetractionRecord(rec.epoch, rec.formula, f"revision({entry.key})")
        for rec in fresh
    )
    contracted = replace(contracted, retraction_log=relabelled)
    return expand(contracted, entry)


def update_belief_state(
    base: BeliefBase,
    entry: BeliefEntry,
    theta: float = DEFAULT_THETA,
) -> tuple[BeliefBase, str]:
    """Route an incoming entry through expansion or revision.

    Entries below the assertion gate theta are stored at their tier but
    marked non-assertable.  Returns the new base and which route ran.
    """
    gated = replace(
        entry, assertable=entry.assertable and entry.probability >= theta
    )
    active = [e.formula for e in base.entries if e.key != gated.key]
    if is_consistent(active + [gated.formula]):
        return expand(base, gated), "expanded"
    return revise(base, gated), "revised"


def retract_entry(base: BeliefBase, formula: Formula, reason: str) -> BeliefBase:
    """Remove exactly one formula's entry, logging the reason.

    Unlike contract this takes no other entries with it.  Retracting a
    formula that is not held is a no-op, which keeps replays idempotent.
    """
    key = render_canonical(formula)
    if base.find(formula) is None:
        return base
    survivors = [e for e in base.entries if e.key != key]
    record = RetractionRecord(base.epoch + 1, key, reason)
    return base._advance(survivors, [record])


def amend_entry(
    base: BeliefBase,
    formula: Formula,
    *,
    probability: float | None = None,
    provenance: Provenance | None = None,
    status: StatusTag | None = None,
    justification: str | None = None,
    assertable: bool | None = None,
) -> BeliefBase:
    """Rewrite fields of one held entry in place, bumping the epoch."""
    current = base.find(formula)
    if current is None:
        return base
    updated = BeliefEntry(
        formula=current.formula,
        probability=probability if probability is not None else current.probability,
        provenance=provenance if provenance is not None else current.provenance,
        status=status if status is not None else current.status,
        justification=justification if justification is not None else current.justification,
        assertable=assertable if assertable is not None else current.assertable,
    )
    others = [e for e in base.entries if e.key != current.key]
    return base._advance(others + [updated])


def status_for(rule: str, probability: float) -> StatusTag:
    """Status tag implied by how an entry was produced.

    Observation-like leaves are operationally justified; entries from
    the approximation gate, and anything demoted into the bottom band,
    are approximate; everything else counts as derived.
    """
    if probability < 0.01:
        return StatusTag.APPROXIMATE
    if rule in ("observation", "axiom"):
        return StatusTag.OPERATIONAL
    if rule == "approximation":
        return StatusTag.APPROXIMATE
    return StatusTag.DERIVED


def epoch_diff(
    base: BeliefBase, earlier: int, later: int
) -> tuple[tuple[str, str], ...]:
    """Annotated symmetric difference between two recorded epochs."""
    for epoch in (earlier, later):
        if not 0 <= epoch < len(base.history):
            raise IndexError(f"epoch {epoch} not recorded (have 0..{base.epoch})")
    before = base.history[earlier]
    after = base.history[later]
    added = [("added", key) for key in sorted(after - before)]
    retracted = [("retracted", key) for key in sorted(before - after)]
    return tuple(added + retracted)


def export_lines(base: BeliefBase) -> list[str]:
    """Render the base as tab-separated lines, one entry per line."""
    lines = []
    for entry in base.entries:
        lines.append(
            "\t".join(
                (
                    str(base.epoch),
                    entry.key,
                    repr(entry.probability),
                    str(entry.tier.value),
                    entry.provenance.source,
                    str(entry.provenance.timestamp),
                    entry.status.value,
                )
            )
        )
    return lines


def export(base: BeliefBase) -> str:
    lines = export_lines(base)
    return "\n".join(lines) + "\n" if lines else ""
