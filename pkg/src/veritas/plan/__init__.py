"""Ground STRIPS planning with ontological typing and sealed traces."""

from .domain import (
    ActionSchema,
    Domain,
    DomainSyntaxError,
    GroundAction,
    Literal,
    Ontology,
    OntologyError,
    TypeViolation,
    WorldState,
    apply_effects,
    load_domain,
    missing_preconditions,
    parse_domain,
    parse_literal,
    parse_literal_list,
    preconditions_met,
    render_atom_set,
    type_check,
)
from .search import DEFAULT_DEPTH_BUDGET, PlanningError, abduce_policy
from .trace import (
    PlanTrace,
    SimulationResult,
    TraceIntegrityError,
    TraceStep,
    TraceSyntaxError,
    goal_formula,
    parse_trace,
    render_trace,
    repair_ontology,
    replay_trace,
    seal_trace,
    simulate_trace,
    trace_digest,
)

__all__ = [
    "ActionSchema",
    "DEFAULT_DEPTH_BUDGET",
    "Domain",
    "DomainSyntaxError",
    "GroundAction",
    "Literal",
    "Ontology",
    "OntologyError",
    "PlanTrace",
    "PlanningError",
    "SimulationResult",
    "TraceIntegrityError",
    "TraceStep",
    "TraceSyntaxError",
    "TypeViolation",
    "WorldState",
    "abduce_policy",
    "apply_effects",
    "goal_formula",
    "load_domain",
    "missing_preconditions",
    "parse_domain",
    "parse_literal",
    "parse_literal_list",
    "parse_trace",
    "preconditions_met",
    "render_atom_set",
    "render_trace",
    "repair_ontology",
    "replay_trace",
    "seal_trace",
    "simulate_trace",
    "trace_digest",
    "type_check",
]
