"""Agent sessions: the observe, sweep, plan, and audit cycle.

A Session owns the ledger, the justification node store, and the belief
base replayed from them.  Every belief mutation goes through a ledger
block and is re-applied via the same fold that replay uses, so the live
base and a fresh replay of the ledger can never drift apart.  New
justification nodes are persisted next to the ledger so later sessions
can replay blocks that reference them.
"""

from __future__ import annotations

import fcntl
import json
import os
import time
from dataclasses import dataclass

from .belief import (
    BeliefEntry,
    ConfidenceTier,
    ConsistencyError,
    FourState,
    Provenance,
    classify_confidence,
    project_four_state,
    weakest_link,
)
from .config import EngineConfig
from .guard import (
    Diagnostic,
    FailureEvent,
    FailureKind,
    MetaLogEntry,
    RecoveryContext,
    RecoveryReport,
    assertion_gate,
    classify_failure,
    mscu_sweep,
    run_recovery,
)
from .justify import (
    JustificationGraph,
    NoJustificationError,
    PublicProof,
    VerifyResult,
    build_public_proof,
    hash_chain,
    node_from_json,
    node_to_json,
    verify_public_proof,
)
from .ledger import Ledger, Op, apply_block, replay
from .logic import (
    Atom,
    Formula,
    entails,
    is_consistent,
    is_tautology,
    parse,
    render_canonical,
)
from .plan import (
    Domain,
    GroundAction,
    Literal,
    PlanningError,
    SimulationResult,
    WorldState,
    abduce_policy,
    load_domain,
    parse_literal_list,
    render_trace,
    seal_trace,
    simulate_trace,
    type_check,
)


class SessionLockedError(RuntimeError):
    """Another process holds the ledger lock."""


class EscalationError(RuntimeError):
    """A recovery protocol escalated without a usable alternative."""


@dataclass(frozen=True)
class QueryResult:
    entailed: bool
    probability: float
    tier: ConfidenceTier
    state: FourState

    def render(self) -> str:
        verdict = "entailed" if self.entailed else "not-entailed"
        return "\t".join(
            (
                verdict,
                f"p={self.probability!r}",
                f"tier={self.tier.value}",
                f"state={self.state.value}",
            )
        )


def proof_to_json(proof: PublicProof) -> str:
    return json.dumps(
        {
            "conclusion": render_canonical(proof.conclusion),
            "digest": proof.digest.hex(),
            "chain": [json.loads(node_to_json(n)) for n in proof.chain],
        },
        indent=2,
    )


def proof_from_json(text: str) -> PublicProof:
    payload = json.loads(text)
    chain = tuple(
        node_from_json(json.dumps(item)) for item in payload["chain"]
    )
    return PublicProof(
        conclusion=parse(payload["conclusion"]),
        chain=chain,
        digest=bytes.fromhex(payload["digest"]),
    )


def parse_observation_line(line: str) -> tuple[str, float, str]:
    """Split a ``formula TAB probability TAB source`` stream line."""
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 3:
        raise ValueError(f"expected formula, probability, source: {line!r}")
    return parts[0], float(parts[1]), parts[2]


def parse_goal_literals(text: str) -> tuple[Literal, ...]:
    if not text.strip():
        return ()
    return parse_literal_list(text)


def resolve_action(text: str, domain: Domain) -> GroundAction:
    """Turn ``Name(arg,...)`` into a ground action over domain schemas."""
    shape = parse(text)
    if not isinstance(shape, Atom):
        raise PlanningError(f"not an action: {text!r}")
    try:
        schema = domain.schema(shape.predicate)
    except KeyError:
        raise PlanningError(f"unknown action name {shape.predicate!r}") from None
    return GroundAction(schema, shape.args)


class Session:
    """One agent over one ledger, safe to reopen between commands."""

    def __init__(self, config: EngineConfig):
        config.validate()
        self.config = config
        self._lock_handle = None
        if config.ledger_path:
            self._acquire_lock(config.ledger_path + ".lock")
        self.graph = JustificationGraph()
        self._persisted: set[str] = set()
        self.nodes_path = (
            config.resolved_nodes_path() if config.ledger_path else ""
        )
        if self.nodes_path and os.path.exists(self.nodes_path):
            with open(self.nodes_path, "r", encoding="utf-8") as handle:
                for line in handle:
                    if not line.strip():
                        continue
                    node = node_from_json(line)
                    if node.node_id not in self.graph:
                        self.graph.add_node(node)
                    self._persisted.add(node.node_id)
        self.ledger = Ledger(config.ledger_path or None)
        self.base = replay(self.ledger, config, self.graph)
        self._obs_seq = sum(
            1 for b in self.ledger.blocks if b.op in (Op.INSERT, Op.REVISE)
        )
        self._domain: Domain | None = None

    def _acquire_lock(self, path: str) -> None:
        handle = open(path, "a+")
        try:
            fcntl.flock(handle.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            handle.close()
            raise SessionLockedError(
                f"another session holds {path}"
            ) from None
        self._lock_handle = handle

    def close(self) -> None:
        if self._lock_handle is not None:
            fcntl.flock(self._lock_handle.fileno(), fcntl.LOCK_UN)
            self._lock_handle.close()
            self._lock_handle = None

    def __enter__(self) -> Session:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- clocks ---------------------------------------------------------

    def _block_ts(self) -> int:
        if self.config.fixed_clock:
            return len(self.ledger)
        return int(time.time() * 1000)

    def _prov_ts(self) -> int:
        if self.config.fixed_clock:
            return self._obs_seq
        return int(time.time() * 1000)

    # -- persistence ----------------------------------------------------

    def _sync_nodes(self) -> None:
        if not self.nodes_path:
            self._persisted.update(n.node_id for n in self.graph.all_nodes())
            return
        fresh = [
            node
            for node in self.graph.all_nodes()
            if node.node_id not in self._persisted
        ]
        if not fresh:
            return
        with open(self.nodes_path, "a", encoding="utf-8") as handle:
            for node in fresh:
                handle.write(node_to_json(node) + "\n")
                self._persisted.add(node.node_id)

    def _append_and_apply(self, op: Op | str, formula: str, digest: bytes) -> None:
        self._sync_nodes()
        block = self.ledger.append(
            op,
            formula=formula,
            justification_digest=digest,
            timestamp=self._block_ts(),
        )
        self.base = apply_block(self.base, block, self.config, self.graph)

    # -- observations and contraction ------------------------------------

    def observe(self, text: str, probability: float, source: str) -> str:
        """Admit one observation; returns which route it took."""
        formula = parse(text)
        if not is_consistent([formula]):
            raise ConsistencyError(
                f"observation is self-contradictory: {render_canonical(formula)}"
            )
        key = render_canonical(formula)
        node_id = self.graph.record_inference(
            formula,
            (),
            "observation",
            Provenance(source, self._prov_ts(), probability),
        )
        others = [e.formula for e in self.base.entries if e.key != key]
        op = Op.INSERT if is_consistent(others + [formula]) else Op.REVISE
        self._append_and_apply(op, key, bytes.fromhex(node_id))
        self._obs_seq += 1
        if op == Op.REVISE:
            return "revised"
        entry = self.base.find(formula)
        return "admitted" if entry is not None and entry.assertable else (
            "stored-non-assertable"
        )

    def contract_formula(self, text: str) -> None:
        formula = parse(text)
        if is_tautology(formula):
            raise ConsistencyError(
                f"refusing to contract a tautology: {render_canonical(formula)}"
            )
        self._append_and_apply(Op.CONTRACT, render_canonical(formula), b"\x00" * 32)

    # -- queries and proofs -----------------------------------------------

    def _minimal_support(self, formula: Formula) -> list[BeliefEntry]:
        support = [e for e in self.base.entries if e.assertable]
        for entry in sorted(support, key=lambda e: e.key):
            rest = [e.formula for e in support if e is not entry]
            if entails(rest, formula):
                support = [e for e in support if e is not entry]
        return support

    def query(self, text: str) -> QueryResult:
        formula = parse(text)
        entailed = entails(
            [e.formula for e in self.base.entries if e.assertable], formula
        )
        entry = self.base.find(formula)
        if entry is not None:
            probability = entry.probability
        elif entailed:
            support = self._minimal_support(formula)
            probability = (
                weakest_link([e.probability for e in support])
                if support
                else 1.0
            )
        else:
            probability = 0.0
        return QueryResult(
            entailed=entailed,
            probability=probability,
            tier=classify_confidence(probability),
            state=project_four_state(probability),
        )

    def justify_formula(self, text: str):
        formula = parse(text)
        entry = self.base.find(formula)
        if (
            entry is None
            or entry.justification is None
            or entry.justification not in self.graph
        ):
            raise NoJustificationError(
                f"no recorded justification for {render_canonical(formula)}"
            )
        chain = self.graph.trace(entry.justification)
        return chain, hash_chain(chain)

    def prove(self, text: str) -> PublicProof:
        """Build an anchored public proof for a held or entailed formula."""
        formula = parse(text)
        entry = self.base.find(formula)
        if (
            entry is not None
            and entry.justification is not None
            and entry.justification in self.graph
        ):
            node_id = entry.justification
        else:
            result = self.query(text)
            if not result.entailed:
                raise NoJustificationError(
                    f"not entailed: {render_canonical(formula)}"
                )
            support = self._minimal_support(formula)
            premises = []
            for supporting in support:
                if (
                    supporting.justification is None
                    or supporting.justification not in self.graph
                ):
                    raise NoJustificationError(
                        f"support {supporting.key} has no justification node"
                    )
                premises.append(supporting.justification)
            node_id = self.graph.record_inference(
                formula,
                tuple(premises),
                "entailment",
                Provenance(
                    "engine",
                    self._prov_ts(),
                    weakest_link([e.probability for e in support])
                    if support
                    else 1.0,
                ),
            )
        proof = build_public_proof(self.graph, node_id)
        self._sync_nodes()
        if not self.ledger.contains_digest(proof.digest):
            self.ledger.append(
                Op.META,
                formula=render_canonical(formula),
                justification_digest=proof.digest,
                timestamp=self._block_ts(),
            )
        return proof

    def verify_proof(self, proof: PublicProof) -> VerifyResult:
        return verify_public_proof(proof, self.ledger.contains_digest)

    # -- guard integration ------------------------------------------------

    def recover(self, event: FailureEvent, replan=None) -> RecoveryReport:
        context = RecoveryContext(
            base=self.base,
            graph=self.graph,
            config=self.config,
            ledger=self.ledger,
            clock=self._block_ts,
            replan=replan,
        )
        report = run_recovery(event, context)
        self.base = context.base
        self._sync_nodes()
        return report

    def sweep_and_react(self) -> tuple[list[MetaLogEntry], list[RecoveryReport]]:
        """One MSCU pass plus the recovery reactions it calls for."""
        log = mscu_sweep(self.base, self.graph, self.config.theta_meta)
        reports: list[RecoveryReport] = []
        contradiction_handled = False
        for item in log:
            if item.action == "none":
                continue
            self.ledger.append(
                Op.META,
                formula=f"sweep:{item.action}:{item.formula}",
                timestamp=self._block_ts(),
            )
            if item.action == "contract" and not contradiction_handled:
                contradiction_handled = True
                reports.append(
                    self.recover(
                        FailureEvent(
                            FailureKind.BELIEF_INCONSISTENCY, item.formula
                        )
                    )
                )
            elif item.action == "reevaluate":
                reports.append(
                    self.recover(
                        FailureEvent(
                            FailureKind.JUSTIFICATION_BREAKDOWN, item.formula
                        )
                    )
                )
        return log, reports

    # -- planning ---------------------------------------------------------

    def domain(self) -> Domain:
        if self._domain is None:
            if not self.config.domain_path:
                raise PlanningError("no domain file configured")
            self._domain = load_domain(self.config.domain_path)
        return self._domain

    def world_state(self) -> WorldState:
        """Domain initial facts plus the assertable ground beliefs."""
        atoms = set(self.domain().init.atoms)
        for entry in self.base.entries:
            if entry.assertable and isinstance(entry.formula, Atom):
                atoms.add(entry.formula)
        return WorldState(frozenset(atoms))

    def _supporting_entries(self, state: WorldState) -> list[BeliefEntry]:
        return [
            entry
            for entry in self.base.entries
            if entry.assertable and entry.formula in state.atoms
        ]

    def is_safe(self, plan: list[GroundAction]) -> tuple[bool, str]:
        """The IsSafe gate: consistent base, every support within risk."""
        del plan
        if not is_consistent([e.formula for e in self.base.entries]):
            return False, "belief base inconsistent"
        for entry in self._supporting_entries(self.world_state()):
            depth = (
                self.graph.depth(entry.justification)
                if entry.justification is not None
                and entry.justification in self.graph
                else 0
            )
            if not assertion_gate(entry.probability, depth, self.config):
                return False, f"support below gate: {entry.key}"
        return True, ""

    def plan_goal(
        self, goal_text: str | None = None
    ) -> tuple[list[GroundAction], SimulationResult, int]:
        """Abduce, simulate, and seal a plan for the goal literals."""
        domain = self.domain()
        goal = (
            parse_goal_literals(goal_text) if goal_text else domain.goal
        )
        if not goal:
            raise PlanningError("no goal given")
        state = self.world_state()
        plan = abduce_policy(
            goal, state, domain.schemas, domain.ontology
        )
        result = simulate_trace(plan, state, goal=goal)
        seal = seal_trace(result.trace, self.ledger, timestamp=self._block_ts())
        return plan, result, seal

    def inject_policy(
        self,
        actions: list[GroundAction],
        expected_utility: float | None = None,
        actual_utility: float | None = None,
    ) -> list[str]:
        """Gate an externally supplied plan, then simulate and seal it.

        A utility gap beyond delta, or a mid-plan precondition failure,
        hands a TypeV event to recovery, which replans from the current
        state; escalation without an alternative raises.
        """
        domain = self.domain()
        lines: list[str] = []
        for action in actions:
            violation = type_check(action, domain.ontology)
            if violation is not None:
                raise PlanningError(violation.render())
        goal = domain.goal
        state = self.world_state()

        def replan() -> str | None:
            try:
                alternate = abduce_policy(
                    goal, state, domain.schemas, domain.ontology
                )
            except PlanningError:
                return None
            return ";".join(a.render() for a in alternate)

        def run(plan: list[GroundAction], label: str) -> SimulationResult:
            result = simulate_trace(plan, state, goal=goal)
            seal = seal_trace(
                result.trace, self.ledger, timestamp=self._block_ts()
            )
            lines.append(f"{label}\tsealed={seal}")
            lines.extend(render_trace(result.trace).splitlines())
            return result

        if expected_utility is not None and actual_utility is not None:
            event = classify_failure(
                Diagnostic(
                    subject=";".join(a.render() for a in actions),
                    expected_utility=expected_utility,
                    actual_utility=actual_utility,
                    delta=self.config.delta,
                )
            )
            if event.kind == FailureKind.POLICY_MISPROJECTION:
                report = self.recover(event, replan=replan)
                lines.extend(report.lines)
                if report.escalated:
                    raise EscalationError("no alternate policy available")
                alternate = [
                    resolve_action(text, domain)
                    for text in replan().split(";")
                ]
                run(alternate, "reselected")
                return lines
        result = run(actions, "injected")
        if result.failure is not None:
            report = self.recover(result.failure, replan=replan)
            lines.extend(report.lines)
            if report.escalated:
                raise EscalationError(result.failure.detail)
            alternate = [
                resolve_action(text, domain) for text in replan().split(";")
            ]
            recovered = run(alternate, "recovered")
            if recovered.failure is not None:
                raise EscalationError(recovered.failure.detail)
        return lines

    # -- rollback and audit -----------------------------------------------

    def rollback(self, upto: int) -> int:
        """Return to the base left by the first upto blocks, by appending.

        Replays the prefix, then appends retractions for entries that
        should vanish and inserts (plus marking amendments) for entries
        that should return.  The ledger never shrinks, and a full replay
        still lands on the post-rollback base.
        """
        if upto < 0 or upto > len(self.ledger):
            raise ValueError(f"block count out of range: {upto}")
        target = replay(self.ledger, self.config, self.graph, upto=upto - 1)
        appended = 0
        current = {e.key: e for e in self.base.entries}
        wanted = {e.key: e for e in target.entries}
        for key in sorted(current):
            if key not in wanted or wanted[key] != current[key]:
                self._append_and_apply(Op.RECOVERY, key, b"\x00" * 32)
                appended += 1
        for key in sorted(wanted):
            formula = parse(key)
            if self.base.find(formula) is not None:
                continue
            entry = wanted[key]
            if entry.justification is None:
                raise ValueError(
                    f"cannot restore {key}: no justification node"
                )
            insert_id = entry.justification
            if self.graph.node(insert_id).provenance != entry.provenance:
                for candidate in self.graph.nodes_for(formula):
                    if self.graph.node(candidate).provenance == entry.provenance:
                        insert_id = candidate
                        break
                else:
                    raise ValueError(
                        f"cannot restore {key}: no matching node"
                    )
            self._append_and_apply(Op.INSERT, key, bytes.fromhex(insert_id))
            appended += 1
            if self.base.find(formula) != entry:
                self._append_and_apply(
                    Op.RECOVERY, key, bytes.fromhex(entry.justification)
                )
                appended += 1
        if {e.key: e for e in self.base.entries} != wanted:
            raise RuntimeError("rollback reconstruction incomplete")
        self.ledger.append(
            Op.META,
            formula=f"rollback:{upto}",
            timestamp=self._block_ts(),
        )
        return appended + 1

    def audit(self) -> list[MetaLogEntry]:
        log = mscu_sweep(self.base, self.graph, self.config.theta_meta)
        for item in log:
            if item.action != "none":
                self.ledger.append(
                    Op.META,
                    formula=f"sweep:{item.action}:{item.formula}",
                    timestamp=self._block_ts(),
                )
        return log

    # -- the main loop ------------------------------------------------------

    def run_loop(self, lines, out, diag) -> int:
        """Sense, update, sweep, plan, gate, execute, seal; per F-style loop.

        Observation lines are ``formula TAB probability TAB source``.
        Returns the process exit status: 0 on a clean run, 6 when a
        recovery escalates with no way forward.
        """
        self.ledger.append(
            Op.META, formula="session-start", timestamp=self._block_ts()
        )
        for raw in lines:
            stripped = raw.strip()
            if not stripped or stripped.startswith("#"):
                continue
            text, probability, source = parse_observation_line(raw)
            verdict = self.observe(text, probability, source)
            out.write(f"{verdict}\t{render_canonical(parse(text))}\n")
            _, reports = self.sweep_and_react()
            if any(r.escalated for r in reports):
                diag.write("EpistemicWarning\tsweep\tescalated\n")
                return 6
            if not self.config.goal:
                continue
            try:
                plan = abduce_policy(
                    parse_goal_literals(self.config.goal),
                    self.world_state(),
                    self.domain().schemas,
                    self.domain().ontology,
                )
            except PlanningError as err:
                diag.write(f"plan-failure\t{self.config.goal}\t{err}\n")
                continue
            safe, reason = self.is_safe(plan)
            if not safe:
                diag.write(
                    f"EpistemicWarning\t{self.config.goal}\t{reason}\n"
                )
                continue
            result = simulate_trace(
                plan,
                self.world_state(),
                goal=parse_goal_literals(self.config.goal),
            )
            seal = seal_trace(
                result.trace, self.ledger, timestamp=self._block_ts()
            )
            for action in plan:
                out.write(f"executed\t{action.render()}\n")
            out.write(f"sealed\t{seal}\n")
        return 0
