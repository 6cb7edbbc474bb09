"""Command line front end over agent sessions.

Exit status doubles as a machine-readable verdict: 0 success, 2 bad
input, 3 consistency refusal, 4 ledger corruption, 5 planning failure,
6 recovery escalation, 1 anything else.  Errors go to stderr as one
tab-separated ``error`` line.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from .belief import ConsistencyError, export
from .config import ENV_PREFIX, EngineConfig, load_config
from .engine import (
    EscalationError,
    Session,
    SessionLockedError,
    proof_from_json,
    proof_to_json,
    resolve_action,
)
from .justify import NoJustificationError
from .ledger import Ledger, LedgerCorruptionError, replay
from .logic import ParseError, parse, render_canonical
from .plan import PlanningError, render_trace

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_REFUSED = 3
EXIT_CORRUPT = 4
EXIT_NO_PLAN = 5
EXIT_ESCALATED = 6


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="veritas",
        description="Auditable beliefs, proofs, and plans over a hash-chained ledger.",
    )
    parser.add_argument("--config", default=None, help="key=value config file")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        dest="overrides",
        metavar="KEY=VALUE",
        help="override one config entry (repeatable)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    observe = sub.add_parser("observe", help="admit one observation")
    observe.add_argument("formula")
    observe.add_argument("--p", type=float, required=True)
    observe.add_argument("--source", default="cli")

    contract = sub.add_parser("contract", help="retract a belief and its dependents")
    contract.add_argument("formula")

    query = sub.add_parser("query", help="entailment with confidence read-out")
    query.add_argument("formula")

    justify = sub.add_parser("justify", help="print the derivation chain")
    justify.add_argument("formula")

    prove = sub.add_parser("prove", help="emit an anchored public proof")
    prove.add_argument("formula")
    prove.add_argument("--out", default="proof.json")

    verify_proof = sub.add_parser("verify-proof", help="check a proof file")
    verify_proof.add_argument("path")

    plan = sub.add_parser("plan", help="abduce, simulate, and seal a plan")
    plan.add_argument("--goal", default=None)
    plan.add_argument("--domain", default=None)

    inject = sub.add_parser("inject-policy", help="gate an external plan")
    inject.add_argument("path")
    inject.add_argument("--domain", default=None)

    ledger = sub.add_parser("ledger", help="inspect the ledger")
    ledger.add_argument("action", choices=("verify", "replay"))
    ledger.add_argument("--to", type=int, default=None)

    rollback = sub.add_parser("rollback", help="append blocks undoing later state")
    rollback.add_argument("--to", type=int, required=True)

    sub.add_parser("audit", help="run one meta-cognitive sweep read-only")

    run = sub.add_parser("run", help="full loop over an observation stream")
    run.add_argument("--stream", default="-")
    run.add_argument("--goal", default=None)
    run.add_argument("--domain", default=None)

    return parser


def _build_config(args: argparse.Namespace) -> EngineConfig:
    env = dict(os.environ)
    known = {f.name for f in dataclasses.fields(EngineConfig)} - {"reliability"}
    reliability_sets: list[tuple[str, float]] = []
    for item in args.overrides:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        key = key.strip()
        if key.startswith("reliability."):
            reliability_sets.append((key[len("reliability."):], float(value)))
        elif key in known:
            env[ENV_PREFIX + key.upper()] = value
        else:
            raise ValueError(f"unknown config key: {key}")
    config = load_config(path=args.config, env=env)
    for source, score in reliability_sets:
        config.reliability[source] = score
    if getattr(args, "domain", None):
        config.domain_path = args.domain
    if getattr(args, "goal", None):
        config.goal = args.goal
    config.validate()
    return config


def _read_policy(path: str) -> tuple[list[str], float | None, float | None]:
    actions: list[str] = []
    expected: float | None = None
    actual: float | None = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        head, _, rest = stripped.partition(" ")
        if head == "action":
            actions.append(rest.strip())
        elif head == "expected-utility":
            expected = float(rest)
        elif head == "actual-utility":
            actual = float(rest)
        else:
            raise ValueError(f"{path}:{lineno}: unknown policy entry {head!r}")
    if not actions:
        raise ValueError(f"{path}: policy file declares no actions")
    return actions, expected, actual


def _dispatch(args: argparse.Namespace, session: Session) -> int:
    out = sys.stdout
    if args.command == "observe":
        verdict = session.observe(args.formula, args.p, args.source)
        out.write(f"{verdict}\t{render_canonical(parse(args.formula))}\n")
        return EXIT_OK
    if args.command == "contract":
        session.contract_formula(args.formula)
        out.write(f"contracted\t{render_canonical(parse(args.formula))}\n")
        return EXIT_OK
    if args.command == "query":
        out.write(session.query(args.formula).render() + "\n")
        return EXIT_OK
    if args.command == "justify":
        chain, digest = session.justify_formula(args.formula)
        for node in chain:
            out.write(f"{node.rule}\t{render_canonical(node.conclusion)}\n")
        out.write(f"digest\t{digest.hex()}\n")
        return EXIT_OK
    if args.command == "prove":
        proof = session.prove(args.formula)
        Path(args.out).write_text(proof_to_json(proof) + "\n")
        out.write(f"proof\t{args.out}\tdigest\t{proof.digest.hex()}\n")
        return EXIT_OK
    if args.command == "verify-proof":
        proof = proof_from_json(Path(args.path).read_text())
        result = session.verify_proof(proof)
        if result.ok:
            out.write("ok\n")
            return EXIT_OK
        step = "" if result.step is None else f"\tstep={result.step}"
        out.write(f"reject\t{result.reason}{step}\n")
        return EXIT_ERROR
    if args.command == "plan":
        plan, result, seal = session.plan_goal(args.goal)
        for action in plan:
            out.write(f"plan\t{action.render()}\n")
        out.write(render_trace(result.trace))
        out.write(f"sealed\t{seal}\n")
        return EXIT_OK
    if args.command == "inject-policy":
        texts, expected, actual = _read_policy(args.path)
        actions = [resolve_action(t, session.domain()) for t in texts]
        for line in session.inject_policy(actions, expected, actual):
            out.write(line + "\n")
        return EXIT_OK
    if args.command == "ledger":
        if args.action == "replay":
            if args.to is not None and args.to < 0:
                raise ValueError(f"--to must be non-negative, got {args.to}")
            upto = args.to - 1 if args.to is not None else None
            base = replay(
                session.ledger, session.config, session.graph, upto=upto
            )
            out.write(export(base))
            return EXIT_OK
        raise AssertionError("verify handled before session construction")
    if args.command == "rollback":
        appended = session.rollback(args.to)
        out.write(f"rolled-back\tto={args.to}\tappended={appended}\n")
        return EXIT_OK
    if args.command == "audit":
        for item in session.audit():
            out.write(
                f"{item.epoch}\t{item.formula}\t{item.score!r}\t{item.action}\n"
            )
        return EXIT_OK
    if args.command == "run":
        if args.stream == "-":
            return session.run_loop(sys.stdin, out, sys.stderr)
        with open(args.stream, "r", encoding="utf-8") as handle:
            return session.run_loop(handle, out, sys.stderr)
    raise AssertionError(f"unhandled command {args.command!r}")


def _verify_only(config: EngineConfig) -> int:
    ledger = Ledger(config.ledger_path or None)
    bad = ledger.verify_chain()
    if bad is None:
        sys.stdout.write(f"ok\t{len(ledger)}\n")
        return EXIT_OK
    sys.stdout.write(f"corrupt\t{bad}\n")
    return EXIT_CORRUPT


def _error(category: str, err: object) -> None:
    sys.stderr.write(f"error\t{category}\t{err}\n")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = _build_config(args)
        if args.command == "ledger" and args.action == "verify":
            return _verify_only(config)
        with Session(config) as session:
            return _dispatch(args, session)
    except ParseError as err:
        _error("parse", err)
        return EXIT_USAGE
    except (ValueError, OSError) as err:
        _error("usage", err)
        return EXIT_USAGE
    except ConsistencyError as err:
        _error("refused", err)
        return EXIT_REFUSED
    except LedgerCorruptionError as err:
        _error("ledger", err)
        return EXIT_CORRUPT
    except PlanningError as err:
        _error("plan", err)
        return EXIT_NO_PLAN
    except EscalationError as err:
        _error("escalated", err)
        return EXIT_ESCALATED
    except NoJustificationError as err:
        _error("justify", err)
        return EXIT_ERROR
    except SessionLockedError as err:
        _error("locked", err)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
