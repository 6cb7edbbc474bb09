"""Shell behavior: output lines, exit codes, and on-disk artifacts."""

from __future__ import annotations

from pathlib import Path

import pytest

from veritas.belief import export
from veritas.cli import main
from veritas.config import load_config
from veritas.engine import Session
from veritas.ledger import Ledger, Op

DOMAINS = Path(__file__).parent / "domains"


@pytest.fixture()
def cli(tmp_path, monkeypatch, capsys):
    """Invoke the entry point inside a scratch working directory."""
    monkeypatch.chdir(tmp_path)

    def invoke(*argv: str):
        code = main(["--set", "fixed_clock=true", *argv])
        captured = capsys.readouterr()
        return code, captured.out, captured.err

    return invoke


class TestObserveAndQuery:
    def test_entailment_after_two_observations(self, cli):
        code, out, _ = cli("observe", "p", "--p", "0.99", "--source", "sensor")
        assert code == 0
        assert out == "admitted\tp\n"
        code, out, _ = cli("observe", "p -> q", "--p", "0.99", "--source", "kb")
        assert code == 0
        code, out, _ = cli("query", "q")
        assert code == 0
        assert out == "entailed\tp=0.99\ttier=5\tstate=Committed\n"

    def test_malformed_formula_is_a_usage_error(self, cli):
        code, _, err = cli("observe", "p -> ", "--p", "0.9")
        assert code == 2
        assert err.startswith("error\tparse\t")

    def test_self_contradiction_is_refused(self, cli):
        code, _, err = cli("observe", "p & !p", "--p", "0.99")
        assert code == 3
        assert err.startswith("error\trefused\t")

    def test_contracting_a_tautology_is_refused(self, cli):
        code, _, err = cli("contract", "p | !p")
        assert code == 3
        assert err.startswith("error\trefused\t")

    def test_missing_probability_flag_is_a_usage_error(self, cli):
        code, _, _ = cli("observe", "p")
        assert code == 2

    def test_unknown_config_key_is_a_usage_error(self, cli):
        code, _, err = cli("--set", "bogus=1", "query", "p")
        assert code == 2
        assert err.startswith("error\tusage\t")


class TestJustifyAndProve:
    def test_justify_prints_chain_and_digest(self, cli):
        cli("observe", "p", "--p", "0.99", "--source", "sensor")
        code, out, _ = cli("justify", "p")
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "observation\tp"
        assert lines[-1].startswith("digest\t")

    def test_justify_without_support_fails(self, cli):
        code, _, err = cli("justify", "r")
        assert code == 1
        assert err.startswith("error\tjustify\t")

    def test_prove_then_verify_round_trips(self, cli, tmp_path):
        cli("observe", "p", "--p", "0.99")
        cli("observe", "p -> q", "--p", "0.97")
        code, out, _ = cli("prove", "q", "--out", "q.proof")
        assert code == 0
        assert (tmp_path / "q.proof").exists()
        code, out, _ = cli("verify-proof", "q.proof")
        assert code == 0
        assert out == "ok\n"

    def test_tampered_proof_file_is_rejected(self, cli, tmp_path):
        cli("observe", "p", "--p", "0.99")
        cli("prove", "p", "--out", "p.proof")
        text = (tmp_path / "p.proof").read_text()
        (tmp_path / "p.proof").write_text(text.replace('"p"', '"q"'))
        code, out, _ = cli("verify-proof", "p.proof")
        assert code == 1
        assert out.startswith("reject\t")

    def test_foreign_proof_is_not_anchored(self, cli, tmp_path):
        cli("observe", "p", "--p", "0.99")
        cli("prove", "p", "--out", "p.proof")
        code, out, _ = cli(
            "--set", "ledger_path=other.vlog", "verify-proof", "p.proof"
        )
        assert code == 1
        assert out == "reject\tnot anchored\n"


class TestLedgerCommands:
    def test_verify_reports_block_count(self, cli):
        cli("observe", "p", "--p", "0.99")
        cli("observe", "q", "--p", "0.99")
        code, out, _ = cli("ledger", "verify")
        assert code == 0
        assert out == "ok\t2\n"

    def test_tampering_is_caught_at_the_first_bad_block(self, cli, tmp_path):
        cli("observe", "p", "--p", "0.99")
        cli("observe", "q", "--p", "0.99")
        cli("observe", "r", "--p", "0.99")
        path = tmp_path / "veritas.vlog"
        lines = path.read_bytes().splitlines(keepends=True)
        lines[1] = lines[1].replace(b"q", b"z", 1)
        path.write_bytes(b"".join(lines))
        code, out, _ = cli("ledger", "verify")
        assert code == 4
        assert out == "corrupt\t1\n"

    def test_corrupt_ledger_blocks_other_commands(self, cli, tmp_path):
        cli("observe", "p", "--p", "0.99")
        path = tmp_path / "veritas.vlog"
        raw = path.read_bytes()
        path.write_bytes(raw[:20] + b"!" + raw[21:])
        code, _, err = cli("query", "p")
        assert code == 4
        assert err.startswith("error\tledger\t")

    def test_replay_prefix_matches_history(self, cli):
        cli("observe", "p", "--p", "0.99")
        cli("observe", "q", "--p", "0.97")
        code, out, _ = cli("ledger", "replay", "--to", "1")
        assert code == 0
        assert "p" in out
        assert "q" not in out
        code, full, _ = cli("ledger", "replay")
        assert "q" in full

    def test_replay_output_matches_a_fresh_session(self, cli, tmp_path):
        cli("observe", "p", "--p", "0.99")
        cli("observe", "p -> q", "--p", "0.97")
        cli("contract", "p")
        code, out, _ = cli("ledger", "replay")
        assert code == 0
        config = load_config(
            fixed_clock=True, ledger_path=str(tmp_path / "veritas.vlog")
        )
        with Session(config) as session:
            assert out == export(session.base)


class TestRollbackCommand:
    def test_rollback_to_zero_is_append_only(self, cli, tmp_path):
        cli("observe", "p", "--p", "0.99")
        cli("observe", "q", "--p", "0.99")
        path = tmp_path / "veritas.vlog"
        size_before = path.stat().st_size
        code, out, _ = cli("rollback", "--to", "0")
        assert code == 0
        assert out.startswith("rolled-back\tto=0\t")
        assert path.stat().st_size > size_before
        code, out, _ = cli("ledger", "replay")
        assert out == ""

    def test_rollback_out_of_range_is_a_usage_error(self, cli):
        cli("observe", "p", "--p", "0.99")
        code, _, err = cli("rollback", "--to", "9")
        assert code == 2
        assert err.startswith("error\tusage\t")


class TestPlanCommand:
    def test_plan_prints_actions_trace_and_seal(self, cli):
        code, out, _ = cli(
            "plan",
            "--domain", str(DOMAINS / "navigation.domain"),
            "--goal", "At(Agent1,LocationB)",
        )
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "plan\tMove(Agent1,LocationA,LocationB)"
        assert lines[1].startswith("t0\tinit\t")
        assert lines[-1].startswith("sealed\t")

    def test_goal_defaults_to_the_domain_goal(self, cli):
        code, out, _ = cli(
            "plan", "--domain", str(DOMAINS / "drone.domain")
        )
        assert code == 0
        assert "plan\tRecharge(Drone1)" in out
        assert "plan\tFly(Drone1,Base,SiteAlpha)" in out

    def test_unreachable_goal_exits_five(self, cli):
        code, _, err = cli(
            "plan",
            "--domain", str(DOMAINS / "navigation.domain"),
            "--goal", "Connected(LocationB,LocationA)",
        )
        assert code == 5
        assert err.startswith("error\tplan\t")

    def test_plan_without_domain_exits_five(self, cli):
        code, _, err = cli("plan", "--goal", "At(Agent1,LocationB)")
        assert code == 5

    def test_seal_lands_in_the_ledger(self, cli, tmp_path):
        cli(
            "plan",
            "--domain", str(DOMAINS / "navigation.domain"),
            "--goal", "At(Agent1,LocationB)",
        )
        ledger = Ledger(tmp_path / "veritas.vlog")
        assert [b.op for b in ledger.blocks] == [Op.TRACE_SEAL]
        assert ledger.blocks[0].formula == "At(Agent1,LocationB)"


class TestInjectPolicyCommand:
    def test_failed_injection_recovers_with_a_new_plan(self, cli, tmp_path):
        policy = tmp_path / "policy.txt"
        policy.write_text("action Fly(Drone1,Base,SiteAlpha)\n")
        code, out, _ = cli(
            "inject-policy", str(policy),
            "--domain", str(DOMAINS / "drone.domain"),
        )
        assert code == 0
        assert "PreconditionFailure(Fly(Drone1,Base,SiteAlpha),FullBattery)" in out
        assert "reselected(Recharge(Drone1);Fly(Drone1,Base,SiteAlpha))" in out

    def test_utility_gap_reports_reselection(self, cli, tmp_path):
        policy = tmp_path / "policy.txt"
        policy.write_text(
            "action Fly(Drone1,Base,SiteAlpha)\n"
            "expected-utility 1.0\n"
            "actual-utility 0.2\n"
        )
        code, out, _ = cli(
            "inject-policy", str(policy),
            "--domain", str(DOMAINS / "drone.domain"),
        )
        assert code == 0
        assert any(line.startswith("reselected\t") for line in out.splitlines())

    def test_escalation_exits_six(self, cli, tmp_path):
        domain = tmp_path / "dead-end.domain"
        domain.write_text(
            "concept Thing\n"
            "entity A : Thing\n"
            "action Noop(x:Thing) pre: add: del:\n"
            "init: Ready(A)\n"
            "goal: Missing(A)\n"
        )
        policy = tmp_path / "policy.txt"
        policy.write_text(
            "action Noop(A)\nexpected-utility 1.0\nactual-utility 0.0\n"
        )
        code, _, err = cli("inject-policy", str(policy), "--domain", str(domain))
        assert code == 6
        assert err.startswith("error\tescalated\t")

    def test_type_violation_exits_five(self, cli, tmp_path):
        policy = tmp_path / "policy.txt"
        policy.write_text("action Fly(Base,Base,Base)\n")
        code, _, err = cli(
            "inject-policy", str(policy),
            "--domain", str(DOMAINS / "drone.domain"),
        )
        assert code == 5
        assert err.startswith("error\tplan\t")

    def test_empty_policy_file_is_a_usage_error(self, cli, tmp_path):
        policy = tmp_path / "policy.txt"
        policy.write_text("# nothing here\n")
        code, _, err = cli(
            "inject-policy", str(policy),
            "--domain", str(DOMAINS / "drone.domain"),
        )
        assert code == 2


class TestRunCommand:
    def test_navigation_stream_plans_and_seals(self, cli, tmp_path):
        stream = tmp_path / "stream.tsv"
        stream.write_text(
            "At(Agent1,LocationA)\t0.99\tsensor\n"
            "Connected(LocationA,LocationB)\t0.99\tmap\n"
        )
        code, out, _ = cli(
            "run", "--stream", str(stream),
            "--domain", str(DOMAINS / "navigation.domain"),
            "--goal", "At(Agent1,LocationB)",
        )
        assert code == 0
        assert "executed\tMove(Agent1,LocationA,LocationB)" in out
        ledger = Ledger(tmp_path / "veritas.vlog")
        assert len(ledger) >= 3
        assert ledger.blocks[0].formula == "session-start"

    def test_empty_stream_leaves_one_block(self, cli, tmp_path):
        stream = tmp_path / "empty.tsv"
        stream.write_text("")
        code, out, _ = cli("run", "--stream", str(stream))
        assert code == 0
        assert out == ""
        assert len(Ledger(tmp_path / "veritas.vlog")) == 1

    def test_contradictory_stream_stays_consistent(self, cli, tmp_path):
        stream = tmp_path / "stream.tsv"
        stream.write_text("p\t0.99\tsensor\n!p\t0.99\tsensor\n")
        code, out, _ = cli("run", "--stream", str(stream))
        assert code == 0
        assert "revised\t(! p)" in out
        code, out, _ = cli("query", "!p")
        assert out.startswith("entailed\t")

    def test_identical_runs_write_identical_ledgers(self, cli, tmp_path):
        stream = tmp_path / "stream.tsv"
        stream.write_text(
            "At(Agent1,LocationA)\t0.99\tsensor\n"
            "Connected(LocationA,LocationB)\t0.99\tmap\n"
        )
        blobs = []
        for stem in ("first", "second"):
            cli(
                "--set", f"ledger_path={stem}.vlog",
                "run", "--stream", str(stream),
                "--domain", str(DOMAINS / "navigation.domain"),
                "--goal", "At(Agent1,LocationB)",
            )
            blobs.append((tmp_path / f"{stem}.vlog").read_bytes())
        assert blobs[0] == blobs[1]

    def test_malformed_stream_line_is_a_usage_error(self, cli, tmp_path):
        stream = tmp_path / "stream.tsv"
        stream.write_text("p;0.99;sensor\n")
        code, _, err = cli("run", "--stream", str(stream))
        assert code == 2
        assert err.startswith("error\tusage\t")


class TestConfigPlumbing:
    def test_environment_variables_configure_the_session(
        self, cli, monkeypatch
    ):
        monkeypatch.setenv("VERITAS_LEDGER_PATH", "env.vlog")
        code, _, _ = cli("observe", "p", "--p", "0.99")
        assert code == 0
        assert Path("env.vlog").exists()

    def test_set_flag_beats_the_environment(self, cli, monkeypatch):
        monkeypatch.setenv("VERITAS_LEDGER_PATH", "env.vlog")
        code, _, _ = cli(
            "--set", "ledger_path=flag.vlog", "observe", "p", "--p", "0.99"
        )
        assert code == 0
        assert Path("flag.vlog").exists()
        assert not Path("env.vlog").exists()

    def test_config_file_is_honored(self, cli, tmp_path):
        conf = tmp_path / "agent.conf"
        conf.write_text("ledger_path=file.vlog\nreliability.sensor=0.9\n")
        code, _, _ = cli("--config", str(conf), "observe", "p", "--p", "0.99")
        assert code == 0
        assert Path("file.vlog").exists()

    def test_reliability_override_parses(self, cli):
        code, _, _ = cli(
            "--set", "reliability.sensor=0.8", "observe", "p", "--p", "0.99"
        )
        assert code == 0

    def test_audit_on_a_healthy_base_prints_none_actions(self, cli):
        cli("observe", "p", "--p", "0.99")
        code, out, _ = cli("audit")
        assert code == 0
        assert out.endswith("\tnone\n")
