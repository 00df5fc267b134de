import json

import pytest

from simjudge.cli import EXIT_ERROR, EXIT_FLAG, EXIT_OK, EXIT_REJECT, main
from simjudge.corpus import all_cases
from simjudge.mutants import drop_section

CASES = {c.case_id: c for c in all_cases()}


@pytest.fixture
def case_files(tmp_path):
    def write(case_id, spec_edit=lambda t: t):
        case = CASES[case_id]
        spec = tmp_path / f"{case_id}.md"
        plan = tmp_path / f"{case_id}.json"
        spec.write_text(spec_edit(case.spec_text), encoding="utf-8")
        plan.write_text(json.dumps(case.plan), encoding="utf-8")
        return str(spec), str(plan)

    return write


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def test_validate(case_files, capsys):
    spec, _ = case_files("k01")
    code, out = run(capsys, "validate", "--spec", spec)
    assert code == EXIT_OK and json.loads(out)["valid"] is True
    broken, _ = case_files("k02", lambda t: drop_section(t, "Tolerance"))
    assert run(capsys, "validate", "--spec", broken)[0] == EXIT_REJECT


def test_judge_and_plan(case_files, capsys):
    spec, plan = case_files("k01")
    code, out = run(capsys, "judge", "--spec", spec, "--plan", plan)
    assert code == EXIT_OK and json.loads(out)["outcome"] == "accept"
    code, out = run(capsys, "plan", "--spec", spec, "--plan", plan)
    assert code == EXIT_OK and json.loads(out)["cost"] > 0
    spec, plan = case_files("b02")
    code, out = run(capsys, "judge", "--spec", spec, "--plan", plan)
    assert code == EXIT_REJECT and json.loads(out)["rejected_condition"] == "S3"


def test_solve_then_audit(case_files, capsys, tmp_path):
    spec, plan = case_files("k02")
    manifest = str(tmp_path / "k02_run.txt")
    assert run(capsys, "solve", "--spec", spec, "--plan", plan, "--out", manifest)[0] == EXIT_OK
    code, out = run(capsys, "audit", "--spec", spec, "--solution", manifest)
    assert code == EXIT_OK and json.loads(out)["overall"] == "pass"

    spec, plan = case_files("c02")  # negative temperatures from a large Crank-Nicolson step
    manifest = str(tmp_path / "c02_run.txt")
    run(capsys, "solve", "--spec", spec, "--plan", plan, "--out", manifest)
    assert run(capsys, "audit", "--spec", spec, "--solution", manifest)[0] == EXIT_FLAG


def test_probe(capsys):
    assert run(capsys, "probe", "--problem", "pitchfork", "--theta", "0.1")[0] == EXIT_FLAG
    assert run(capsys, "probe", "--problem", "pitchfork", "--theta", "-1")[0] == EXIT_OK
    assert run(capsys, "probe", "--problem", "vortex")[0] == EXIT_ERROR


def test_certify_and_verify(case_files, capsys, tmp_path):
    spec, plan = case_files("k01")
    cert = tmp_path / "k01.cert.json"
    code, out = run(capsys, "certify", "--spec", spec, "--plan", plan, "--out", str(cert))
    assert code == EXIT_OK and json.loads(out)["outcome"] == "certified"
    assert run(capsys, "certify", "--verify", str(cert))[0] == EXIT_OK
    raw = bytearray(cert.read_bytes())
    raw[10] ^= 1
    cert.write_bytes(bytes(raw))
    code, out = run(capsys, "certify", "--verify", str(cert))
    assert code == EXIT_REJECT and json.loads(out) == {"verified": False}


def test_certify_outcome_codes(case_files, capsys):
    spec, plan = case_files("b03")
    assert run(capsys, "certify", "--spec", spec, "--plan", plan)[0] == EXIT_REJECT
    spec, plan = case_files("c06")
    assert run(capsys, "certify", "--spec", spec, "--plan", plan)[0] == EXIT_FLAG


def test_usage_errors(case_files, capsys):
    spec, _ = case_files("k01")
    assert main(["judge", "--spec", spec]) == EXIT_ERROR
    assert main(["frobnicate"]) == EXIT_ERROR
    assert main(["certify"]) == EXIT_ERROR
    assert main(["validate", "--spec", spec + ".missing"]) == EXIT_ERROR
    capsys.readouterr()
