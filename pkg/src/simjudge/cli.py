"""Command-line entry point: ``simjudge validate|judge|plan|solve|audit|probe|certify``.

Every subcommand prints JSON on stdout.  Exit codes: 0 pass/accept/certified,
2 rejected or invalid, 3 flagged, 1 usage or internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from .canonical import to_jsonable

EXIT_OK, EXIT_ERROR, EXIT_REJECT, EXIT_FLAG = 0, 1, 2, 3


def _emit(obj: Any, out: str | None = None) -> None:
    text = json.dumps(to_jsonable(obj), indent=2, sort_keys=True, ensure_ascii=False)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    print(text)


def _read_spec(path: str):
    from .specmd import extract_six_tuple, parse_spec

    doc = parse_spec(Path(path).read_bytes())
    return doc, extract_six_tuple(doc, strict=False)


def _limits(path: str | None):
    from .gates import Limits

    if not path:
        return Limits()
    return Limits.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def cmd_validate(args) -> int:
    from .specmd import parse_spec, validate_spec

    report = validate_spec(parse_spec(Path(args.spec).read_bytes()))
    _emit(report.to_dict(), args.out)
    return EXIT_OK if report.valid else EXIT_REJECT


def cmd_judge(args) -> int:
    from .gates import Plan, judge_pre

    _, spec = _read_spec(args.spec)
    verdict = judge_pre(spec, Plan.load(args.plan), _limits(args.limits))
    _emit(verdict.to_dict(), args.out)
    if verdict.outcome != "accept":
        return EXIT_REJECT
    return EXIT_FLAG if verdict.flags else EXIT_OK


def cmd_plan(args) -> int:
    from .gates import Plan, plan_budget
    from .opgraph import estimate_cost

    _, spec = _read_spec(args.spec)
    plan = Plan.load(args.plan)
    budget, graph, reason = plan_budget(spec, plan, _limits(args.limits))
    if budget is None:
        _emit({"error": reason}, args.out)
        return EXIT_REJECT
    dim = int(plan.dim or spec.domain_omega.dimension or 1)
    _emit({"budget": budget.to_dict(), "cost": estimate_cost(budget, graph, dim), "order": list(graph.order)},
          args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    from .fields import SolutionSeries
    from .gates import Plan
    from .runner import execute
    from .sfd import write_field, write_series

    _, spec = _read_spec(args.spec)
    run = execute(spec, Plan.load(args.plan))
    if not args.out:
        raise SystemExit("solve needs --out")
    if isinstance(run.solution, SolutionSeries):
        write_series(args.out, run.solution)
    else:
        write_field(args.out, run.solution)
    print(json.dumps(to_jsonable({"out": args.out, "inputs": run.inputs}), sort_keys=True))
    return EXIT_OK


def cmd_audit(args) -> int:
    from .audit import audit_solution, declarations_from_spec
    from .gates import gate_classification
    from .runner import evaluator_for
    from .sfd import read_solution

    _, spec = _read_spec(args.spec)
    solution = read_solution(args.solution)
    template, _ = gate_classification(spec)
    evaluator = evaluator_for(spec, solution, template.archetype_id)
    report = audit_solution(spec, solution, declarations_from_spec(spec), evaluator)
    _emit(report.to_dict(), args.out)
    return EXIT_FLAG if report.overall == "flag" else EXIT_OK


def cmd_probe(args) -> int:
    from .gates import Plan
    from .probes import BUILTIN_PROBLEMS, run_probes

    if args.plan:
        info = dict(Plan.load(args.plan).probe or {})
    else:
        info = {"problem": args.problem}
        if args.theta is not None:
            info["theta"] = args.theta
    name = info.pop("problem", None)
    if name not in BUILTIN_PROBLEMS:
        raise SystemExit(f"unknown probe problem {name!r}; choose from {sorted(BUILTIN_PROBLEMS)}")
    reports = run_probes(BUILTIN_PROBLEMS[name](**info), seed=args.seed)
    _emit([r.to_dict() for r in reports], args.out)
    return EXIT_FLAG if any(r.flagged for r in reports) else EXIT_OK


def cmd_certify(args) -> int:
    from .certify import certificate_json, run_pipeline, verify_certificate
    from .gates import Plan

    if args.verify:
        ok = verify_certificate(Path(args.verify).read_bytes())
        print(json.dumps({"verified": ok}))
        return EXIT_OK if ok else EXIT_REJECT
    if not (args.spec and args.plan):
        raise SystemExit("certify needs --spec and --plan (or --verify FILE)")
    result = run_pipeline(Path(args.spec).read_bytes(), Plan.load(args.plan), _limits(args.limits), seed=args.seed)
    text = certificate_json(result.certificate)
    if args.out:
        Path(args.out).write_bytes(text.encode("utf-8"))
    print(text)
    return {"certified": EXIT_OK, "rejected": EXIT_REJECT, "flagged": EXIT_FLAG}[result.certificate.outcome]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simjudge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_, spec=True, plan=False, solution=False):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--spec", required=spec, help="problem spec document (Markdown)")
        if plan:
            sp.add_argument("--plan", help="plan JSON file")
        if solution:
            sp.add_argument("--solution", required=True, help="SFD field or series manifest")
        sp.add_argument("--out", help="also write the result here")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--limits", help="JSON file with budget_limit and target_eps")
        sp.set_defaults(func=func)
        return sp

    add("validate", cmd_validate, "check document structure")
    add("judge", cmd_judge, "run the pre-execution gates", plan=True)
    add("plan", cmd_plan, "error budget and cost of a plan", plan=True)
    add("solve", cmd_solve, "execute a plan and write the solution", plan=True)
    add("audit", cmd_audit, "check a stored solution against declared invariants", solution=True)
    pr = add("probe", cmd_probe, "run the stability probes", spec=False, plan=True)
    pr.add_argument("--problem", default="pitchfork")
    pr.add_argument("--theta", type=float)
    ce = add("certify", cmd_certify, "full pipeline to a sealed certificate", spec=False, plan=True)
    ce.add_argument("--verify", help="check the seal of an existing certificate file")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    if args.command in ("judge", "plan", "solve") and not args.plan:
        parser.print_usage(sys.stderr)
        print(f"simjudge {args.command}: --plan is required", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except SystemExit as exc:
        print(f"simjudge {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # reported as an internal error, never a verdict
        print(f"simjudge {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
