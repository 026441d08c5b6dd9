"""Command-line interface.

Commands operate on scenario files and trace files; report paths write a
JSON report document, CSV tables, and rendered figures into the output
directory (``--out``, or $CHAINCHECK_OUT, or ./out).  Exit status is 0
exactly when every requested assertion held.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from . import __version__
from .adversary import simulate
from .analysis import audit_chains, audit_quorum, refute
from .causality import build_index, past_frontier
from .errors import ChaincheckError
from .linearize import extract_operations, find_linearization
from .model import Node, validate_run
from .protocols import resolve_protocol
from .report import report_document, write_csv, write_json
from .scenario import fuzz, load_scenario, run_scenario
from .trace import load_run, run_digest, save_run
from . import figures

OUT_ENV = "CHAINCHECK_OUT"


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ChaincheckError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chaincheck", description=__doc__)
    p.add_argument("--version", action="version", version=f"chaincheck {__version__}")
    sub = p.add_subparsers(required=True)

    def add(name, handler, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(handler=handler)
        sp.add_argument("--out", default=None, help="output directory")
        return sp

    sp = add("simulate", cmd_simulate, "simulate a scenario seed and persist the trace")
    sp.add_argument("scenario", help="scenario JSON file")
    sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    sp.add_argument("--horizon", type=int, default=None, help="override the horizon")

    sp = add("replay", cmd_replay, "replay a trace and validate it against its protocol")
    sp.add_argument("trace")

    sp = add("analyze", cmd_analyze, "causality report: operations, chain matrix, frontier")
    sp.add_argument("trace")
    sp.add_argument("--pivot", default=None, help="frontier pivot as process:time")

    sp = add("transform", cmd_transform, "delay everything outside a pivot's past")
    sp.add_argument("trace")
    sp.add_argument("--pivot", required=True, help="pivot node as process:time")
    sp.add_argument("--delta", required=True, type=int, help="delay in rounds")

    sp = add("reorder", cmd_reorder, "move operation Y ahead of operation X")
    sp.add_argument("trace")
    sp.add_argument("--x", required=True, help="operation id, e.g. 0:1")
    sp.add_argument("--y", required=True, help="operation id that must finish first")

    sp = add("check-lin", cmd_check_lin, "decide whether the trace history linearizes")
    sp.add_argument("trace")
    sp.add_argument("--expect", choices=["linearizable", "violation"], default=None)

    sp = add("audit", cmd_audit, "witness/observer and chain-condition audit")
    sp.add_argument("trace")
    sp.add_argument("--f", type=int, default=None, help="override the crash tolerance")
    sp.add_argument("--refute", action="store_true", help="escalate violations to evidence runs")

    sp = add("fuzz", cmd_fuzz, "sweep seeds and shrink failures to minimal traces")
    sp.add_argument("scenario")
    sp.add_argument("--budget", type=int, default=100, help="number of seeds to sweep")
    sp.add_argument("--jobs", type=int, default=1, help="seed-evaluation worker processes")

    sp = add("run-scenario", cmd_run_scenario, "evaluate every scenario assertion per seed")
    sp.add_argument("scenario")
    sp.add_argument("--expect", choices=["linearizable", "violation"], default=None)
    sp.add_argument("--refute", action="store_true", default=None)
    sp.add_argument("--seeds", default=None, help="override seed range as A..B")
    sp.add_argument("--jobs", type=int, default=1, help="seed-evaluation worker processes")

    return p


def out_dir(args) -> Path:
    root = args.out or os.environ.get(OUT_ENV) or "out"
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def parse_node(text: str) -> Node:
    try:
        proc, t = text.split(":")
        return Node(int(proc), int(t))
    except ValueError:
        raise ChaincheckError(f"expected process:time, got {text!r}") from None


# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    started = time.monotonic()
    spec = load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else spec.seeds[0]
    horizon = args.horizon or spec.horizon
    protocol = resolve_protocol(spec.config)
    run = simulate(spec.config, protocol, spec.adversary, horizon, seed)
    out = out_dir(args)
    trace_path = save_run(run, out / f"trace-{spec.name}-{seed}.json", seed=seed, adversary=spec.adversary.to_doc())
    doc = report_document(
        "simulate",
        {"scenario": str(args.scenario), "seed": seed, "horizon": horizon},
        {"trace": str(trace_path), "digest": run_digest(run), "quiescent": run.quiescent},
        started,
    )
    write_json(doc, out / f"simulate-{spec.name}-{seed}.json")
    print(f"trace {trace_path} digest {run_digest(run)[:16]} quiescent={run.quiescent}")
    return 0


def cmd_replay(args) -> int:
    run = load_run(args.trace)
    protocol = resolve_protocol(run.config)
    report = validate_run(run, protocol)
    print(f"digest {run_digest(run)[:16]} rounds={run.horizon} violations={len(report.violations)}")
    for v in report.violations[:20]:
        print(f"  round {v.round_no} process {v.process}: [{v.kind}] {v.detail}")
    return 0 if report.ok else 1


def cmd_analyze(args) -> int:
    started = time.monotonic()
    run = load_run(args.trace)
    out = out_dir(args)
    stem = Path(args.trace).stem
    index = build_index(run)
    ops = extract_operations(run)
    from .causality import op_chain

    chain_matrix = {
        x.id: {y.id: bool(y.completed and op_chain(index, x, y)) for y in ops}
        for x in ops
    }
    frontier = None
    frontier_doc = None
    if args.pivot:
        frontier = past_frontier(index, parse_node(args.pivot))
        frontier_doc = {"pivot": args.pivot, "cut": list(frontier.cut)}
    results = {
        "digest": run_digest(run),
        "operations": [
            {
                "id": o.id, "process": o.process, "kind": o.kind, "value": o.value,
                "start": o.start.time, "end": o.end.time if o.end else None,
                "isolated": o.isolated,
            }
            for o in ops
        ],
        "chains": chain_matrix,
        "frontier": frontier_doc,
    }
    write_json(report_document("analyze", {"trace": str(args.trace)}, results, started), out / f"analyze-{stem}.json")
    write_csv(
        out / f"ops-{stem}.csv",
        ["id", "process", "kind", "value", "start", "end", "isolated"],
        [
            [o.id, o.process, o.kind, o.value, o.start.time, o.end.time if o.end else "", o.isolated]
            for o in ops
        ],
    )
    ids = [o.id for o in ops]
    write_csv(
        out / f"chains-{stem}.csv",
        ["from\\to"] + ids,
        [[x] + [int(chain_matrix[x][y]) for y in ids] for x in ids],
    )
    figures.save_spacetime(run, ops, out / f"spacetime-{stem}.png", frontier=frontier, title=stem)
    print(f"analyze: {len(ops)} operations, reports under {out}")
    return 0


def cmd_transform(args) -> int:
    started = time.monotonic()
    run = load_run(args.trace)
    out = out_dir(args)
    stem = Path(args.trace).stem
    from .transform import delay_future

    result, cert = delay_future(run, parse_node(args.pivot), args.delta)
    trace_path = save_run(result, out / f"delayed-{stem}.json")
    doc = report_document(
        "transform",
        {"trace": str(args.trace), "pivot": args.pivot, "delta": args.delta},
        {
            "result_trace": str(trace_path),
            "source_digest": cert.source_digest,
            "result_digest": cert.result_digest,
            "frontier": list(cert.spec.frontier.cut),
            "checks": {
                "valid": cert.valid,
                "equivalent": cert.equivalent,
                "states_match": cert.states_match,
                "band_empty": cert.band_empty,
                "deliveries_match": cert.deliveries_match,
                "losses_match": cert.losses_match,
                "crashes_match": cert.crashes_match,
            },
        },
        started,
    )
    write_json(doc, out / f"certificate-{stem}.json")
    print(f"delayed run written to {trace_path}; certificate ok={cert.ok}")
    return 0


def cmd_reorder(args) -> int:
    started = time.monotonic()
    run = load_run(args.trace)
    out = out_dir(args)
    stem = Path(args.trace).stem
    from .transform import reorder_operations

    ops = {o.id: o for o in extract_operations(run)}
    try:
        x, y = ops[args.x], ops[args.y]
    except KeyError as exc:
        raise ChaincheckError(f"no operation with id {exc}") from None
    result, cert = reorder_operations(run, x, y)
    trace_path = save_run(result, out / f"reordered-{stem}.json")
    doc = report_document(
        "reorder",
        {"trace": str(args.trace), "x": args.x, "y": args.y},
        {
            "result_trace": str(trace_path),
            "delta": cert.delay.spec.delta,
            "y_before_x": cert.y_before_x,
            "preserved_successors": list(cert.preserved_successors),
            "certificate_ok": cert.ok,
        },
        started,
    )
    write_json(doc, out / f"reorder-{stem}.json")
    print(f"reordered run written to {trace_path}; certificate ok={cert.ok}")
    return 0


def cmd_check_lin(args) -> int:
    started = time.monotonic()
    run = load_run(args.trace)
    out = out_dir(args)
    stem = Path(args.trace).stem
    verdict = find_linearization(run)
    results = {"linearizable": verdict.linearizable, "stats": {"expanded": verdict.stats.expanded}}
    if verdict.witness is not None:
        results["witness"] = [
            {
                "entry": type(e).__name__.lower(),
                "op": e.op_id,
                "kind": e.kind,
                "value": e.value,
            }
            for e in verdict.witness.entries
        ]
    if verdict.evidence is not None:
        results["evidence"] = {
            "longest_prefix": list(verdict.evidence.longest_prefix),
            "blocked": list(verdict.evidence.blocked),
            "aba_triples": [list(t) for t in verdict.evidence.aba_triples],
        }
    write_json(report_document("check-lin", {"trace": str(args.trace)}, results, started), out / f"checklin-{stem}.json")
    print("linearizable" if verdict.linearizable else "NOT linearizable")
    expected = args.expect
    if expected == "violation":
        return 0 if not verdict.linearizable else 1
    if expected == "linearizable":
        return 0 if verdict.linearizable else 1
    return 0


def cmd_audit(args) -> int:
    started = time.monotonic()
    run = load_run(args.trace)
    out = out_dir(args)
    stem = Path(args.trace).stem
    quorum = audit_quorum(run, f=args.f)
    chains = audit_chains(run)
    f_used = run.config.f if args.f is None else args.f
    results = {
        "digest": run_digest(run),
        "f": f_used,
        "quorum": {
            "clean": quorum.clean,
            "per_operation": list(quorum.per_operation),
            "violations": [[v.rule, list(v.op_ids), v.detail] for v in quorum.violations],
        },
        "chains": {
            "clean": chains.clean,
            "violations": [[v.rule, list(v.op_ids), v.detail] for v in chains.violations],
        },
    }
    refutations = []
    if args.refute:
        for v in chains.violations + quorum.violations:
            try:
                ref = refute(run, v)
            except ChaincheckError as exc:
                refutations.append({"rule": v.rule, "ops": list(v.op_ids), "error": str(exc)})
                continue
            evidence_path = save_run(ref.run, out / f"evidence-{stem}-{len(refutations)}.json")
            refutations.append(
                {
                    "rule": v.rule,
                    "ops": list(v.op_ids),
                    "evidence_trace": str(evidence_path),
                    "linearizable": ref.verdict.linearizable,
                }
            )
        results["refutations"] = refutations
    write_json(report_document("audit", {"trace": str(args.trace)}, results, started), out / f"audit-{stem}.json")
    write_csv(
        out / f"witnesses-{stem}.csv",
        ["op", "kind", "value", "witnesses", "observers"],
        [
            [r["op"], r["kind"], r["value"], len(r["witnesses"]), len(r["observers"])]
            for r in quorum.per_operation
        ],
    )
    ops = extract_operations(run)
    figures.save_spacetime(run, ops, out / f"spacetime-{stem}.png", title=stem)
    if quorum.per_operation:
        figures.save_witness_bars(quorum.per_operation, f_used, out / f"witnesses-{stem}.png", title=stem)
    clean = quorum.clean and chains.clean
    refuted = any(not r.get("linearizable", True) for r in refutations)
    print(
        f"audit: quorum {'clean' if quorum.clean else 'violated'}, "
        f"chains {'clean' if chains.clean else 'violated'}"
        + (f", {sum(1 for r in refutations if not r.get('linearizable', True))} refutation(s)" if args.refute else "")
    )
    if args.refute and not clean:
        return 0 if refuted else 1
    return 0 if clean else 1


def cmd_fuzz(args) -> int:
    started = time.monotonic()
    spec = load_scenario(args.scenario)
    out = out_dir(args)
    outcome = fuzz(spec, args.budget, jobs=args.jobs)
    minimal_info = []
    for r in outcome.minimal:
        path = save_run(r.run, out / f"minimal-{spec.name}-{r.seed}.json", seed=r.seed)
        minimal_info.append(
            {"seed": r.seed, "trace": str(path), "ops": r.ops, "failed": list(r.failed), "horizon": r.run.horizon}
        )
    doc = report_document(
        "fuzz",
        {"scenario": str(args.scenario), "budget": args.budget},
        {"failures": len(outcome.failures), "minimal": minimal_info},
        started,
    )
    write_json(doc, out / f"fuzz-{spec.name}.json")
    figures.save_verdict_hist(
        {"pass": args.budget - len(outcome.failures), "fail": len(outcome.failures)},
        out / f"fuzz-{spec.name}.png",
        title=f"fuzz {spec.name} ({args.budget} seeds)",
    )
    print(f"fuzz: {len(outcome.failures)} failing seed(s) of {args.budget}")
    expect_violation = spec.checks.expect == "violation"
    if expect_violation:
        return 0 if outcome.failures else 1
    return 0 if not outcome.failures else 1


def cmd_run_scenario(args) -> int:
    started = time.monotonic()
    spec = load_scenario(args.scenario)
    if args.seeds:
        lo, _, hi = args.seeds.partition("..")
        seeds = tuple(range(int(lo), int(hi or lo) + 1))
        spec = type(spec)(**{**spec.__dict__, "seeds": seeds})
    out = out_dir(args)
    outcome = run_scenario(spec, expect=args.expect, do_refute=args.refute, jobs=args.jobs)
    rows = [
        [r.seed, r.quiescent, r.ops, r.completed, r.pending_alive,
         r.linearizable if r.linearizable is not None else "", ";".join(r.failed)]
        for r in outcome.results
    ]
    write_csv(
        out / f"results-{spec.name}.csv",
        ["seed", "quiescent", "ops", "completed", "pending_alive", "linearizable", "failed"],
        rows,
    )
    evidence = []
    for seed, ref in outcome.refutations:
        path = save_run(ref.run, out / f"evidence-{spec.name}-{seed}.json", seed=seed)
        evidence.append({"seed": seed, "trace": str(path), "linearizable": ref.verdict.linearizable})
    doc = report_document(
        "run-scenario",
        {"scenario": str(args.scenario), "seeds": [spec.seeds[0], spec.seeds[-1]]},
        {
            "ok": outcome.ok,
            "failed_seeds": [r.seed for r in outcome.results if not r.ok],
            "notes": list(outcome.notes),
            "evidence": evidence,
        },
        started,
    )
    write_json(doc, out / f"report-{spec.name}.json")
    counts: dict[str, int] = {}
    for r in outcome.results:
        key = "pass" if r.ok else "fail"
        counts[key] = counts.get(key, 0) + 1
    figures.save_verdict_hist(counts, out / f"verdicts-{spec.name}.png", title=spec.name)
    if outcome.results:
        first = outcome.results[0]
        figures.save_spacetime(
            first.run, extract_operations(first.run),
            out / f"spacetime-{spec.name}-{first.seed}.png",
            title=f"{spec.name} seed {first.seed}",
        )
    status = "ok" if outcome.ok else "FAILED"
    print(f"run-scenario {spec.name}: {status}; report under {out}")
    return 0 if outcome.ok else 1


if __name__ == "__main__":
    sys.exit(main())
