"""Scenario ingestion and the simulate/check/audit/fuzz pipelines.

A scenario file binds a system configuration, an adversary policy, a
horizon, a seed range, and the set of assertions to evaluate per seed.
``expect`` selects the polarity: "linearizable" scenarios pass when every
seed satisfies every enabled check; "violation" scenarios pass when at
least one seed fails one (they exist to pin down negative fixtures, and
with ``refute`` enabled the failure must also be escalated to a
not-linearizable equivalent run).
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path

from .adversary import AdversarySpec, Invocation, simulate
from .analysis import audit_chains, audit_quorum, refute
from .errors import (
    AdversaryExhausted,
    ChaincheckError,
    ConstraintError,
    ParseError,
)
from .linearize import extract_operations, find_linearization
from .model import Invoke, Run, SystemConfig, truncate, validate_run
from .protocols import resolve_protocol

__all__ = [
    "Checks",
    "ScenarioSpec",
    "SeedResult",
    "ScenarioOutcome",
    "load_scenario",
    "scenario_from_doc",
    "evaluate_seed",
    "run_scenario",
    "fuzz",
    "shrink_failure",
]

SCENARIO_FORMAT = "chaincheck-scenario/1"


@dataclass(frozen=True)
class Checks:
    validate: bool = True
    linearizable: bool = True
    quorum_clean: bool = False
    chains_clean: bool = False
    liveness: bool = False
    expect: str = "linearizable"  # or "violation"


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    config: SystemConfig
    adversary: AdversarySpec
    horizon: int
    seeds: tuple[int, ...]
    checks: Checks = field(default_factory=Checks)
    refute: bool = False
    search_bound: int = 12


def scenario_from_doc(doc: dict, name: str = "scenario", path: str | None = None) -> ScenarioSpec:
    if doc.get("schema") not in (None, SCENARIO_FORMAT):
        raise ParseError(f"unsupported schema {doc.get('schema')!r}", path=path, field="schema")
    try:
        cfg = doc["config"]
        net = cfg.get("net", "complete")
        if net == "complete":
            config = SystemConfig.complete(int(cfg["n"]), int(cfg["f"]), cfg["protocol"])
        else:
            config = SystemConfig(
                n=int(cfg["n"]),
                f=int(cfg["f"]),
                edges=frozenset((int(a), int(b)) for a, b in net),
                protocol_id=cfg["protocol"],
            )
        adversary = AdversarySpec.from_doc(doc.get("adversary", {}))
        horizon = int(doc["horizon"])
        if "seeds" in doc:
            lo, hi = doc["seeds"]
            seeds = tuple(range(int(lo), int(hi) + 1))
        else:
            seeds = (int(doc.get("seed", 0)),)
        checks = Checks(**doc.get("checks", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed scenario: {exc}", path=path) from exc
    spec = ScenarioSpec(
        name=name,
        config=config,
        adversary=adversary,
        horizon=horizon,
        seeds=seeds,
        checks=checks,
        refute=bool(doc.get("refute", False)),
        search_bound=int(doc.get("search_bound", 12)),
    )
    _validate_scenario(spec)
    return spec


def _validate_scenario(spec: ScenarioSpec) -> None:
    adv, cfg = spec.adversary, spec.config
    if adv.crash_plan is not None and len(dict(adv.crash_plan)) > cfg.f:
        raise ConstraintError(
            f"crash plan names {len(dict(adv.crash_plan))} processes but f={cfg.f}"
        )
    if adv.max_crashes > cfg.f:
        raise ConstraintError(f"max_crashes {adv.max_crashes} exceeds f={cfg.f}")
    if adv.crash_plan is not None:
        for p, _ in adv.crash_plan:
            if not 0 <= p < cfg.n:
                raise ConstraintError(f"crash plan names unknown process {p}")
    if adv.invocations is not None:
        for inv in adv.invocations:
            if not 0 <= inv.process < cfg.n:
                raise ConstraintError(f"invocation names unknown process {inv.process}")
            if inv.round_no is not None and not 1 <= inv.round_no <= spec.horizon:
                raise ConstraintError(
                    f"invocation round {inv.round_no} outside 1..{spec.horizon}"
                )
    if spec.horizon < 1:
        raise ConstraintError("horizon must be at least 1")
    if not spec.seeds:
        raise ConstraintError("empty seed range")


def load_scenario(path: str | Path) -> ScenarioSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", path=str(path)) from exc
    return scenario_from_doc(doc, name=path.stem, path=str(path))


# ---------------------------------------------------------------------------
# per-seed evaluation


@dataclass(frozen=True)
class SeedResult:
    seed: int
    run: Run
    quiescent: bool
    ops: int
    completed: int
    pending_alive: int
    failed: tuple[str, ...]  # names of enabled checks that did not hold
    chain_violations: tuple = ()
    quorum_violations: tuple = ()
    linearizable: bool | None = None

    @property
    def ok(self) -> bool:
        return not self.failed


def evaluate_seed(spec: ScenarioSpec, seed: int) -> SeedResult:
    protocol = resolve_protocol(spec.config)
    run = simulate(spec.config, protocol, spec.adversary, spec.horizon, seed)
    return evaluate_run(spec, run, seed)


def evaluate_run(spec: ScenarioSpec, run: Run, seed: int) -> SeedResult:
    protocol = resolve_protocol(spec.config)
    checks = spec.checks
    failed = []
    ops = extract_operations(run)
    completed = [op for op in ops if op.completed]
    alive = [
        op for op in ops
        if not op.completed and op.process not in run.crashes
    ]
    if checks.validate and not validate_run(run, protocol).ok:
        failed.append("validate")
    linearizable = None
    if checks.linearizable:
        linearizable = find_linearization(run, bound=spec.search_bound).linearizable
        if not linearizable:
            failed.append("linearizable")
    chain_v: tuple = ()
    if checks.chains_clean:
        chain_v = audit_chains(run).violations
        if chain_v:
            failed.append("chains_clean")
    quorum_v: tuple = ()
    if checks.quorum_clean:
        quorum_v = audit_quorum(run).violations
        if quorum_v:
            failed.append("quorum_clean")
    if checks.liveness and (not run.quiescent or alive):
        failed.append("liveness")
    return SeedResult(
        seed=seed,
        run=run,
        quiescent=run.quiescent,
        ops=len(ops),
        completed=len(completed),
        pending_alive=len(alive),
        failed=tuple(failed),
        chain_violations=chain_v,
        quorum_violations=quorum_v,
        linearizable=linearizable,
    )


# ---------------------------------------------------------------------------
# scenario execution


@dataclass(frozen=True)
class ScenarioOutcome:
    ok: bool
    results: tuple[SeedResult, ...]
    refutations: tuple = ()
    notes: tuple[str, ...] = ()


def _evaluate_many(spec: ScenarioSpec, seeds, jobs: int) -> tuple[SeedResult, ...]:
    """Per-seed work is pure over immutable inputs, so seeds can fan out to a
    worker pool; result order follows the seed order either way."""
    if jobs <= 1 or len(seeds) <= 1:
        return tuple(evaluate_seed(spec, seed) for seed in seeds)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return tuple(pool.map(partial(evaluate_seed, spec), seeds, chunksize=8))


def run_scenario(
    spec: ScenarioSpec,
    expect: str | None = None,
    do_refute: bool | None = None,
    jobs: int = 1,
) -> ScenarioOutcome:
    expect = expect or spec.checks.expect
    do_refute = spec.refute if do_refute is None else do_refute
    results = _evaluate_many(spec, spec.seeds, jobs)
    refutations = []
    notes = []
    if expect == "linearizable":
        ok = all(r.ok for r in results)
        if not ok:
            bad = [r.seed for r in results if not r.ok]
            notes.append(f"{len(bad)} seed(s) failed: {bad[:10]}")
    elif expect == "violation":
        witnesses = [r for r in results if not r.ok]
        ok = bool(witnesses)
        if not ok:
            notes.append("no seed exhibited the expected violation")
        elif do_refute:
            ok = False
            for r in witnesses:
                for v in r.chain_violations + r.quorum_violations:
                    try:
                        ref = refute(r.run, v)
                    except ChaincheckError:
                        continue
                    refutations.append((r.seed, ref))
                    if not ref.verdict.linearizable:
                        ok = True
                        break
                if ok:
                    break
            if not ok:
                notes.append("violations found but none could be refuted")
    else:
        raise ConstraintError(f"unknown expectation {expect!r}")
    return ScenarioOutcome(ok=ok, results=results, refutations=tuple(refutations), notes=tuple(notes))


# ---------------------------------------------------------------------------
# fuzzing and shrinking


def _planned_invocations(run: Run) -> tuple[Invocation, ...]:
    """Recover the explicit invocation plan a run executed."""
    plan = []
    for k, ja in enumerate(run.rounds):
        for i, comp in enumerate(ja.env):
            if isinstance(comp, Invoke):
                inp = tuple(comp.input)
                plan.append(
                    Invocation(
                        process=i,
                        kind=inp[0],
                        value=inp[1] if inp[0] == "W" else None,
                        round_no=k + 1,
                    )
                )
    return tuple(plan)


def shrink_failure(spec: ScenarioSpec, result: SeedResult) -> SeedResult:
    """Minimize a failing seed: bisect the horizon over trace prefixes, then
    drop invocations one at a time, re-simulating under the same policy.
    Every accepted candidate still validates and fails the same check."""
    target = result.failed[0]
    protocol = resolve_protocol(spec.config)

    def still_fails(run: Run) -> SeedResult | None:
        if not validate_run(run, protocol).ok:
            return None
        r = evaluate_run(spec, run, result.seed)
        return r if target in r.failed else None

    best = result
    lo, hi = 1, best.run.horizon
    while lo < hi:
        mid = (lo + hi) // 2
        cand = still_fails(truncate(best.run, mid))
        if cand is not None:
            hi = mid
            best = cand
        else:
            lo = mid + 1

    plan = list(_planned_invocations(best.run))
    k = 0
    while k < len(plan):
        attempt = plan[:k] + plan[k + 1 :]
        sim_spec = replace(
            spec.adversary, invocations=tuple(attempt), max_invocations=0
        )
        try:
            run = simulate(spec.config, protocol, sim_spec, best.run.horizon, result.seed)
        except AdversaryExhausted:
            k += 1
            continue
        cand = still_fails(run)
        if cand is not None:
            best = cand
            plan = attempt
        else:
            k += 1
    return best


@dataclass(frozen=True)
class FuzzOutcome:
    budget: int
    failures: tuple[SeedResult, ...]
    minimal: tuple[SeedResult, ...]


def fuzz(spec: ScenarioSpec, budget: int, jobs: int = 1) -> FuzzOutcome:
    """Sweep seeds 0..budget-1, shrinking every failing seed sequentially."""
    if budget < 1:
        raise ConstraintError("fuzz budget must be at least 1")
    results = _evaluate_many(spec, tuple(range(budget)), jobs)
    failures = tuple(r for r in results if not r.ok)
    minimal = tuple(shrink_failure(spec, r) for r in failures)
    return FuzzOutcome(budget=budget, failures=failures, minimal=minimal)
