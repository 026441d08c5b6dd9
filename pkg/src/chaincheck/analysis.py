"""Audits of register runs against chain and quorum necessary conditions.

A process *observes* a completed operation X when a message chain from X's
invocation reaches it by the time X responds; it is a *witness* when it
lies on a chain from X's invocation to X's response (a round trip inside
the operation's window).  Any crash-tolerant linearizable register must
give every completed operation more than f witnesses, and must lace reads
and same-value operations together with chains; the audits below flag every
completed operation or operation pair violating those conditions, and
``refute`` turns a flagged run into machine-checked evidence by reordering
it into an equivalent run whose history has no linearization.
"""

from __future__ import annotations

from dataclasses import dataclass

from .adversary import AdversarySpec, Invocation, extend_run
from .causality import CausalIndex, build_index, happens_before, op_chain
from .errors import AdversaryExhausted, PendingOperation, PreconditionFailed
from .linearize import (
    LinearizationResult,
    OperationInstance,
    extract_operations,
    find_linearization,
)
from .model import Node, Run
from .protocols import ProtocolSpec, resolve_protocol
from .transform import ReorderCertificate, reorder_operations

__all__ = [
    "AuditReport",
    "AuditViolation",
    "Refutation",
    "observers",
    "witnesses",
    "audit_quorum",
    "audit_chains",
    "refute",
]


@dataclass(frozen=True)
class AuditViolation:
    rule: str  # "witnesses" | "observers" | "read-chain" | "pair-chain" | "isolation-chain"
    op_ids: tuple[str, ...]
    detail: str


@dataclass(frozen=True)
class AuditReport:
    rule_family: str
    f: int | None
    per_operation: tuple[dict, ...]
    violations: tuple[AuditViolation, ...]

    @property
    def clean(self) -> bool:
        return not self.violations


def observers(run: Run, index: CausalIndex, op: OperationInstance) -> frozenset[int]:
    """Processes reached by a chain from the invocation by response time."""
    if op.end is None:
        raise PendingOperation(f"operation {op.id} has not completed")
    out = {op.process}
    for p in range(run.config.n):
        if p != op.process and happens_before(index, op.start, Node(p, op.end.time)):
            out.add(p)
    return frozenset(out)


def witnesses(run: Run, index: CausalIndex, op: OperationInstance) -> frozenset[int]:
    """Processes on some chain from the invocation to the response."""
    if op.end is None:
        raise PendingOperation(f"operation {op.id} has not completed")
    out = {op.process}
    vec = index.reach[op.start.process][op.start.time]
    for p in range(run.config.n):
        if p == op.process:
            continue
        arrival = vec[p]
        if arrival <= index.horizon and happens_before(index, Node(p, arrival), op.end):
            out.add(p)
    return frozenset(out)


def audit_quorum(run: Run, f: int | None = None) -> AuditReport:
    """Flag completed operations with at most f witnesses or observers."""
    f = run.config.f if f is None else f
    index = build_index(run)
    rows = []
    bad = []
    for op in extract_operations(run):
        if not op.completed:
            continue
        obs = observers(run, index, op)
        wit = witnesses(run, index, op)
        rows.append(
            {
                "op": op.id,
                "kind": op.kind,
                "value": op.value,
                "observers": sorted(obs),
                "witnesses": sorted(wit),
            }
        )
        if len(wit) <= f:
            bad.append(
                AuditViolation(
                    "witnesses", (op.id,), f"{len(wit)} witness(es), needs more than {f}"
                )
            )
        if len(obs) <= f:
            bad.append(
                AuditViolation(
                    "observers", (op.id,), f"{len(obs)} observer(s), needs more than {f}"
                )
            )
    return AuditReport("quorum", f, tuple(rows), tuple(bad))


def audit_chains(run: Run) -> AuditReport:
    """Evaluate the three chain-necessity rule families over all operations.

    read-chain:      every completed read returning v != None must be
                     chain-reachable from the write of v.
    pair-chain:      for a completed read of b and a completed b-operation Y
                     not chain-reachable from that read, every completed
                     operation X with a different value that precedes the
                     read must have a chain to Y.
    isolation-chain: a completed operation running in isolation must be
                     chain-reachable from every completed predecessor with a
                     different value.
    """
    index = build_index(run)
    ops = extract_operations(run)
    completed = [op for op in ops if op.completed]
    writes = {op.value: op for op in ops if op.kind == "W"}
    bad = []
    rows = []

    for r in completed:
        if r.kind != "R" or r.value is None:
            continue
        w = writes.get(r.value)
        if w is None:
            bad.append(
                AuditViolation(
                    "read-chain", (r.id,), f"read returned {r.value!r}, which no write wrote"
                )
            )
        elif not op_chain(index, w, r):
            bad.append(
                AuditViolation(
                    "read-chain", (w.id, r.id),
                    f"no chain from write of {r.value!r} to the read returning it",
                )
            )

    for r in completed:
        if r.kind != "R":
            continue
        for y in completed:
            if y.id == r.id or y.value != r.value:
                continue
            if op_chain(index, r, y):
                continue
            for x in completed:
                if x.id in (r.id, y.id) or x.value == y.value:
                    continue
                if x.precedes(r) and not op_chain(index, x, y):
                    bad.append(
                        AuditViolation(
                            "pair-chain", (x.id, r.id, y.id),
                            f"{x.id} precedes the read of {r.value!r} but has no chain "
                            f"to same-value operation {y.id}",
                        )
                    )

    for y in completed:
        if not y.isolated:
            continue
        for x in completed:
            if x.id == y.id or x.value == y.value:
                continue
            if x.precedes(y) and not op_chain(index, x, y):
                bad.append(
                    AuditViolation(
                        "isolation-chain", (x.id, y.id),
                        f"{x.id} precedes isolated {y.id} but has no chain to it",
                    )
                )

    for op in completed:
        rows.append({"op": op.id, "kind": op.kind, "value": op.value, "isolated": op.isolated})
    return AuditReport("chains", None, tuple(rows), tuple(dedupe(bad)))


def dedupe(violations: list[AuditViolation]) -> list[AuditViolation]:
    seen = set()
    out = []
    for v in violations:
        key = (v.rule, v.op_ids)
        if key not in seen:
            seen.add(key)
            out.append(v)
    return out


# ---------------------------------------------------------------------------
# mechanical refutation


@dataclass(frozen=True)
class Refutation:
    violation: AuditViolation
    run: Run
    verdict: LinearizationResult
    certificate: ReorderCertificate | None
    extension: Run | None = None
    notes: tuple[str, ...] = ()


def refute(run: Run, violation: AuditViolation, protocol: ProtocolSpec | None = None) -> Refutation:
    """Turn an audit violation into a locally equivalent run with no
    linearization.

    Chain violations reorder the chain-free pair so the later same-value
    operation completes first, producing an a-b-a real-time pattern.
    Quorum violations first extend the run: all observers of the flagged
    operation crash right after it completes, their in-flight messages are
    withheld, and a surviving process then writes a fresh value and reads it
    back in isolation; the extension's own chain violation is then reordered.
    """
    protocol = protocol or resolve_protocol(run.config)
    ops = {op.id: op for op in extract_operations(run)}
    if violation.rule == "read-chain":
        if len(violation.op_ids) < 2:
            raise PreconditionFailed("read of an unwritten value leaves nothing to reorder")
        w, r = (ops[i] for i in violation.op_ids)
        return _reorder_refute(run, violation, x=w, y=r, protocol=protocol)
    if violation.rule == "pair-chain":
        x, r, y = (ops[i] for i in violation.op_ids)
        return _reorder_refute(run, violation, x=x, y=y, protocol=protocol)
    if violation.rule == "isolation-chain":
        x, y = (ops[i] for i in violation.op_ids)
        return _reorder_refute(run, violation, x=x, y=y, protocol=protocol)
    if violation.rule in ("witnesses", "observers"):
        return _quorum_refute(run, violation, protocol)
    raise PreconditionFailed(f"no refutation strategy for rule {violation.rule!r}")


def _reorder_refute(run: Run, violation, x, y, protocol) -> Refutation:
    index = build_index(run)
    if op_chain(index, x, y):
        raise PreconditionFailed(
            f"chain {x.id} ~> {y.id} exists; the violation no longer holds"
        )
    notes = []
    if y.end is not None and y.end.time < x.start.time:
        # the contradiction pattern is already present in real time
        result, cert = run, None
        notes.append("pair already ordered; no transformation required")
    else:
        result, cert = reorder_operations(run, x, y, protocol=protocol)
    verdict = find_linearization(result)
    return Refutation(
        violation=violation,
        run=result,
        verdict=verdict,
        certificate=cert,
        notes=tuple(notes),
    )


def _quorum_refute(run: Run, violation, protocol) -> Refutation:
    op_id = violation.op_ids[0]
    op = {o.id: o for o in extract_operations(run)}[op_id]
    if op.end is None:
        raise PendingOperation(op_id)
    index = build_index(run)
    obs = observers(run, index, op)
    if len(obs) > run.config.f:
        raise PreconditionFailed(
            f"{op_id} now has {len(obs)} observers; the violation no longer holds"
        )
    survivors = sorted(set(range(run.config.n)) - obs)
    if not survivors:
        raise AdversaryExhausted("every process observed the operation; cannot extend")
    writer = survivors[0]
    pivot_round = op.end.time
    fresh = f"vx{writer}.{run.horizon}"
    extension_spec = AdversarySpec(
        schedule="eager",
        crash_plan=tuple((p, pivot_round) for p in sorted(obs)),
        invocations=(
            Invocation(writer, "W", fresh, None),
            Invocation(writer, "R", None, None),
        ),
        seek_quiescence=True,
        deliver_from_crashed=False,
    )
    extended = extend_run(
        run,
        protocol,
        extension_spec,
        extra_rounds=max(10 * run.config.n, 40),
        seed=0,
        cut=pivot_round,
    )
    chain_report = audit_chains(extended)
    for v in chain_report.violations:
        if v.rule == "pair-chain" and v.op_ids[0] == op_id:
            inner = _reorder_refute(
                extended,
                v,
                x={o.id: o for o in extract_operations(extended)}[v.op_ids[0]],
                y={o.id: o for o in extract_operations(extended)}[v.op_ids[2]],
                protocol=protocol,
            )
            return Refutation(
                violation=violation,
                run=inner.run,
                verdict=inner.verdict,
                certificate=inner.certificate,
                extension=extended,
                notes=("observers crashed after the operation; fresh write/read staged",)
                + inner.notes,
            )
    raise PreconditionFailed(
        "extension produced no chain violation for the flagged operation; "
        "the quorum finding could not be escalated"
    )
