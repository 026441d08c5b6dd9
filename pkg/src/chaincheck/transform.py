"""Run transformations that no process can distinguish from the original.

Given a pivot node, every event outside the pivot's causal past can be
pushed ``delta`` rounds into the future: each process sleeps for ``delta``
rounds starting right after its frontier time, environment components are
copied across the piecewise time map, and delivery stamps are rewritten to
the sender's shifted send round.  The construction preserves every local
history exactly, which is what the emitted certificate checks.

Reordering builds on this: if there is no message chain from operation X's
invocation to operation Y's response, delaying everything outside the past
of Y's response by t(Y.end) - t(X.start) + 1 rounds yields an equivalent
run in which Y completes strictly before X begins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .causality import PastFrontier, build_index, locally_equivalent, op_chain, past_frontier
from .errors import PreconditionFailed, ValidationFailure
from .linearize import OperationInstance, extract_operations
from .model import (
    BOTTOM,
    Deliver,
    JointAction,
    MessageRecord,
    Node,
    Run,
    SKIP,
    event_timelines,
    lost_messages,
    validate_run,
)
from .protocols import ProtocolSpec, resolve_protocol

__all__ = [
    "ShiftSpec",
    "TransformCertificate",
    "ReorderCertificate",
    "shift",
    "delay_future",
    "reorder_operations",
]


def shift(m: int, t_j: int, delta: int) -> int:
    """Piecewise time map: identity up to t_j, +delta from t_j+1 on.

    Its range skips the band (t_j, t_j + delta], and stepping commutes with
    it away from the seam: shift(m-1) == shift(m) - 1 for m != t_j + 1.
    """
    if m < 0:
        raise ValueError("times are nonnegative")
    if delta < 1:
        raise ValueError("delay must be positive")
    return m if m <= t_j else m + delta


@dataclass(frozen=True)
class ShiftSpec:
    pivot: Node
    delta: int
    frontier: PastFrontier


@dataclass(frozen=True)
class TransformCertificate:
    """Evidence that a delayed run is legal and locally equivalent.

    The correspondence map is determined by the frontier and delta: round m
    of process j in the source occurs at round shift(m, cut[j], delta) in
    the result, whose horizon is the source horizon plus delta.
    """

    source_digest: str
    result_digest: str
    spec: ShiftSpec
    valid: bool
    equivalent: bool
    states_match: bool
    band_empty: bool
    deliveries_match: bool
    losses_match: bool
    crashes_match: bool

    @property
    def ok(self) -> bool:
        return (
            self.valid
            and self.equivalent
            and self.states_match
            and self.band_empty
            and self.deliveries_match
            and self.losses_match
            and self.crashes_match
        )


def delay_future(
    run: Run, pivot: Node, delta: int, protocol: ProtocolSpec | None = None
) -> tuple[Run, TransformCertificate]:
    """Push everything outside the pivot's past ``delta`` rounds later.

    The result extends the horizon by ``delta`` and is checked before being
    returned; a failing certificate raises ValidationFailure since the
    construction is guaranteed to succeed on valid input.
    """
    if delta < 1:
        raise PreconditionFailed("delay must be positive")
    if not (0 <= pivot.time <= run.horizon and 0 <= pivot.process < run.config.n):
        raise PreconditionFailed("pivot must lie within the run")
    protocol = protocol or resolve_protocol(run.config)
    index = build_index(run)
    frontier = past_frontier(index, pivot)
    cut = frontier.cut
    n = run.config.n
    new_horizon = run.horizon + delta

    new_rounds = []
    for mp in range(1, new_horizon + 1):
        env = []
        actions = []
        for j in range(n):
            t_j = cut[j]
            if mp <= t_j:
                m = mp
            elif mp <= t_j + delta:
                env.append(SKIP)
                actions.append(BOTTOM)
                continue
            else:
                m = mp - delta
            if m > run.horizon:
                env.append(SKIP)
                actions.append(BOTTOM)
                continue
            src = run.rounds[m - 1]
            comp = src.env[j]
            if isinstance(comp, Deliver):
                comp = Deliver(
                    record=MessageRecord(
                        comp.record.payload,
                        shift(comp.record.send_round, cut[comp.sender], delta),
                    ),
                    sender=comp.sender,
                )
            env.append(comp)
            actions.append(src.actions[j])
        new_rounds.append(JointAction(env=tuple(env), actions=tuple(actions)))

    crashes = {p: shift(c, cut[p], delta) for p, c in run.crashes.items()}
    initial = replace(run.initial, crashed=crashes)
    result = Run(
        config=run.config,
        initial=initial,
        rounds=tuple(new_rounds),
        horizon=new_horizon,
        quiescent=run.quiescent,
    )
    cert = _certify(run, result, ShiftSpec(pivot, delta, frontier), protocol)
    if not cert.ok:
        raise ValidationFailure(
            "delayed run failed its certificate; this is a construction defect",
            certificate=cert,
        )
    return result, cert


def _certify(
    source: Run, result: Run, spec: ShiftSpec, protocol: ProtocolSpec
) -> TransformCertificate:
    from .trace import run_digest

    cut, delta = spec.frontier.cut, spec.delta
    valid = validate_run(result, protocol).ok
    equivalent = locally_equivalent(source, result)

    # pointwise state equalities, via the event timelines the replays produce:
    # process j's k-th event must recur identically with its round remapped,
    # which pins r'_j(m) = r_j(m) for m <= cut[j] and r'_j(m+delta) = r_j(m)
    # for m >= cut[j] + 1.
    states_match = True
    src_lines = event_timelines(source)
    dst_lines = event_timelines(result)
    for j in range(source.config.n):
        src, dst = src_lines[j], dst_lines[j]
        if len(src) != len(dst):
            states_match = False
            break
        for (r1, e1), (r2, e2) in zip(src, dst):
            if e1 != e2 or r2 != shift(r1, cut[j], delta):
                states_match = False
                break
        if not states_match:
            break

    band_empty = True
    for j in range(result.config.n):
        for mp in range(cut[j] + 1, min(cut[j] + delta, result.horizon) + 1):
            if result.rounds[mp - 1].env[j] != SKIP:
                band_empty = False

    from .model import deliveries

    src_deliv = [
        (d.sender, d.receiver, d.payload, shift(d.send_round, cut[d.sender], delta),
         shift(d.deliver_round, cut[d.receiver], delta))
        for d in deliveries(source)
    ]
    dst_deliv = [
        (d.sender, d.receiver, d.payload, d.send_round, d.deliver_round)
        for d in deliveries(result)
    ]
    deliveries_match = sorted(src_deliv) == sorted(dst_deliv)

    losses_match = sorted(
        (e, rec.payload) for e, rec in lost_messages(source)
    ) == sorted((e, rec.payload) for e, rec in lost_messages(result))
    crashes_match = set(source.crashes) == set(result.crashes)

    return TransformCertificate(
        source_digest=run_digest(source),
        result_digest=run_digest(result),
        spec=spec,
        valid=valid,
        equivalent=equivalent,
        states_match=states_match,
        band_empty=band_empty,
        deliveries_match=deliveries_match,
        losses_match=losses_match,
        crashes_match=crashes_match,
    )


@dataclass(frozen=True)
class ReorderCertificate:
    delay: TransformCertificate
    x_id: str
    y_id: str
    y_before_x: bool
    preserved_successors: tuple[str, ...]
    clause_ii_holds: bool

    @property
    def ok(self) -> bool:
        return self.delay.ok and self.y_before_x and self.clause_ii_holds


def reorder_operations(
    run: Run,
    x: OperationInstance,
    y: OperationInstance,
    protocol: ProtocolSpec | None = None,
) -> tuple[Run, ReorderCertificate]:
    """Produce an equivalent run in which y completes strictly before x starts.

    Requires y completed and no message chain from x's invocation to y's
    response.  Every completed z that followed x and has no chain to y
    still follows x in the result (checked and recorded).
    """
    if y.end is None:
        raise PreconditionFailed(f"operation {y.id} is pending; it cannot be moved earlier")
    index = build_index(run)
    if op_chain(index, x, y):
        raise PreconditionFailed(
            f"message chain {x.id} ~> {y.id} exists; reordering is impossible"
        )
    delta = y.end.time - x.start.time + 1
    if delta <= 0:
        raise PreconditionFailed(
            f"operation {x.id} already starts after {y.id} ends; nothing to reorder"
        )
    result, cert = delay_future(run, y.end, delta, protocol=protocol)

    new_ops = {op.id: op for op in extract_operations(result)}
    nx, ny = new_ops[x.id], new_ops[y.id]
    y_before_x = ny.end is not None and ny.end.time < nx.start.time

    preserved = []
    clause_ii = True
    x_end = _end_time(new_ops[x.id])
    for z in extract_operations(run):
        if z.id in (x.id, y.id) or not z.completed:
            continue
        if x.completed and x.precedes(z) and not op_chain(index, z, y):
            preserved.append(z.id)
            nz = new_ops[z.id]
            if not (x_end < nz.start.time):
                clause_ii = False
    rcert = ReorderCertificate(
        delay=cert,
        x_id=x.id,
        y_id=y.id,
        y_before_x=y_before_x,
        preserved_successors=tuple(preserved),
        clause_ii_holds=clause_ii,
    )
    if not rcert.ok:
        raise ValidationFailure("reordering failed its certificate", certificate=rcert)
    return result, rcert


def _end_time(op: OperationInstance) -> float:
    return op.end.time if op.end is not None else math.inf
