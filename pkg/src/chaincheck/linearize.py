"""Operation histories and the linearization decision procedure.

Operations are extracted from a run by pairing each invocation input with
the process's matching response action.  The checker then searches for an
atomic-register sequential history over all completed operations (plus any
subset of pending ones, each given an invented matching response) that
respects the run's real-time precedence.  The search is exhaustive, so a
negative verdict is a proof at the sizes in scope; histories larger than
the configured bound are rejected up front rather than answered heuristically.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Iterable

from .errors import HistoryTooLarge, ProtocolViolation
from .model import Invoke, Node, Return, Run

__all__ = [
    "Invocation",
    "Response",
    "LinearizationResult",
    "NotLinearizableEvidence",
    "OperationInstance",
    "SequentialHistory",
    "check_no_aba",
    "extract_operations",
    "find_linearization",
    "is_atomic_history",
    "linearize_operations",
    "brute_force_linearizable",
    "DEFAULT_SEARCH_BOUND",
]

DEFAULT_SEARCH_BOUND = 12


@dataclass(frozen=True)
class OperationInstance:
    """One read or write: invocation node, response node (or None), value.

    ``value`` is the written value for a write and the returned value for a
    completed read (None both for the default register value and for a
    pending read).  ``isolated`` records whether no other operation in the
    run is concurrent with this one.
    """

    id: str
    process: int
    kind: str  # "R" | "W"
    value: Any
    start: Node
    end: Node | None
    isolated: bool = False

    @property
    def completed(self) -> bool:
        return self.end is not None

    def precedes(self, other: "OperationInstance") -> bool:
        """Real-time precedence: this operation responds before the other is
        invoked.  Pending operations never precede anything."""
        return self.end is not None and self.end.time < other.start.time


def extract_operations(run: Run) -> tuple[OperationInstance, ...]:
    """One instance per invocation, ends filled from matching responses.

    Raises ProtocolViolation when a response has no pending invocation of
    the same kind at that process.
    """
    open_ops: dict[int, dict] = {}
    counters = [0] * run.config.n
    ops: list[dict] = []
    for k, ja in enumerate(run.rounds):
        m = k + 1
        for i, comp in enumerate(ja.env):
            if isinstance(comp, Invoke):
                inp = tuple(comp.input)
                rec = {
                    "id": f"{i}:{counters[i]}",
                    "process": i,
                    "kind": inp[0],
                    "value": inp[1] if inp[0] == "W" else None,
                    "start": Node(i, m),
                    "end": None,
                }
                counters[i] += 1
                if i in open_ops:
                    raise ProtocolViolation(
                        f"round {m}: invocation at process {i} overlaps a pending operation"
                    )
                open_ops[i] = rec
                ops.append(rec)
            action = ja.actions[i]
            if isinstance(action, Return):
                rec = open_ops.pop(i, None)
                if rec is None or rec["kind"] != action.kind:
                    raise ProtocolViolation(
                        f"round {m}: response at process {i} matches no pending invocation"
                    )
                rec["end"] = Node(i, m)
                if action.kind == "R":
                    rec["value"] = action.args[0]
    out = [OperationInstance(**rec) for rec in ops]
    return tuple(_classify_isolation(out))


def _classify_isolation(ops: list[OperationInstance]) -> list[OperationInstance]:
    def concurrent(a: OperationInstance, b: OperationInstance) -> bool:
        return not (a.precedes(b) or b.precedes(a))

    flagged = []
    for a in ops:
        isolated = all(not concurrent(a, b) for b in ops if b is not a)
        flagged.append(
            OperationInstance(
                a.id, a.process, a.kind, a.value, a.start, a.end, isolated
            )
        )
    return flagged


# ---------------------------------------------------------------------------
# sequential histories


@dataclass(frozen=True)
class Invocation:
    op_id: str
    process: int
    kind: str
    value: Any = None  # written value for W, None for R


@dataclass(frozen=True)
class Response:
    op_id: str
    process: int
    kind: str
    value: Any = None  # returned value for R, None for W


@dataclass(frozen=True)
class SequentialHistory:
    """Alternating invocations and responses; entry 2k matches entry 2k+1."""

    entries: tuple[Invocation | Response, ...]

    def operation_order(self) -> tuple[str, ...]:
        return tuple(e.op_id for e in self.entries if isinstance(e, Invocation))

    @classmethod
    def of(cls, ordered: Iterable[tuple[OperationInstance, Any]]) -> "SequentialHistory":
        entries: list[Invocation | Response] = []
        for op, returned in ordered:
            entries.append(Invocation(op.id, op.process, op.kind, op.value if op.kind == "W" else None))
            entries.append(Response(op.id, op.process, op.kind, returned if op.kind == "R" else None))
        return cls(tuple(entries))


def is_atomic_history(history: SequentialHistory) -> bool:
    """Well-formed alternation plus register semantics: every read returns
    the most recently written value, or the default None before any write."""
    entries = history.entries
    last_written = None
    for k in range(0, len(entries), 2):
        inv = entries[k]
        if not isinstance(inv, Invocation):
            return False
        if k + 1 < len(entries):
            res = entries[k + 1]
            if not isinstance(res, Response):
                return False
            if (res.process, res.kind, res.op_id) != (inv.process, inv.kind, inv.op_id):
                return False
            if inv.kind == "W":
                last_written = inv.value
            elif res.value != last_written:
                return False
        elif inv.kind == "W":
            last_written = inv.value
    return True


# ---------------------------------------------------------------------------
# linearization search


@dataclass(frozen=True)
class NotLinearizableEvidence:
    longest_prefix: tuple[str, ...]
    blocked: tuple[str, ...]
    aba_triples: tuple[tuple[str, str, str], ...]


@dataclass(frozen=True)
class SearchStats:
    expanded: int = 0
    pruned: int = 0


@dataclass(frozen=True)
class LinearizationResult:
    linearizable: bool
    witness: SequentialHistory | None = None
    evidence: NotLinearizableEvidence | None = None
    stats: SearchStats = field(default_factory=SearchStats)


def find_linearization(run: Run, bound: int = DEFAULT_SEARCH_BOUND) -> LinearizationResult:
    return linearize_operations(extract_operations(run), bound=bound)


def linearize_operations(
    ops: Iterable[OperationInstance], bound: int = DEFAULT_SEARCH_BOUND
) -> LinearizationResult:
    """Exhaustive search for a linearization of the given operations.

    Depth-first over placement orders; a state is the set of placed
    operations plus the value most recently written, and failed states are
    memoized.  Pending writes may be placed (their value takes effect) or
    left out; pending reads are irrelevant to existence since any placement
    can return the current value.
    """
    ops = list(ops)
    if len(ops) > bound:
        raise HistoryTooLarge(
            f"{len(ops)} operations exceed the exhaustive-search bound {bound}"
        )
    writes = [op for op in ops if op.kind == "W"]
    seen_values: dict[Any, str] = {}
    for w in writes:
        if w.value in seen_values:
            raise ProtocolViolation(
                f"value {w.value!r} written twice ({seen_values[w.value]}, {w.id}); "
                "written values must be unique run-wide"
            )
        seen_values[w.value] = w.id

    completed = [op for op in ops if op.completed]
    order = sorted(range(len(ops)), key=lambda k: (ops[k].start.time, ops[k].id))
    ops = [ops[k] for k in order]
    index = {op.id: k for k, op in enumerate(ops)}
    pred_mask = [0] * len(ops)
    for a in ops:
        for b in ops:
            if a.precedes(b):
                pred_mask[index[b.id]] |= 1 << index[a.id]
    completed_mask = sum(1 << k for k, op in enumerate(ops) if op.completed)

    failed: set[tuple[int, Any]] = set()
    expanded = 0
    pruned = 0
    best_prefix: list[str] = []

    def dfs(mask: int, last: Any, prefix: list[tuple[OperationInstance, Any]]) -> bool:
        nonlocal expanded, pruned, best_prefix
        if mask & completed_mask == completed_mask:
            return True
        key = (mask, last)
        if key in failed:
            pruned += 1
            return False
        if len(prefix) > len(best_prefix):
            best_prefix = [op.id for op, _ in prefix]
        expanded += 1
        for k, op in enumerate(ops):
            if mask & (1 << k) or pred_mask[k] & ~mask:
                continue
            if op.kind == "W":
                prefix.append((op, None))
                if dfs(mask | (1 << k), op.value, prefix):
                    return True
                prefix.pop()
            else:
                if op.completed and op.value != last:
                    continue
                prefix.append((op, last))
                if dfs(mask | (1 << k), last, prefix):
                    return True
                prefix.pop()
        failed.add(key)
        return False

    placement: list[tuple[OperationInstance, Any]] = []
    ok = dfs(0, None, placement)
    stats = SearchStats(expanded=expanded, pruned=pruned)
    if ok:
        history = SequentialHistory.of(placement)
        assert is_atomic_history(history)
        _assert_reads_follow_writes(history)
        return LinearizationResult(True, witness=history, stats=stats)
    blocked = tuple(
        op.id for op in ops if op.completed and op.id not in set(best_prefix)
    )
    evidence = NotLinearizableEvidence(
        longest_prefix=tuple(best_prefix),
        blocked=blocked,
        aba_triples=_aba_triples(completed),
    )
    return LinearizationResult(False, evidence=evidence, stats=stats)


def _assert_reads_follow_writes(history: SequentialHistory) -> None:
    """Every witness must place each read of v directly in v's write era:
    the write of v appears earlier and no other write intervenes."""
    last_written = None
    for e in history.entries:
        if isinstance(e, Invocation) and e.kind == "W":
            last_written = e.value
        if isinstance(e, Response) and e.kind == "R" and e.value is not None:
            assert e.value == last_written


# ---------------------------------------------------------------------------
# the a-b-a condition


def check_no_aba(run: Run) -> tuple[tuple[str, str, str], ...]:
    """Triples X<Y<Z of completed operations whose values read a-b-a with
    a != b; any run admitting a linearization has none."""
    return _aba_triples([op for op in extract_operations(run) if op.completed])


def _aba_triples(completed: list[OperationInstance]) -> tuple[tuple[str, str, str], ...]:
    out = []
    for x, y, z in itertools.permutations(completed, 3):
        if x.precedes(y) and y.precedes(z) and x.value != y.value and x.value == z.value:
            out.append((x.id, y.id, z.id))
    return tuple(sorted(out))


# ---------------------------------------------------------------------------
# brute-force reference (kept simple; used to cross-check the search)


def brute_force_linearizable(ops: Iterable[OperationInstance]) -> bool:
    """Enumerate pending subsets and full permutations; no pruning beyond
    the obvious.  Exponential -- only for small histories."""
    ops = list(ops)
    completed = [op for op in ops if op.completed]
    pending = [op for op in ops if not op.completed]
    for r in range(len(pending) + 1):
        for extra in itertools.combinations(pending, r):
            chosen = completed + list(extra)
            for perm in itertools.permutations(chosen):
                if _valid_sequence(perm):
                    return True
    return False


def _valid_sequence(perm) -> bool:
    for i, a in enumerate(perm):
        for b in perm[i + 1 :]:
            if b.precedes(a):
                return False
    last = None
    for op in perm:
        if op.kind == "W":
            last = op.value
        elif op.completed and op.value != last:
            return False
    return True
