"""Message-chain (happens-before) analysis over runs.

A chain exists from node <p,t> to <q,t'> when q == p and t < t', or when p
sends a message in round t+1 that is delivered to q in some round <= t',
or transitively through an intermediate node.  The index below stores, for
every node, the earliest time each process is reachable from it, so chain
queries are O(1) after an O(n^2 * horizon) backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigMismatch, NotEquivalent, PendingOperation
from .model import Node, Run, deliveries, event_timelines

__all__ = [
    "CausalIndex",
    "PastFrontier",
    "build_index",
    "happens_before",
    "past_frontier",
    "op_chain",
    "locally_equivalent",
    "corresponding_nodes",
]

UNREACHABLE = 1 << 30


@dataclass(frozen=True)
class CausalIndex:
    """Earliest-arrival vectors: reach[p][t][q] is the least t' with a chain
    from <p,t> to <q,t'> (UNREACHABLE if none within the horizon)."""

    horizon: int
    n: int
    reach: tuple  # reach[p][t] is a tuple of n earliest times


@dataclass(frozen=True)
class PastFrontier:
    """Per-process cut times for a pivot node: cut[j] is the least l with no
    chain from <j,l> to the pivot, so <j,l> is in the past iff l < cut[j]."""

    pivot: Node
    cut: tuple[int, ...]

    def contains(self, node: Node) -> bool:
        return node.time < self.cut[node.process]


def build_index(run: Run) -> CausalIndex:
    """Index chain reachability for all nodes of the run.

    Works backward in time: the vector of <p,t> merges the vector of
    <p,t+1> (same-process step) with, for every message p sends in round
    t+1 that is delivered in round d, the arrival {receiver: d} and the
    receiver's vector at time d.
    """
    n = run.config.n
    h = run.horizon
    sends: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for d in deliveries(run):
        sends.setdefault((d.sender, d.send_round), []).append((d.receiver, d.deliver_round))

    reach: list[list[tuple[int, ...]]] = [[()] * (h + 1) for _ in range(n)]
    for p in range(n):
        vec = [UNREACHABLE] * n
        vec[p] = h + 1
        reach[p][h] = tuple(vec)
    for t in range(h - 1, -1, -1):
        for p in range(n):
            nxt = reach[p][t + 1]
            vec = list(nxt)
            vec[p] = t + 1
            for q, d in sends.get((p, t + 1), ()):
                if d < vec[q]:
                    vec[q] = d
                hop = reach[q][d]
                for x in range(n):
                    if hop[x] < vec[x]:
                        vec[x] = hop[x]
            reach[p][t] = tuple(vec)
    return CausalIndex(horizon=h, n=n, reach=tuple(tuple(r) for r in reach))


def happens_before(index: CausalIndex, a: Node, b: Node) -> bool:
    """True iff there is a message chain from node ``a`` to node ``b``."""
    if not (0 <= a.time <= index.horizon and 0 <= b.time <= index.horizon):
        raise ValueError("nodes must lie within the indexed horizon")
    if a.process == b.process:
        return a.time < b.time
    result = b.time >= index.reach[a.process][a.time][b.process]
    assert not result or a.time < b.time  # chains only point forward in time
    return result


def past_frontier(index: CausalIndex, pivot: Node) -> PastFrontier:
    cut = []
    for j in range(index.n):
        t_j = index.horizon + 1
        for l in range(index.horizon + 1):
            if not happens_before(index, Node(j, l), pivot):
                t_j = l
                break
        cut.append(t_j)
    return PastFrontier(pivot=pivot, cut=tuple(cut))


def op_chain(index: CausalIndex, x, y) -> bool:
    """Chain between operations: from x's invocation node to y's response node.

    This does not order the operations in real time; it only rules out that
    y ended before x started.
    """
    if y.end is None:
        raise PendingOperation(f"operation {y.id} has not completed")
    return happens_before(index, x.start, y.end)


def locally_equivalent(run1: Run, run2: Run) -> bool:
    """True iff every process traverses the same local states in both runs.

    Local states are histories, so this holds exactly when each process has
    the same initial value and performs/observes the same event sequence
    (round stamps aside) in both runs.
    """
    if run1.config != run2.config:
        raise ConfigMismatch("runs use different system configurations")
    for h1, h2 in zip(run1.initial.locals, run2.initial.locals):
        if h1.initial != h2.initial:
            return False
    for t1, t2 in zip(event_timelines(run1), event_timelines(run2)):
        if len(t1) != len(t2):
            return False
        for (_, e1), (_, e2) in zip(t1, t2):
            if e1 != e2:
                return False
    return True


def corresponding_nodes(run1: Run, run2: Run, node: Node) -> frozenset[Node]:
    """Nodes of run2 at which the process has the same local state as at
    ``node`` in run1.  Several times can share one state (idle stretches),
    so the result is a set."""
    if not locally_equivalent(run1, run2):
        raise NotEquivalent("node correspondence requires locally equivalent runs")
    p = node.process
    t1 = event_timelines(run1)[p]
    t2 = event_timelines(run2)[p]
    k = sum(1 for r, _ in t1 if r <= node.time)
    lo = t2[k - 1][0] if k > 0 else 0
    hi = t2[k][0] - 1 if k < len(t2) else run2.horizon
    return frozenset(Node(p, t) for t in range(lo, hi + 1))
