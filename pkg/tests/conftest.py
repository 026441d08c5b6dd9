"""Shared builders and independent oracles for the test suite."""

from __future__ import annotations

from collections import deque

import pytest

from chaincheck.model import (
    ActionEvent,
    BOTTOM,
    Deliver,
    InputEvent,
    Invoke,
    JointAction,
    MessageRecord,
    MOVE,
    NOOP,
    Return,
    Run,
    SKIP,
    SystemConfig,
    deliveries,
    initial_state,
)
from chaincheck.model import _Engine
from chaincheck.protocols import ProtocolSpec, register_protocol


def script_protocol(name: str, config: SystemConfig, scripts: dict[int, list]) -> ProtocolSpec:
    """A protocol whose processes perform a fixed action script, then idle."""

    class _Cursor:
        def __init__(self, cfg, pid):
            self.queue = deque(scripts.get(pid, ()))

        def permitted(self):
            return (self.queue[0],) if self.queue else (NOOP,)

        def consume(self, ev):
            if isinstance(ev, ActionEvent) and self.queue and ev.action == self.queue[0]:
                self.queue.popleft()

    return ProtocolSpec(name, config, lambda cfg, pid: _Cursor(cfg, pid))


class _ClairvoyantCursor:
    """Reads always return the constant "c" without any communication."""

    def __init__(self, cfg, pid):
        self.ret = None

    def permitted(self):
        return (self.ret,) if self.ret is not None else (NOOP,)

    def consume(self, ev):
        if isinstance(ev, ActionEvent) and ev.action == self.ret:
            self.ret = None
        elif isinstance(ev, InputEvent):
            op = tuple(ev.input)
            self.ret = Return("W", ()) if op[0] == "W" else Return("R", ("c",))


register_protocol(
    "clairvoyant",
    lambda config: ProtocolSpec("clairvoyant", config, lambda cfg, pid: _ClairvoyantCursor(cfg, pid)),
)


def mk_round(n, moves=None, invokes=None, delivers=None) -> JointAction:
    """Build one joint action; delivers map pid -> (sender, payload, send_round)."""
    env = [SKIP] * n
    actions = [BOTTOM] * n
    for pid, action in (moves or {}).items():
        env[pid] = MOVE
        actions[pid] = action
    for pid, inp in (invokes or {}).items():
        env[pid] = Invoke(inp)
    for pid, (sender, payload, send_round) in (delivers or {}).items():
        env[pid] = Deliver(MessageRecord(payload, send_round), sender)
    return JointAction(env=tuple(env), actions=tuple(actions))


def mk_run(config: SystemConfig, rounds, crashes=None, quiescent=False) -> Run:
    """Assemble a run, resolving delivery outcomes by replaying the rounds."""
    start = initial_state(config, crashes=crashes)
    eng = _Engine(config, start)
    resolved = tuple(eng.step(ja) for ja in rounds)
    return Run(config=config, initial=start, rounds=resolved, horizon=len(resolved), quiescent=quiescent)


def one_message_run():
    """Two processes; p0 sends in round 1, delivered to p1 in round 3."""
    config = SystemConfig.complete(2, 0, "script")
    from chaincheck.model import Send

    proto = script_protocol("script", config, {0: [Send(b"m", 1)]})
    rounds = [
        mk_round(2, moves={0: Send(b"m", 1)}),
        mk_round(2),
        mk_round(2, delivers={1: (0, b"m", 1)}),
    ]
    return mk_run(config, rounds), proto


# ---------------------------------------------------------------------------
# independent oracles


def naive_chain_pairs(run: Run):
    """Chain relation computed as the literal fixpoint of the three rules:
    same-process pairs, send-to-delivery pairs, then transitive closure
    iterated to a fixed point.  Nodes are encoded p*(horizon+1)+t and the
    successor sets are bitmasks."""
    n, h = run.config.n, run.horizon
    width = h + 1

    def nid(p, t):
        return p * width + t

    succ = [0] * (n * width)
    for p in range(n):
        for t in range(width):
            for t2 in range(t + 1, width):
                succ[nid(p, t)] |= 1 << nid(p, t2)  # rule: same process, later time
    for d in deliveries(run):
        src = nid(d.sender, d.send_round - 1)
        for t2 in range(d.deliver_round, width):
            succ[src] |= 1 << nid(d.receiver, t2)  # rule: send precedes delivery

    changed = True
    while changed:  # rule: transitivity, to fixpoint
        changed = False
        for a in range(n * width):
            acc = succ[a]
            rest = acc
            while rest:
                b = (rest & -rest).bit_length() - 1
                rest &= rest - 1
                acc |= succ[b]
            if acc != succ[a]:
                succ[a] = acc
                changed = True

    pairs = set()
    for p in range(n):
        for t in range(width):
            mask = succ[nid(p, t)]
            for q in range(n):
                for t2 in range(width):
                    if mask >> nid(q, t2) & 1:
                        pairs.add(((p, t), (q, t2)))
    return pairs


@pytest.fixture
def abd_config():
    return SystemConfig.complete(5, 2, "abd")
