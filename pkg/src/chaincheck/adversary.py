"""Seeded adversaries: scheduling, delivery, invocations, crashes.

All environment nondeterminism is resolved by a seeded generator with a
fixed draw order, so a (config, protocol, adversary, horizon, seed) tuple
always produces the identical run, byte for byte, on any platform.

Generator: SplitMix64 (Steele, Lea & Flood's mix of the Weyl sequence).
``random.Random`` is avoided because its distribution helpers have shifted
across interpreter versions; this generator is ~10 lines and pinned here.

Draw order inside a round: one independent stream per concern (crashes,
invocations, schedule, delivery, values), and within a stream processes are
drawn in id order 0..n-1, then candidate channels in sorted edge order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any

from .errors import AdversaryExhausted
from .model import (
    BOTTOM,
    Deliver,
    EnvComponent,
    Invoke,
    JointAction,
    MOVE,
    NOOP,
    ProcessAction,
    Return,
    Run,
    SKIP,
    SystemConfig,
    initial_state,
)
from .protocols import ProtocolSpec

__all__ = ["AdversarySpec", "Invocation", "SplitMix64", "simulate", "extend_run"]


class SplitMix64:
    """Deterministic 64-bit generator; the only randomness source used here."""

    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = seed & self.MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & self.MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self.MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self.MASK
        return z ^ (z >> 31)

    def random(self) -> float:
        return (self.next_u64() >> 11) / float(1 << 53)

    def randint(self, a: int, b: int) -> int:
        """Uniform in [a, b]; spans here are tiny, so modulo bias is immaterial."""
        return a + self.next_u64() % (b - a + 1)

    def choice(self, seq):
        return seq[self.randint(0, len(seq) - 1)]

    def sample(self, seq, k: int) -> list:
        pool = list(seq)
        out = []
        for _ in range(k):
            out.append(pool.pop(self.randint(0, len(pool) - 1)))
        return out


@dataclass(frozen=True)
class Invocation:
    """A planned operation input.  ``round_no`` of None means the invocation
    is staged: it is issued at the next quiet point, in list order, so each
    staged operation runs in isolation."""

    process: int
    kind: str  # "R" | "W"
    value: Any = None
    round_no: int | None = None


@dataclass(frozen=True)
class AdversarySpec:
    """Policy knobs resolving all environment choices.

    schedule:  "eager"  -- every process delivers if possible, else moves
                           whenever its protocol has real work;
               "random" -- per-process coin flips for deliver/move/skip;
               "round_robin" -- one mover per round, others deliver promptly.
    delivery:  "prompt" -- deliver whenever a message is pending;
               "random" -- deliver with probability deliver_prob.
    Crashes come from an explicit plan or are drawn (count <= max_crashes).
    Invocations come from an explicit plan or are drawn at invoke_prob per
    idle process per round while round <= invoke_until (a fraction of the
    horizon), capped at max_invocations.
    """

    schedule: str = "eager"
    move_prob: float = 0.75
    delivery: str = "prompt"
    deliver_prob: float = 0.6
    crash_plan: tuple[tuple[int, int], ...] | None = None
    max_crashes: int = 0
    invocations: tuple[Invocation, ...] | None = None
    invoke_prob: float = 0.15
    max_invocations: int = 0
    invoke_window: float = 0.5  # fraction of horizon open to random invocations
    write_fraction: float = 0.5
    seek_quiescence: bool = True
    deliver_to_crashed: bool = False
    deliver_from_crashed: bool = True
    edge_delays: tuple[tuple[int, int, int], ...] = ()  # (src, dst, min round)

    def to_doc(self) -> dict:
        doc = {
            "schedule": self.schedule,
            "move_prob": self.move_prob,
            "delivery": self.delivery,
            "deliver_prob": self.deliver_prob,
            "crash_plan": list(map(list, self.crash_plan)) if self.crash_plan is not None else None,
            "max_crashes": self.max_crashes,
            "invocations": [
                [inv.process, inv.kind, inv.value, inv.round_no] for inv in self.invocations
            ]
            if self.invocations is not None
            else None,
            "invoke_prob": self.invoke_prob,
            "max_invocations": self.max_invocations,
            "invoke_window": self.invoke_window,
            "write_fraction": self.write_fraction,
            "seek_quiescence": self.seek_quiescence,
            "deliver_to_crashed": self.deliver_to_crashed,
            "deliver_from_crashed": self.deliver_from_crashed,
            "edge_delays": list(map(list, self.edge_delays)),
        }
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "AdversarySpec":
        kw = dict(doc)
        if kw.get("crash_plan") is not None:
            kw["crash_plan"] = tuple((int(p), int(r)) for p, r in kw["crash_plan"])
        if kw.get("invocations") is not None:
            kw["invocations"] = tuple(
                Invocation(int(p), k, v, r if r is None else int(r))
                for p, k, v, r in kw["invocations"]
            )
        kw["edge_delays"] = tuple((int(a), int(b), int(r)) for a, b, r in kw.get("edge_delays", ()))
        return cls(**kw)


def _resolve_crashes(spec: AdversarySpec, config: SystemConfig, horizon: int, rng: SplitMix64) -> dict[int, int]:
    if spec.crash_plan is not None:
        plan = dict(spec.crash_plan)
        if len(plan) > config.f:
            raise AdversaryExhausted(
                f"crash plan of size {len(plan)} exceeds tolerance f={config.f}"
            )
        return plan
    if spec.max_crashes > config.f:
        raise AdversaryExhausted(
            f"adversary demands up to {spec.max_crashes} crashes but f={config.f}"
        )
    count = rng.randint(0, spec.max_crashes) if spec.max_crashes else 0
    victims = sorted(rng.sample(range(config.n), count))
    return {p: rng.randint(1, max(1, horizon - 1)) for p in victims}


class _RoundBuilder:
    """Per-seed simulation driver; owns the streams and the pending-op book."""

    def __init__(self, config: SystemConfig, protocol: ProtocolSpec, spec: AdversarySpec, horizon: int, seed: int):
        self.config = config
        self.spec = spec
        self.horizon = horizon
        base = SplitMix64(seed)
        # independent streams, derived in a fixed order
        self.crash_rng = SplitMix64(base.next_u64())
        self.invoke_rng = SplitMix64(base.next_u64())
        self.sched_rng = SplitMix64(base.next_u64())
        self.deliver_rng = SplitMix64(base.next_u64())
        self.value_rng = SplitMix64(base.next_u64())
        self.crashes = _resolve_crashes(spec, config, horizon, self.crash_rng)
        self.pending: list[bool] = [False] * config.n
        self.value_seq: list[int] = [0] * config.n
        self.invoked = 0
        self.planned: dict[int, list[Invocation]] = {}
        self.staged: list[Invocation] = []
        if spec.invocations is not None:
            for inv in spec.invocations:
                if inv.round_no is None:
                    self.staged.append(inv)
                else:
                    self.planned.setdefault(inv.round_no, []).append(inv)
        self.in_edges = {
            i: tuple(e for e in config.sorted_edges() if e[1] == i) for i in range(config.n)
        }
        self.min_round = {(a, b): r for a, b, r in spec.edge_delays}

    # -- helpers -----------------------------------------------------------

    def alive(self, i: int, m: int) -> bool:
        return self.crashes.get(i, self.horizon + 1) >= m

    def deliverable_edges(self, cursors_engine, i: int, m: int) -> list:
        out = []
        for e in self.in_edges[i]:
            q = cursors_engine.channels[e]
            if not q:
                continue
            if not self.spec.deliver_from_crashed and not self.alive(e[0], m):
                continue
            if self.min_round.get(e, 0) > m:
                continue
            out.append(e)
        return out

    def fresh_value(self, i: int) -> str:
        self.value_seq[i] += 1
        return f"v{i}.{self.value_seq[i]}"

    def quiet(self, engine, cursors, m: int) -> bool:
        """Nothing deliverable under policy, no live pending op, idle cursors."""
        for i in range(self.config.n):
            if not self.alive(i, m):
                continue
            if self.pending[i]:
                return False
            if cursors[i].permitted()[0] != NOOP:
                return False
        for e, q in engine.channels.items():
            if not q:
                continue
            dst_alive = self.alive(e[1], m)
            src_alive = self.alive(e[0], m)
            if dst_alive and (src_alive or self.spec.deliver_from_crashed):
                return False
        return True


def simulate(
    config: SystemConfig,
    protocol: ProtocolSpec,
    adversary: AdversarySpec,
    horizon: int,
    seed: int,
    prefix: Run | None = None,
) -> Run:
    """Produce a legal run of the protocol under the adversary policy.

    With ``prefix`` given, its rounds are replayed first and the adversary
    takes over from round ``prefix.horizon + 1`` up to ``horizon``; the
    crash plan is then the adversary's own (prefix crashes are superseded,
    which may revive processes the prefix merely stopped scheduling).
    """
    from .model import _Engine  # internal fold core

    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    b = _RoundBuilder(config, protocol, adversary, horizon, seed)
    start = initial_state(config, crashes=b.crashes)
    engine = _Engine(config, start)
    cursors = [protocol.cursor(config, i) for i in range(config.n)]
    rounds: list[JointAction] = []

    if prefix is not None:
        if prefix.config != config:
            raise AdversaryExhausted("prefix config differs from simulation config")
        if prefix.horizon > horizon:
            raise AdversaryExhausted("prefix is longer than the requested horizon")
        for ja in prefix.rounds:
            resolved = engine.step(ja)
            _feed(cursors, resolved)
            rounds.append(resolved)
            _book_keep(b, resolved)

    quiescent_from: int | None = None
    for m in range(len(rounds) + 1, horizon + 1):
        random_budget_left = (
            adversary.invocations is None
            and adversary.max_invocations
            and b.invoked < adversary.max_invocations
            and m <= int(horizon * adversary.invoke_window)
        )
        if (
            quiescent_from is not None
            and not b.planned
            and not b.staged
            and not random_budget_left
        ):
            ja = JointAction(env=(SKIP,) * config.n, actions=(BOTTOM,) * config.n)
            resolved = engine.step(ja)
            rounds.append(resolved)
            continue
        quiescent_from = None

        env: list[EnvComponent] = []
        actions = []
        due = b.planned.pop(m, [])
        stage_now: Invocation | None = None
        if b.staged and not due and b.quiet(engine, cursors, m):
            stage_now = b.staged.pop(0)
        for i in range(config.n):
            comp, act = _component_for(b, engine, cursors, i, m, due, stage_now)
            env.append(comp)
            actions.append(act)
        ja = JointAction(env=tuple(env), actions=tuple(actions))
        resolved = engine.step(ja)
        _feed(cursors, resolved)
        rounds.append(resolved)
        _track_returns(b, resolved)
        if (
            adversary.seek_quiescence
            and b.quiet(engine, cursors, m + 1)
        ):
            quiescent_from = m

    quiescent = (
        quiescent_from is not None and not b.planned and not b.staged
    )
    if b.planned or b.staged:
        raise AdversaryExhausted("invocation plan extends beyond the horizon")
    return Run(
        config=config,
        initial=start,
        rounds=tuple(rounds),
        horizon=horizon,
        quiescent=quiescent,
    )


def _feed(cursors, resolved: JointAction) -> None:
    from .model import _round_event

    for i in range(len(cursors)):
        ev = _round_event(resolved, i)
        if ev is not None:
            cursors[i].consume(ev)


_VALUE_TAG = re.compile(r"^v(\d+)\.(\d+)$")


def _book_keep(b: _RoundBuilder, resolved: JointAction) -> None:
    """Reconstruct pending/budget/value bookkeeping from a replayed round.

    Used only for prefix rounds; rounds built by the main loop account for
    invocations at issue time (see _issue) and track returns separately.
    """
    for i, comp in enumerate(resolved.env):
        if isinstance(comp, Invoke):
            b.pending[i] = True
            b.invoked += 1
            inp = tuple(comp.input)
            if inp[0] == "W" and isinstance(inp[1], str):
                m = _VALUE_TAG.match(inp[1])
                if m:
                    pid, seq = int(m.group(1)), int(m.group(2))
                    if 0 <= pid < len(b.value_seq):
                        b.value_seq[pid] = max(b.value_seq[pid], seq)
    _track_returns(b, resolved)


def _track_returns(b: _RoundBuilder, resolved: JointAction) -> None:
    for i, action in enumerate(resolved.actions):
        if isinstance(action, Return):
            b.pending[i] = False


def _issue(b: _RoundBuilder, i: int, inp) -> tuple[Invoke, ProcessAction]:
    b.pending[i] = True
    b.invoked += 1
    return Invoke(inp), BOTTOM


def _component_for(b: _RoundBuilder, engine, cursors, i: int, m: int, due, staged):
    spec = b.spec
    if not b.alive(i, m):
        if spec.deliver_to_crashed:
            cands = b.deliverable_edges(engine, i, m)
            if cands:
                e = cands[0]
                return Deliver(engine.channels[e][0], e[0]), BOTTOM
        return SKIP, BOTTOM

    for inv in due:
        if inv.process == i:
            if b.pending[i]:
                raise AdversaryExhausted(
                    f"planned invocation at process {i} round {m} overlaps a pending operation"
                )
            return _issue(b, i, _as_input(b, inv))
    if staged is not None and staged.process == i:
        return _issue(b, i, _as_input(b, staged))

    if (
        spec.invocations is None
        and spec.max_invocations
        and b.invoked < spec.max_invocations
        and not b.pending[i]
        and m <= int(b.horizon * spec.invoke_window)
        and b.invoke_rng.random() < spec.invoke_prob
    ):
        if b.invoke_rng.random() < spec.write_fraction:
            return _issue(b, i, ("W", b.fresh_value(i)))
        return _issue(b, i, ("R",))

    cands = b.deliverable_edges(engine, i, m)
    action = cursors[i].permitted()[0]

    if spec.schedule == "eager":
        if cands:
            e = min(cands, key=lambda e: (engine.channels[e][0].send_round, e))
            return Deliver(engine.channels[e][0], e[0]), BOTTOM
        if action != NOOP:
            return MOVE, action
        return SKIP, BOTTOM

    if spec.schedule == "round_robin":
        if (m - 1) % b.config.n == i and action != NOOP:
            return MOVE, action
        if cands:
            e = cands[0]
            return Deliver(engine.channels[e][0], e[0]), BOTTOM
        return SKIP, BOTTOM

    # random schedule
    if cands and (spec.delivery == "prompt" or b.deliver_rng.random() < spec.deliver_prob):
        e = cands[0] if len(cands) == 1 else b.deliver_rng.choice(cands)
        return Deliver(engine.channels[e][0], e[0]), BOTTOM
    if b.sched_rng.random() < spec.move_prob:
        return MOVE, action
    return SKIP, BOTTOM


def _as_input(b: _RoundBuilder, inv: Invocation):
    if inv.kind == "W":
        value = inv.value if inv.value is not None else b.fresh_value(inv.process)
        return ("W", value)
    return ("R",)


def extend_run(
    run: Run,
    protocol: ProtocolSpec,
    adversary: AdversarySpec,
    extra_rounds: int,
    seed: int,
    cut: int | None = None,
) -> Run:
    """Continue a run (optionally truncated at round ``cut``) under a new
    adversary for ``extra_rounds`` more rounds."""
    from .model import truncate

    base = run if cut is None else truncate(run, cut)
    return simulate(
        run.config,
        protocol,
        adversary,
        base.horizon + extra_rounds,
        seed,
        prefix=base,
    )
