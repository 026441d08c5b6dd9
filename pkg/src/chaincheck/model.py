"""Round-based asynchronous message-passing model.

The system is a set of ``n`` processes connected by directed FIFO channels.
Time is discrete: states are indexed 0..horizon and round ``m`` (1-indexed)
drives the transition from state ``m-1`` to state ``m``.  Each round the
environment assigns every process exactly one component: ``Move`` (the
process performs one protocol action), ``Skip``, ``Invoke`` (an operation
input arrives), or ``Deliver`` (one in-transit message is handed over).

A process's local state is its local history: an initial value plus the
ordered sequence of events it has observed (actions it performed, inputs it
received, messages it received).  Processes never observe round numbers;
the round stamps kept alongside events are environment bookkeeping, so two
local histories are the *same local state* whenever their initial values
and event sequences agree, regardless of stamps.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Iterator, Mapping

from .errors import MalformedJointAction

Edge = tuple[int, int]

__all__ = [
    "ActionEvent",
    "Bottom",
    "BOTTOM",
    "Channel",
    "Deliver",
    "Edge",
    "Event",
    "GlobalState",
    "InputEvent",
    "Invoke",
    "JointAction",
    "LocalAction",
    "LocalHistory",
    "MessageRecord",
    "Move",
    "MOVE",
    "Node",
    "NoOp",
    "NOOP",
    "ProcessAction",
    "ReceiveEvent",
    "Return",
    "Run",
    "Send",
    "Skip",
    "SKIP",
    "SystemConfig",
    "ValidationReport",
    "Violation",
    "apply_transition",
    "complete_network",
    "deliveries",
    "event_timelines",
    "initial_state",
    "iter_states",
    "lost_messages",
    "replay",
    "validate_run",
]


# ---------------------------------------------------------------------------
# configuration and node identity


def complete_network(n: int) -> frozenset[Edge]:
    """All ordered pairs of distinct process ids."""
    return frozenset((i, j) for i in range(n) for j in range(n) if i != j)


@dataclass(frozen=True)
class SystemConfig:
    """Process count, crash budget, channel graph, and bound protocol name."""

    n: int
    f: int
    edges: frozenset[Edge]
    protocol_id: str

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one process")
        if not 0 <= self.f < self.n:
            raise ValueError("crash tolerance f must satisfy 0 <= f < n")
        for i, j in self.edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i},{j}) names an unknown process")
            if i == j:
                raise ValueError(f"self-loop ({i},{j}) is not a channel")
        object.__setattr__(self, "edges", frozenset(self.edges))

    @classmethod
    def complete(cls, n: int, f: int, protocol_id: str) -> "SystemConfig":
        return cls(n=n, f=f, edges=complete_network(n), protocol_id=protocol_id)

    def out_neighbors(self, i: int) -> tuple[int, ...]:
        return tuple(sorted(j for (a, j) in self.edges if a == i))

    def sorted_edges(self) -> tuple[Edge, ...]:
        return tuple(sorted(self.edges))


@dataclass(frozen=True)
class Node:
    """A process-time pair: the point on a process timeline at a given time."""

    process: int
    time: int

    def __str__(self):
        return f"<{self.process},{self.time}>"


# ---------------------------------------------------------------------------
# environment components and process actions


@dataclass(frozen=True)
class MessageRecord:
    """An in-transit message: opaque payload plus the round it was sent in."""

    payload: bytes
    send_round: int

    def __post_init__(self):
        if self.send_round < 1:
            raise ValueError("messages are sent in rounds, which start at 1")


@dataclass(frozen=True)
class Channel:
    src: int
    dst: int
    in_transit: tuple[MessageRecord, ...] = ()


@dataclass(frozen=True)
class Move:
    pass


@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Invoke:
    """An external operation input, e.g. ``("W", "v0.0")`` or ``("R",)``."""

    input: Any


@dataclass(frozen=True)
class Deliver:
    record: MessageRecord
    sender: int


EnvComponent = Move | Skip | Invoke | Deliver

MOVE = Move()
SKIP = Skip()


@dataclass(frozen=True)
class LocalAction:
    tag: str
    args: tuple = ()


@dataclass(frozen=True)
class Send:
    payload: bytes
    to: int


@dataclass(frozen=True)
class Return:
    kind: str
    args: tuple = ()


@dataclass(frozen=True)
class NoOp:
    pass


@dataclass(frozen=True)
class Bottom:
    """Placeholder recorded when a process performed nothing this round."""


ProcessAction = LocalAction | Send | Return | NoOp | Bottom

NOOP = NoOp()
BOTTOM = Bottom()

PROTOCOL_ACTIONS = (LocalAction, Send, Return, NoOp)


def reception(sender: int, payload: bytes) -> LocalAction:
    """The action entry recorded for a successful delivery."""
    return LocalAction("recv", (sender, payload))


@dataclass(frozen=True)
class JointAction:
    """One round: the environment vector plus the per-process actions.

    ``actions[i]`` is ``BOTTOM`` unless ``env[i]`` is a ``Move`` (then it is
    the protocol action performed) or a successful ``Deliver`` (then it is
    the reception entry, not a protocol step).
    """

    env: tuple[EnvComponent, ...]
    actions: tuple[ProcessAction, ...]


# ---------------------------------------------------------------------------
# local histories and global states


@dataclass(frozen=True)
class ActionEvent:
    action: ProcessAction


@dataclass(frozen=True)
class InputEvent:
    input: Any


@dataclass(frozen=True)
class ReceiveEvent:
    sender: int
    payload: bytes


Event = ActionEvent | InputEvent | ReceiveEvent


@dataclass(frozen=True)
class LocalHistory:
    """Initial value plus (round, event) entries in observation order.

    Round stamps are bookkeeping only; see :func:`LocalHistory.state_view`.
    """

    initial: Any = None
    events: tuple[tuple[int, Event], ...] = ()

    def state_view(self) -> tuple:
        """The process-visible state: initial value and events, no stamps."""
        return (self.initial, tuple(e for _, e in self.events))

    def at(self, time: int) -> "LocalHistory":
        """The prefix of this history visible at the given time."""
        return LocalHistory(
            self.initial, tuple((r, e) for r, e in self.events if r <= time)
        )


@dataclass(frozen=True)
class GlobalState:
    """Environment history, channel contents, local histories, crash plan.

    ``crashed`` is the environment's full crash assignment for the run
    (process id -> last round in which it may be moved); it is constant
    across transitions.
    """

    env_history: tuple[JointAction, ...]
    channels: Mapping[Edge, Channel]
    locals: tuple[LocalHistory, ...]
    crashed: Mapping[int, int] = field(default_factory=dict)


def initial_state(
    config: SystemConfig,
    initial_values: tuple | None = None,
    crashes: Mapping[int, int] | None = None,
) -> GlobalState:
    values = initial_values or tuple(None for _ in range(config.n))
    return GlobalState(
        env_history=(),
        channels={e: Channel(*e) for e in config.sorted_edges()},
        locals=tuple(LocalHistory(initial=v) for v in values),
        crashed=dict(crashes or {}),
    )


@dataclass(frozen=True)
class Run:
    """A finite execution prefix: initial state plus one joint action per round.

    ``quiescent`` records the simulator's claim that nothing deliverable or
    pending (at a non-crashed process) remained at the horizon.
    """

    config: SystemConfig
    initial: GlobalState
    rounds: tuple[JointAction, ...]
    horizon: int
    quiescent: bool = False

    def __post_init__(self):
        if self.horizon != len(self.rounds):
            raise ValueError("horizon must equal the number of rounds")

    @property
    def crashes(self) -> Mapping[int, int]:
        return self.initial.crashed


# ---------------------------------------------------------------------------
# transition engine

# The mutable fold below is the single source of truth for the transition
# function; apply_transition/replay are thin immutable wrappers over it.


class _Engine:
    """Mutable replay core.  One instance folds one run, round by round."""

    def __init__(self, config: SystemConfig, start: GlobalState):
        self.config = config
        self.round_no = len(start.env_history)
        self.env_history: list[JointAction] = list(start.env_history)
        self.channels: dict[Edge, deque[MessageRecord]] = {
            e: deque(start.channels[e].in_transit) if e in start.channels else deque()
            for e in config.sorted_edges()
        }
        self.locals: list[list[tuple[int, Event]]] = [
            list(h.events) for h in start.locals
        ]
        self.initial_values = tuple(h.initial for h in start.locals)
        self.crashed = dict(start.crashed)

    # -- stepping ----------------------------------------------------------

    def step(self, ja: JointAction) -> JointAction:
        """Apply one joint action; returns the resolved joint action.

        Deliveries are resolved against the pre-round channel state, so a
        message sent in round m is never deliverable before round m+1.
        Non-Move entries of ``ja.actions`` are ignored on input and replaced
        by the resolution (reception entry or BOTTOM).
        """
        n = self.config.n
        m = self.round_no + 1
        if len(ja.env) != n or len(ja.actions) != n:
            raise MalformedJointAction("env/actions length differs from n", m)

        resolved: list[ProcessAction] = [BOTTOM] * n
        events: list[tuple[int, Event] | None] = [None] * n

        # phase 1: deliveries consume pre-round channel heads
        for i, comp in enumerate(ja.env):
            if isinstance(comp, Deliver):
                edge = (comp.sender, i)
                if edge not in self.channels:
                    raise MalformedJointAction(
                        f"delivery to {i} names a non-channel {edge}", m
                    )
                chan = self.channels[edge]
                if chan and chan[0] == comp.record:
                    chan.popleft()
                    resolved[i] = reception(comp.sender, comp.record.payload)
                    events[i] = (m, ReceiveEvent(comp.sender, comp.record.payload))
                # otherwise the delivery misses: local state unchanged, BOTTOM

        # phase 2: moves and invocations
        for i, comp in enumerate(ja.env):
            if isinstance(comp, Move):
                action = ja.actions[i]
                if not isinstance(action, PROTOCOL_ACTIONS):
                    raise MalformedJointAction(
                        f"moved process {i} carries no protocol action", m
                    )
                if isinstance(action, Send):
                    edge = (i, action.to)
                    if edge not in self.channels:
                        raise MalformedJointAction(
                            f"send by {i} targets non-channel {edge}", m
                        )
                    self.channels[edge].append(MessageRecord(action.payload, m))
                resolved[i] = action
                events[i] = (m, ActionEvent(action))
            elif isinstance(comp, Invoke):
                events[i] = (m, InputEvent(comp.input))

        for i, ev in enumerate(events):
            if ev is not None:
                self.locals[i].append(ev)
        out = JointAction(env=tuple(ja.env), actions=tuple(resolved))
        self.env_history.append(out)
        self.round_no = m
        return out

    # -- views ---------------------------------------------------------------

    def snapshot(self) -> GlobalState:
        return GlobalState(
            env_history=tuple(self.env_history),
            channels={
                e: Channel(e[0], e[1], tuple(q)) for e, q in self.channels.items()
            },
            locals=tuple(
                LocalHistory(v, tuple(evs))
                for v, evs in zip(self.initial_values, self.locals)
            ),
            crashed=dict(self.crashed),
        )

    def in_transit(self) -> list[tuple[Edge, MessageRecord]]:
        return [(e, rec) for e, q in sorted(self.channels.items()) for rec in q]


# ---------------------------------------------------------------------------
# public operations


def apply_transition(state: GlobalState, ja: JointAction, config: SystemConfig | None = None) -> GlobalState:
    """Successor of ``state`` under one joint action.

    When ``config`` is omitted a complete network over the processes present
    in ``state`` is assumed for structural checks.
    """
    if config is None:
        n = len(state.locals)
        config = SystemConfig(n=n, f=0, edges=frozenset(state.channels), protocol_id="")
    eng = _Engine(config, state)
    eng.step(ja)
    return eng.snapshot()


def iter_states(run: Run) -> Iterator[GlobalState]:
    """Yield the horizon+1 global states of the run, in time order."""
    eng = _Engine(run.config, run.initial)
    yield eng.snapshot()
    for ja in run.rounds:
        eng.step(ja)
        yield eng.snapshot()


def replay(run: Run) -> list[GlobalState]:
    """Materialize all states of the run; deterministic in the run contents."""
    return list(iter_states(run))


def final_state(run: Run) -> GlobalState:
    eng = _Engine(run.config, run.initial)
    for ja in run.rounds:
        eng.step(ja)
    return eng.snapshot()


def event_timelines(run: Run) -> tuple[tuple[tuple[int, Event], ...], ...]:
    """Per-process (round, event) sequences produced by replaying the run."""
    return tuple(h.events for h in final_state(run).locals)


@dataclass(frozen=True)
class Delivery:
    """One successful message delivery observed while replaying a run."""

    sender: int
    receiver: int
    send_round: int
    deliver_round: int
    payload: bytes


def deliveries(run: Run) -> tuple[Delivery, ...]:
    """All successful deliveries, in round order.

    Reads the resolved actions stored in the run; on runs built by the
    simulator or transformer these are authoritative (validate_run flags
    any trace whose markers disagree with the channel discipline).
    """
    out = []
    for k, ja in enumerate(run.rounds):
        m = k + 1
        for i, comp in enumerate(ja.env):
            if isinstance(comp, Deliver) and not isinstance(ja.actions[i], Bottom):
                out.append(
                    Delivery(comp.sender, i, comp.record.send_round, m, comp.record.payload)
                )
    return tuple(out)


def lost_messages(run: Run) -> frozenset[tuple[Edge, MessageRecord]]:
    """Records still in transit at the horizon: sent but never delivered."""
    eng = _Engine(run.config, run.initial)
    for ja in run.rounds:
        eng.step(ja)
    return frozenset(eng.in_transit())


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    kind: str  # "action" | "delivery" | "crash" | "malformed"
    round_no: int
    process: int | None
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_run(run: Run, protocol) -> ValidationReport:
    """Check that the run is a legal run of the protocol.

    Flags (a) moved processes performing actions outside the permitted set,
    (b) deliveries that are not the FIFO head of a live channel, and
    (c) moves or invocations at a process after its crash round.  Structural
    defects are reported as "malformed" violations rather than raised.
    """
    cfg = run.config
    eng = _Engine(cfg, run.initial)
    cursors = [protocol.cursor(cfg, i) for i in range(cfg.n)]
    for i in range(cfg.n):
        for _, ev in run.initial.locals[i].events:
            cursors[i].consume(ev)
    bad: list[Violation] = []
    crashes = run.crashes

    for k, ja in enumerate(run.rounds):
        m = k + 1
        if len(ja.env) != cfg.n or len(ja.actions) != cfg.n:
            bad.append(Violation("malformed", m, None, "env/actions length differs from n"))
            break
        for i, comp in enumerate(ja.env):
            if i in crashes and m > crashes[i] and isinstance(comp, (Move, Invoke)):
                bad.append(
                    Violation("crash", m, i, f"process {i} active after crash round {crashes[i]}")
                )
            if isinstance(comp, Move):
                action = ja.actions[i]
                if not isinstance(action, PROTOCOL_ACTIONS):
                    bad.append(Violation("malformed", m, i, "move without a protocol action"))
                elif action not in cursors[i].permitted():
                    bad.append(
                        Violation("action", m, i, f"action {action!r} not permitted by protocol")
                    )
            elif isinstance(comp, Deliver):
                edge = (comp.sender, i)
                chan = eng.channels.get(edge)
                if chan is None:
                    bad.append(Violation("malformed", m, i, f"delivery names non-channel {edge}"))
                elif not chan or chan[0] != comp.record:
                    if chan and any(rec == comp.record for rec in chan):
                        detail = f"delivery on {edge} violates FIFO order"
                    else:
                        detail = f"delivered record on {edge} was never sent or already delivered"
                    bad.append(Violation("delivery", m, i, detail))
        try:
            resolved = eng.step(ja)
        except MalformedJointAction as exc:
            bad.append(Violation("malformed", m, None, str(exc)))
            break
        for i in range(cfg.n):
            ev = _round_event(resolved, i)
            if ev is not None:
                cursors[i].consume(ev)
    return ValidationReport(tuple(bad))


def _round_event(resolved: JointAction, i: int) -> Event | None:
    comp = resolved.env[i]
    if isinstance(comp, Move):
        return ActionEvent(resolved.actions[i])
    if isinstance(comp, Invoke):
        return InputEvent(comp.input)
    if isinstance(comp, Deliver) and not isinstance(resolved.actions[i], Bottom):
        return ReceiveEvent(comp.sender, comp.record.payload)
    return None


def truncate(run: Run, horizon: int) -> Run:
    """Prefix of the run with the given (smaller or equal) horizon."""
    if horizon > run.horizon:
        raise ValueError("cannot truncate to a larger horizon")
    return replace(
        run, rounds=run.rounds[:horizon], horizon=horizon, quiescent=False
    )
