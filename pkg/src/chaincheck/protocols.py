"""Register protocols: the quorum (two-phase) register and a broken fixture.

A protocol assigns every process a nonempty set of permitted actions as a
function of its local history.  Both implementations here are deterministic
(the permitted set is a singleton), which keeps replay and transformation
exact.  Protocol evaluation is exposed two ways:

* ``permitted(config, pid, history)`` -- the pure contract, recomputed from
  scratch, and
* ``cursor(config, pid)`` -- an incremental evaluator that consumes events
  one at a time; folding a history through a fresh cursor always yields the
  same answers as ``permitted``.

Register operation inputs are tuples: ``("W", value)`` or ``("R",)``.
Responses are ``Return("W", ())`` and ``Return("R", (value,))``.  The
register starts at the default value ``None`` with timestamp ``(0, 0)``.

Message payloads are canonical JSON, field by field:

quorum register ("abd")
    ``{"t": "qry",  "rid": k}``                       phase-1 request
    ``{"t": "qack", "rid": k, "ts": [c, p], "val": v}`` phase-1 reply
    ``{"t": "upd",  "rid": k, "ts": [c, p], "val": v}`` phase-2 request
    ``{"t": "uack", "rid": k}``                       phase-2 reply

broken register ("broken")
    ``{"t": "bc", "ts": [c, p], "val": v}``           best-effort broadcast

``rid`` is a per-process request counter, so ``(sender, rid)`` identifies a
phase; ``ts`` is a (counter, process) pair ordered lexicographically.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Protocol as TypingProtocol

from .errors import ConfigError
from .model import (
    ActionEvent,
    Event,
    InputEvent,
    LocalHistory,
    NOOP,
    ProcessAction,
    ReceiveEvent,
    Return,
    Send,
    SystemConfig,
)

__all__ = [
    "ProtocolCursor",
    "ProtocolSpec",
    "TimestampedValue",
    "abd_protocol",
    "broken_protocol",
    "register_protocol",
    "resolve_protocol",
]


@dataclass(frozen=True, order=True)
class TimestampedValue:
    """Register value tagged with a (counter, process) timestamp.

    Lexicographic dataclass order gives the newer-pair relation: counters
    first, process ids as the tie-break.  Distinct writes never share a
    (counter, process) pair, so the value field never decides an ordering.
    """

    counter: int
    process: int
    value: Any = None

    @property
    def ts(self) -> tuple[int, int]:
        return (self.counter, self.process)

    def wire(self) -> dict:
        return {"ts": [self.counter, self.process], "val": self.value}

    @classmethod
    def from_wire(cls, msg: dict) -> "TimestampedValue":
        return cls(int(msg["ts"][0]), int(msg["ts"][1]), msg["val"])


INITIAL_REGISTER = TimestampedValue(0, 0, None)


def encode(msg: dict) -> bytes:
    return json.dumps(msg, sort_keys=True, separators=(",", ":")).encode()


def decode(payload: bytes) -> dict:
    return json.loads(payload.decode())


class ProtocolCursor(TypingProtocol):
    def consume(self, event: Event) -> None: ...
    def permitted(self) -> tuple[ProcessAction, ...]: ...


class ProtocolSpec:
    """Nonempty permitted-action sets per process, as a function of history."""

    def __init__(self, name: str, config: SystemConfig, cursor_factory: Callable[[SystemConfig, int], ProtocolCursor]):
        self.name = name
        self.config = config
        self._factory = cursor_factory

    def cursor(self, config: SystemConfig, pid: int) -> ProtocolCursor:
        return self._factory(config, pid)

    def permitted(self, config: SystemConfig, pid: int, history: LocalHistory) -> tuple[ProcessAction, ...]:
        cur = self.cursor(config, pid)
        for _, ev in history.events:
            cur.consume(ev)
        return cur.permitted()


# ---------------------------------------------------------------------------
# quorum two-phase register


class _AbdCursor:
    """One process of the two-phase quorum register.

    Server role: answer every query with the local (ts, value); adopt any
    newer update and acknowledge it.  Client role: an operation runs a query
    phase (collect rid-matching replies from n-f processes, self included)
    followed by an update phase (propagate the chosen or freshly timestamped
    pair, await n-f acks) and only then responds.
    """

    def __init__(self, config: SystemConfig, pid: int):
        self.pid = pid
        self.quorum = config.n - config.f
        self.peers = config.out_neighbors(pid)
        self.reg = INITIAL_REGISTER
        self.outbox: deque[Send] = deque()
        self.ret: Return | None = None
        self.mode = "idle"  # idle | query | update
        self.op: tuple | None = None
        self.rid = 0
        self.heard: set[int] = set()
        self.best = INITIAL_REGISTER
        self.push = INITIAL_REGISTER  # pair being propagated in the update phase

    def permitted(self) -> tuple[ProcessAction, ...]:
        if self.ret is not None:
            return (self.ret,)
        if self.outbox:
            return (self.outbox[0],)
        return (NOOP,)

    def consume(self, event: Event) -> None:
        if isinstance(event, ActionEvent):
            a = event.action
            if self.ret is not None and a == self.ret:
                self.ret = None
            elif self.outbox and a == self.outbox[0]:
                self.outbox.popleft()
            return
        if isinstance(event, InputEvent):
            self._start(tuple(event.input))
            return
        if isinstance(event, ReceiveEvent):
            self._receive(event.sender, decode(event.payload))

    # -- client ----------------------------------------------------------

    def _start(self, op: tuple) -> None:
        self.op = op
        self.mode = "query"
        self.rid += 1
        self.heard = {self.pid}
        self.best = self.reg
        self._broadcast({"t": "qry", "rid": self.rid})
        self._advance()

    def _advance(self) -> None:
        if self.mode == "query" and len(self.heard) >= self.quorum:
            if self.op[0] == "W":
                pair = TimestampedValue(self.best.counter + 1, self.pid, self.op[1])
            else:
                pair = self.best
            self._adopt(pair)
            self.push = pair
            self.mode = "update"
            self.rid += 1
            self.heard = {self.pid}
            self._broadcast({"t": "upd", "rid": self.rid, **pair.wire()})
        if self.mode == "update" and len(self.heard) >= self.quorum:
            if self.op[0] == "W":
                self.ret = Return("W", ())
            else:
                self.ret = Return("R", (self.push.value,))
            self.mode = "idle"
            self.op = None

    # -- server ----------------------------------------------------------

    def _receive(self, sender: int, msg: dict) -> None:
        t = msg["t"]
        if t == "qry":
            self._send(sender, {"t": "qack", "rid": msg["rid"], **self.reg.wire()})
        elif t == "upd":
            self._adopt(TimestampedValue.from_wire(msg))
            self._send(sender, {"t": "uack", "rid": msg["rid"]})
        elif t == "qack":
            if self.mode == "query" and msg["rid"] == self.rid and sender not in self.heard:
                self.heard.add(sender)
                got = TimestampedValue.from_wire(msg)
                if got > self.best:
                    self.best = got
                self._advance()
        elif t == "uack":
            if self.mode == "update" and msg["rid"] == self.rid and sender not in self.heard:
                self.heard.add(sender)
                self._advance()

    def _adopt(self, pair: TimestampedValue) -> None:
        if pair > self.reg:
            self.reg = pair

    def _send(self, to: int, msg: dict) -> None:
        self.outbox.append(Send(encode(msg), to))

    def _broadcast(self, msg: dict) -> None:
        payload = encode(msg)
        for j in self.peers:
            self.outbox.append(Send(payload, j))


def abd_protocol(config: SystemConfig) -> ProtocolSpec:
    """Two-phase quorum register; requires n >= 2f+1 so quorums intersect."""
    if config.n < 2 * config.f + 1:
        raise ConfigError(
            f"quorum register needs n >= 2f+1, got n={config.n}, f={config.f}"
        )
    return ProtocolSpec("abd", config, lambda cfg, pid: _AbdCursor(cfg, pid))


# ---------------------------------------------------------------------------
# broken register (negative fixture)


class _BrokenCursor:
    """Zero-wait register: writes respond before the broadcast leaves, reads
    respond with the locally latest value.  No acknowledgements anywhere."""

    def __init__(self, config: SystemConfig, pid: int):
        self.pid = pid
        self.peers = config.out_neighbors(pid)
        self.reg = INITIAL_REGISTER
        self.outbox: deque[Send] = deque()
        self.ret: Return | None = None

    def permitted(self) -> tuple[ProcessAction, ...]:
        if self.ret is not None:
            return (self.ret,)
        if self.outbox:
            return (self.outbox[0],)
        return (NOOP,)

    def consume(self, event: Event) -> None:
        if isinstance(event, ActionEvent):
            a = event.action
            if self.ret is not None and a == self.ret:
                self.ret = None
            elif self.outbox and a == self.outbox[0]:
                self.outbox.popleft()
            return
        if isinstance(event, InputEvent):
            op = tuple(event.input)
            if op[0] == "W":
                self.ts = (self.ts[0] + 1, self.pid)
                self.val = op[1]
                self.ret = Return("W", ())
                payload = encode({"t": "bc", "ts": list(self.ts), "val": self.val})
                for j in self.peers:
                    self.outbox.append(Send(payload, j))
            else:
                self.ret = Return("R", (self.val,))
            return
        if isinstance(event, ReceiveEvent):
            msg = decode(event.payload)
            got = (tuple(msg["ts"]), msg["val"])
            if got[0] > self.ts:
                self.ts, self.val = got


def broken_protocol(config: SystemConfig) -> ProtocolSpec:
    return ProtocolSpec("broken", config, lambda cfg, pid: _BrokenCursor(cfg, pid))


# ---------------------------------------------------------------------------
# registry

_REGISTRY: dict[str, Callable[[SystemConfig], ProtocolSpec]] = {
    "abd": abd_protocol,
    "broken": broken_protocol,
}


def register_protocol(name: str, factory: Callable[[SystemConfig], ProtocolSpec]) -> None:
    _REGISTRY[name] = factory


def resolve_protocol(config: SystemConfig) -> ProtocolSpec:
    try:
        factory = _REGISTRY[config.protocol_id]
    except KeyError:
        raise ConfigError(f"unknown protocol {config.protocol_id!r}") from None
    return factory(config)
