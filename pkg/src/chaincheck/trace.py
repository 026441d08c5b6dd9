"""Trace documents: canonical JSON persistence for runs.

One document per run, with a fixed field order, so byte-identical trace
files correspond exactly to identical runs.  Payload bytes are base64;
operation inputs and action arguments are JSON values (tuples round-trip
as arrays and are re-frozen on load).
"""

from __future__ import annotations

import base64
import hashlib
import json
from pathlib import Path
from typing import Any

from .errors import ParseError
from .model import (
    BOTTOM,
    Bottom,
    Deliver,
    GlobalState,
    Invoke,
    JointAction,
    LocalAction,
    MessageRecord,
    Move,
    MOVE,
    NoOp,
    NOOP,
    ProcessAction,
    Return,
    Run,
    Send,
    Skip,
    SKIP,
    SystemConfig,
    initial_state,
)

TRACE_FORMAT = "chaincheck-trace/1"

__all__ = ["TRACE_FORMAT", "canonical_json", "load_run", "run_digest", "run_to_doc", "run_from_doc", "save_run", "sha256_doc"]


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def sha256_doc(doc: Any) -> str:
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


def _b64(payload: bytes) -> str:
    return base64.b64encode(payload).decode("ascii")


def _unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"))


def _freeze(value):
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


# -- environment components -------------------------------------------------


def env_to_doc(comp) -> dict:
    if isinstance(comp, Move):
        return {"t": "move"}
    if isinstance(comp, Skip):
        return {"t": "skip"}
    if isinstance(comp, Invoke):
        return {"t": "invoke", "input": list(comp.input) if isinstance(comp.input, tuple) else comp.input}
    if isinstance(comp, Deliver):
        return {
            "t": "deliver",
            "from": comp.sender,
            "payload": _b64(comp.record.payload),
            "send_round": comp.record.send_round,
        }
    raise ParseError(f"unknown environment component {comp!r}")


def env_from_doc(doc: dict):
    t = doc["t"]
    if t == "move":
        return MOVE
    if t == "skip":
        return SKIP
    if t == "invoke":
        return Invoke(_freeze(doc["input"]))
    if t == "deliver":
        return Deliver(
            record=MessageRecord(_unb64(doc["payload"]), int(doc["send_round"])),
            sender=int(doc["from"]),
        )
    raise ParseError(f"unknown environment component tag {t!r}", field="env")


def action_to_doc(action: ProcessAction) -> dict:
    if isinstance(action, Bottom):
        return {"t": "bottom"}
    if isinstance(action, NoOp):
        return {"t": "noop"}
    if isinstance(action, Send):
        return {"t": "send", "to": action.to, "payload": _b64(action.payload)}
    if isinstance(action, Return):
        return {"t": "return", "kind": action.kind, "args": list(action.args)}
    if isinstance(action, LocalAction):
        args = [
            _b64(a) if isinstance(a, bytes) else a for a in action.args
        ]
        kinds = ["b" if isinstance(a, bytes) else "v" for a in action.args]
        return {"t": "local", "tag": action.tag, "args": args, "arg_kinds": kinds}
    raise ParseError(f"unknown process action {action!r}")


def action_from_doc(doc: dict) -> ProcessAction:
    t = doc["t"]
    if t == "bottom":
        return BOTTOM
    if t == "noop":
        return NOOP
    if t == "send":
        return Send(_unb64(doc["payload"]), int(doc["to"]))
    if t == "return":
        return Return(doc["kind"], _freeze(doc["args"]))
    if t == "local":
        args = tuple(
            _unb64(a) if k == "b" else _freeze(a)
            for a, k in zip(doc["args"], doc["arg_kinds"])
        )
        return LocalAction(doc["tag"], args)
    raise ParseError(f"unknown action tag {t!r}", field="actions")


# -- runs ---------------------------------------------------------------------


def run_to_doc(run: Run, seed: int | None = None, adversary: dict | None = None) -> dict:
    return {
        "format": TRACE_FORMAT,
        "config": {
            "n": run.config.n,
            "f": run.config.f,
            "edges": sorted(map(list, run.config.edges)),
            "protocol": run.config.protocol_id,
        },
        "seed": seed,
        "adversary": adversary,
        "horizon": run.horizon,
        "quiescent": run.quiescent,
        "crashes": {str(p): r for p, r in sorted(run.crashes.items())},
        "initial_values": [h.initial for h in run.initial.locals],
        "rounds": [
            {
                "env": [env_to_doc(c) for c in ja.env],
                "actions": [action_to_doc(a) for a in ja.actions],
            }
            for ja in run.rounds
        ],
    }


def run_from_doc(doc: dict) -> Run:
    if doc.get("format") != TRACE_FORMAT:
        raise ParseError(f"unsupported trace format {doc.get('format')!r}", field="format")
    cfg = doc["config"]
    config = SystemConfig(
        n=int(cfg["n"]),
        f=int(cfg["f"]),
        edges=frozenset((int(a), int(b)) for a, b in cfg["edges"]),
        protocol_id=cfg["protocol"],
    )
    crashes = {int(p): int(r) for p, r in doc.get("crashes", {}).items()}
    start = initial_state(
        config,
        initial_values=tuple(doc.get("initial_values", [None] * config.n)),
        crashes=crashes,
    )
    rounds = tuple(
        JointAction(
            env=tuple(env_from_doc(c) for c in rd["env"]),
            actions=tuple(action_from_doc(a) for a in rd["actions"]),
        )
        for rd in doc["rounds"]
    )
    return Run(
        config=config,
        initial=start,
        rounds=rounds,
        horizon=int(doc["horizon"]),
        quiescent=bool(doc.get("quiescent", False)),
    )


def run_digest(run: Run) -> str:
    """Digest of the run contents alone (no seed or adversary metadata)."""
    doc = run_to_doc(run)
    doc.pop("seed")
    doc.pop("adversary")
    return sha256_doc(doc)


def save_run(run: Run, path: str | Path, seed: int | None = None, adversary: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(run_to_doc(run, seed=seed, adversary=adversary)), encoding="utf-8")
    return path


def load_run(path: str | Path) -> Run:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", path=str(path)) from exc
    try:
        return run_from_doc(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed trace: {exc}", path=str(path)) from exc


def state_digest(state: GlobalState) -> str:
    """Digest of a global state, for replay-determinism checks."""
    doc = {
        "locals": [
            {
                "initial": h.initial,
                "events": [[r, _event_doc(e)] for r, e in h.events],
            }
            for h in state.locals
        ],
        "channels": {
            f"{e[0]}->{e[1]}": [[_b64(rec.payload), rec.send_round] for rec in ch.in_transit]
            for e, ch in sorted(state.channels.items())
        },
        "crashed": {str(p): r for p, r in sorted(state.crashed.items())},
        "rounds_applied": len(state.env_history),
    }
    return sha256_doc(doc)


def _event_doc(event) -> dict:
    from .model import ActionEvent, InputEvent, ReceiveEvent

    if isinstance(event, ActionEvent):
        return {"e": "act", "a": action_to_doc(event.action)}
    if isinstance(event, InputEvent):
        return {"e": "input", "input": list(event.input) if isinstance(event.input, tuple) else event.input}
    if isinstance(event, ReceiveEvent):
        return {"e": "recv", "from": event.sender, "payload": _b64(event.payload)}
    raise ParseError(f"unknown event {event!r}")
