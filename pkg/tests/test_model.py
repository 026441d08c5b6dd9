"""Transition function, replay determinism, validation, message loss."""

from __future__ import annotations

import pytest

from chaincheck.adversary import AdversarySpec, simulate
from chaincheck.errors import MalformedJointAction
from chaincheck.model import (
    ActionEvent,
    Bottom,
    Deliver,
    LocalAction,
    MessageRecord,
    ReceiveEvent,
    Send,
    SystemConfig,
    apply_transition,
    deliveries,
    initial_state,
    lost_messages,
    replay,
    validate_run,
)
from chaincheck.protocols import resolve_protocol
from chaincheck.trace import state_digest

from conftest import mk_round, mk_run, script_protocol


def test_skip_leaves_local_state_unchanged():
    config = SystemConfig.complete(2, 0, "script")
    state = initial_state(config)
    nxt = apply_transition(state, mk_round(2), config)
    assert nxt.locals == state.locals
    assert nxt.env_history[-1].actions == (Bottom(), Bottom())


def test_send_appends_record_with_current_round():
    config = SystemConfig.complete(2, 0, "script")
    state = initial_state(config)
    nxt = apply_transition(state, mk_round(2, moves={0: Send(b"mu", 1)}), config)
    assert nxt.channels[(0, 1)].in_transit == (MessageRecord(b"mu", 1),)
    assert nxt.locals[0].events[-1] == (1, ActionEvent(Send(b"mu", 1)))


def test_successful_delivery_removes_record_and_appends_reception():
    config = SystemConfig.complete(2, 0, "script")
    state = initial_state(config)
    state = apply_transition(state, mk_round(2, moves={1: Send(b"mu", 0)}), config)
    state = apply_transition(state, mk_round(2), config)
    state = apply_transition(state, mk_round(2, delivers={0: (1, b"mu", 1)}), config)
    assert state.channels[(1, 0)].in_transit == ()
    assert state.locals[0].events == ((3, ReceiveEvent(1, b"mu")),)
    assert state.env_history[-1].actions[0] == LocalAction("recv", (1, b"mu"))


def test_missed_delivery_is_a_bottom_no_op():
    config = SystemConfig.complete(2, 0, "script")
    state = initial_state(config)
    nxt = apply_transition(state, mk_round(2, delivers={0: (1, b"mu", 1)}), config)
    assert nxt.locals[0] == state.locals[0]
    assert nxt.env_history[-1].actions[0] == Bottom()


def test_same_round_send_is_not_deliverable():
    config = SystemConfig.complete(2, 0, "script")
    state = initial_state(config)
    ja = mk_round(2, moves={0: Send(b"mu", 1)}, delivers={1: (0, b"mu", 1)})
    nxt = apply_transition(state, ja, config)
    # the delivery resolves against the pre-round channel, so it misses
    assert nxt.locals[1].events == ()
    assert nxt.channels[(0, 1)].in_transit == (MessageRecord(b"mu", 1),)


def test_malformed_joint_action_lengths():
    config = SystemConfig.complete(2, 0, "script")
    state = initial_state(config)
    with pytest.raises(MalformedJointAction):
        apply_transition(state, mk_round(3), config)


def test_send_to_non_edge_is_malformed():
    config = SystemConfig(2, 0, frozenset({(0, 1)}), "script")
    state = initial_state(config)
    with pytest.raises(MalformedJointAction):
        apply_transition(state, mk_round(2, moves={1: Send(b"x", 0)}), config)


def test_replay_of_empty_run_is_initial_only():
    config = SystemConfig.complete(2, 0, "script")
    run = mk_run(config, [])
    states = replay(run)
    assert len(states) == 1
    assert states[0].locals == run.initial.locals


def test_replay_skip_round_duplicates_local_snapshots():
    config = SystemConfig.complete(2, 0, "script")
    run = mk_run(config, [mk_round(2)])
    states = replay(run)
    assert len(states) == 2
    assert states[0].locals == states[1].locals


def test_replay_is_deterministic_byte_for_byte():
    config = SystemConfig.complete(3, 1, "abd")
    proto = resolve_protocol(config)
    adv = AdversarySpec(schedule="random", max_invocations=2, invoke_prob=0.3, max_crashes=1)
    run = simulate(config, proto, adv, 25, seed=11)
    first = [state_digest(s) for s in replay(run)]
    second = [state_digest(s) for s in replay(run)]
    assert first == second


def test_simulate_is_deterministic_and_valid_across_seeds():
    config = SystemConfig.complete(3, 1, "abd")
    proto = resolve_protocol(config)
    adv = AdversarySpec(schedule="random", max_invocations=3, invoke_prob=0.25, max_crashes=1)
    for seed in range(15):
        run1 = simulate(config, proto, adv, 30, seed=seed)
        run2 = simulate(config, proto, adv, 30, seed=seed)
        assert run1 == run2
        assert validate_run(run1, proto).ok


def test_validate_flags_move_after_crash():
    config = SystemConfig.complete(2, 1, "script")
    proto = script_protocol("script", config, {0: [Send(b"x", 1), Send(b"y", 1)]})
    run = mk_run(
        config,
        [mk_round(2, moves={0: Send(b"x", 1)}), mk_round(2, moves={0: Send(b"y", 1)})],
        crashes={0: 1},
    )
    report = validate_run(run, proto)
    assert [v.kind for v in report.violations] == ["crash"]
    assert report.violations[0].round_no == 2


def test_validate_flags_fifo_swap():
    config = SystemConfig.complete(2, 0, "script")
    proto = script_protocol("script", config, {0: [Send(b"one", 1), Send(b"two", 1)]})
    run = mk_run(
        config,
        [
            mk_round(2, moves={0: Send(b"one", 1)}),
            mk_round(2, moves={0: Send(b"two", 1)}),
            mk_round(2, delivers={1: (0, b"two", 2)}),  # skips the FIFO head
            mk_round(2, delivers={1: (0, b"one", 1)}),
        ],
    )
    report = validate_run(run, proto)
    kinds = [v.kind for v in report.violations]
    assert "delivery" in kinds
    assert any("FIFO" in v.detail for v in report.violations)


def test_validate_flags_never_sent_record():
    config = SystemConfig.complete(2, 0, "script")
    proto = script_protocol("script", config, {})
    run = mk_run(config, [mk_round(2, delivers={1: (0, b"ghost", 1)})])
    report = validate_run(run, proto)
    assert [v.kind for v in report.violations] == ["delivery"]
    assert "never sent" in report.violations[0].detail


def test_validate_flags_off_protocol_action():
    config = SystemConfig.complete(2, 0, "script")
    proto = script_protocol("script", config, {0: [Send(b"x", 1)]})
    run = mk_run(config, [mk_round(2, moves={0: Send(b"zzz", 1)})])
    report = validate_run(run, proto)
    assert [v.kind for v in report.violations] == ["action"]


def test_legal_simulated_run_validates_empty(abd_config):
    proto = resolve_protocol(abd_config)
    adv = AdversarySpec(schedule="eager", max_invocations=3, invoke_prob=0.3)
    run = simulate(abd_config, proto, adv, 120, seed=5)
    assert validate_run(run, proto).ok


def test_lost_messages_empty_on_quiescent_reliable_run(abd_config):
    proto = resolve_protocol(abd_config)
    adv = AdversarySpec(schedule="eager", max_invocations=2, invoke_prob=0.3)
    run = simulate(abd_config, proto, adv, 120, seed=3)
    assert run.quiescent
    assert lost_messages(run) == frozenset()


def test_lost_messages_has_message_to_crashed_process():
    config = SystemConfig.complete(2, 1, "script")
    proto = script_protocol("script", config, {0: [Send(b"mu", 1)]})
    run = mk_run(config, [mk_round(2, moves={0: Send(b"mu", 1)}), mk_round(2)], crashes={1: 1})
    lost = lost_messages(run)
    assert lost == {((0, 1), MessageRecord(b"mu", 1))}


def test_lost_messages_equals_sends_minus_deliveries():
    config = SystemConfig.complete(4, 1, "abd")
    proto = resolve_protocol(config)
    adv = AdversarySpec(
        schedule="random", delivery="random", deliver_prob=0.4,
        max_invocations=3, invoke_prob=0.3, max_crashes=1, seek_quiescence=False,
    )
    for seed in range(10):
        run = simulate(config, proto, adv, 25, seed=seed)
        sends = []
        for k, ja in enumerate(run.rounds):
            for i, action in enumerate(ja.actions):
                if isinstance(action, Send):
                    sends.append(((i, action.to), MessageRecord(action.payload, k + 1)))
        delivered = {
            ((d.sender, d.receiver), MessageRecord(d.payload, d.send_round))
            for d in deliveries(run)
        }
        assert lost_messages(run) == set(sends) - delivered


def test_crash_plan_respected_by_simulator():
    config = SystemConfig.complete(3, 1, "abd")
    proto = resolve_protocol(config)
    adv = AdversarySpec(schedule="eager", max_invocations=3, invoke_prob=0.4, crash_plan=((1, 10),))
    run = simulate(config, proto, adv, 60, seed=2)
    assert validate_run(run, proto).ok
    from chaincheck.model import Invoke, Move
    for k, ja in enumerate(run.rounds):
        if k + 1 > 10:
            assert not isinstance(ja.env[1], (Move, Invoke))


def test_locality_of_state_change():
    config = SystemConfig.complete(3, 1, "abd")
    proto = resolve_protocol(config)
    adv = AdversarySpec(schedule="random", max_invocations=2, invoke_prob=0.3)
    run = simulate(config, proto, adv, 30, seed=9)
    states = replay(run)
    from chaincheck.model import Invoke, Move
    for m in range(1, len(states)):
        ja = run.rounds[m - 1]
        for i in range(config.n):
            if states[m].locals[i] != states[m - 1].locals[i]:
                comp = ja.env[i]
                delivered = isinstance(comp, Deliver) and not isinstance(ja.actions[i], Bottom)
                assert isinstance(comp, (Move, Invoke)) or delivered


def test_adversary_exhausted_on_impossible_demands():
    from chaincheck.errors import AdversaryExhausted
    from chaincheck.adversary import Invocation

    config = SystemConfig.complete(3, 1, "abd")
    proto = resolve_protocol(config)
    with pytest.raises(AdversaryExhausted):
        simulate(config, proto, AdversarySpec(crash_plan=((0, 5), (1, 6))), 20, seed=0)
    with pytest.raises(AdversaryExhausted):
        simulate(config, proto, AdversarySpec(max_crashes=2), 20, seed=0)
    with pytest.raises(AdversaryExhausted):
        # second invocation lands while the first is still pending
        adv = AdversarySpec(
            schedule="eager",
            invocations=(Invocation(0, "W", "a", 1), Invocation(0, "R", None, 2)),
        )
        simulate(config, proto, adv, 40, seed=0)
    with pytest.raises(AdversaryExhausted):
        adv = AdversarySpec(invocations=(Invocation(0, "W", "a", 50),))
        simulate(config, proto, adv, 20, seed=0)


def test_fifo_delivery_order_matches_send_order():
    config = SystemConfig.complete(4, 1, "abd")
    proto = resolve_protocol(config)
    adv = AdversarySpec(
        schedule="random", delivery="random", deliver_prob=0.5,
        max_invocations=4, invoke_prob=0.3,
    )
    for seed in range(10):
        run = simulate(config, proto, adv, 60, seed=seed)
        per_edge: dict = {}
        for d in deliveries(run):
            per_edge.setdefault((d.sender, d.receiver), []).append(d.send_round)
        for rounds in per_edge.values():
            assert rounds == sorted(rounds)


def test_prompt_delivery_gossip_arrives_next_round():
    config = SystemConfig.complete(2, 0, "pingline")
    sends = [Send(bytes([65 + k]), 1) for k in range(3)]
    proto = script_protocol("pingline", config, {0: sends})
    from chaincheck.protocols import register_protocol

    register_protocol("pingline", lambda cfg: script_protocol("pingline", cfg, {0: list(sends)}))
    adv = AdversarySpec(schedule="eager", seek_quiescence=True)
    run = simulate(config, proto, adv, 10, seed=0)
    delivs = deliveries(run)
    assert len(delivs) == 3
    assert all(d.deliver_round == d.send_round + 1 for d in delivs)
