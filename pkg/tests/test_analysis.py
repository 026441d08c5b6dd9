"""Observer/witness sets, quorum and chain audits, mechanical refutation."""

from __future__ import annotations

import pytest

from chaincheck.adversary import AdversarySpec, Invocation, simulate
from chaincheck.analysis import audit_chains, audit_quorum, observers, refute, witnesses
from chaincheck.causality import build_index, locally_equivalent
from chaincheck.errors import PendingOperation
from chaincheck.linearize import extract_operations, find_linearization
from chaincheck.model import SystemConfig, truncate, validate_run
from chaincheck.protocols import resolve_protocol


def broken_fixture_run(read_round=16):
    """Write a at p0 (broadcast to p2 delayed), write b at p2, read b at p1."""
    config = SystemConfig.complete(3, 1, "broken")
    proto = resolve_protocol(config)
    adv = AdversarySpec(
        schedule="eager",
        invocations=(
            Invocation(0, "W", "a", 1),
            Invocation(2, "W", "b", 8),
            Invocation(1, "R", None, read_round),
        ),
        edge_delays=((0, 2, 30),),
        seek_quiescence=True,
    )
    return simulate(config, proto, adv, 60, seed=0), proto


def test_operation_without_outgoing_deliveries_observes_only_itself():
    config = SystemConfig.complete(3, 1, "broken")
    proto = resolve_protocol(config)
    adv = AdversarySpec(schedule="eager", invocations=(Invocation(1, "R", None, 1),))
    run = simulate(config, proto, adv, 20, seed=0)
    ops = extract_operations(run)
    index = build_index(run)
    assert observers(run, index, ops[0]) == {1}
    assert witnesses(run, index, ops[0]) == {1}


def test_abd_operation_reaches_quorum_of_observers(abd_config):
    proto = resolve_protocol(abd_config)
    adv = AdversarySpec(schedule="eager", invocations=(Invocation(0, "W", "v", 1),))
    run = simulate(abd_config, proto, adv, 90, seed=0)
    ops = extract_operations(run)
    index = build_index(run)
    obs = observers(run, index, ops[0])
    wit = witnesses(run, index, ops[0])
    quorum = abd_config.n - abd_config.f
    assert len(obs) >= quorum
    assert len(wit) >= quorum
    assert len(wit) > abd_config.f


def test_witnesses_subset_of_observers_and_monotone_under_extension():
    config = SystemConfig.complete(4, 1, "abd")
    proto = resolve_protocol(config)
    adv = AdversarySpec(
        schedule="random", max_invocations=3, invoke_prob=0.3, max_crashes=1,
    )
    for seed in range(12):
        run = simulate(config, proto, adv, 60, seed=seed)
        index = build_index(run)
        ops = [o for o in extract_operations(run) if o.completed]
        short = truncate(run, 40)
        short_index = build_index(short)
        short_ops = {o.id: o for o in extract_operations(short) if o.completed}
        for o in ops:
            wit = witnesses(run, index, o)
            assert wit <= observers(run, index, o)
            if o.id in short_ops:
                so = short_ops[o.id]
                assert witnesses(short, short_index, so) <= wit
                assert observers(short, short_index, so) <= observers(run, index, o)


def test_witness_set_matches_brute_force_over_all_nodes():
    from chaincheck.causality import happens_before
    from chaincheck.model import Node

    config = SystemConfig.complete(4, 1, "abd")
    proto = resolve_protocol(config)
    adv = AdversarySpec(
        schedule="random", delivery="random", deliver_prob=0.5,
        max_invocations=3, invoke_prob=0.3,
    )
    for seed in range(8):
        run = simulate(config, proto, adv, 40, seed=seed)
        index = build_index(run)
        for op in extract_operations(run):
            if not op.completed:
                continue
            brute = {op.process}
            for p in range(config.n):
                for t in range(run.horizon + 1):
                    node = Node(p, t)
                    if happens_before(index, op.start, node) and happens_before(index, node, op.end):
                        brute.add(p)
            assert witnesses(run, index, op) == brute


def test_observers_requires_completion():
    config = SystemConfig.complete(3, 1, "abd")
    proto = resolve_protocol(config)
    adv = AdversarySpec(
        schedule="eager", invocations=(Invocation(0, "W", "v", 2),), crash_plan=((0, 3),)
    )
    run = simulate(config, proto, adv, 30, seed=0)
    ops = extract_operations(run)
    index = build_index(run)
    with pytest.raises(PendingOperation):
        observers(run, index, ops[0])
    with pytest.raises(PendingOperation):
        witnesses(run, index, ops[0])


def test_quorum_audit_clean_for_abd_and_flagged_for_broken(abd_config):
    proto = resolve_protocol(abd_config)
    adv = AdversarySpec(schedule="random", max_invocations=4, invoke_prob=0.25, max_crashes=2)
    for seed in range(15):
        run = simulate(abd_config, proto, adv, 170, seed=seed)
        assert audit_quorum(run).clean

    run, _ = broken_fixture_run()
    report = audit_quorum(run)
    flagged = {v.op_ids[0] for v in report.violations if v.rule == "witnesses"}
    assert flagged == {"0:0", "2:0", "1:0"}


def test_quorum_audit_trivial_at_f_zero():
    config = SystemConfig.complete(3, 1, "broken")
    proto = resolve_protocol(config)
    adv = AdversarySpec(schedule="eager", invocations=(Invocation(0, "W", "v", 1),))
    run = simulate(config, proto, adv, 20, seed=0)
    assert audit_quorum(run, f=0).clean


def test_chain_audit_clean_on_abd(abd_config):
    proto = resolve_protocol(abd_config)
    adv = AdversarySpec(schedule="random", max_invocations=4, invoke_prob=0.25, max_crashes=2)
    for seed in range(15):
        run = simulate(abd_config, proto, adv, 170, seed=seed)
        assert audit_chains(run).clean


def test_chain_audit_vacuous_on_write_only_run(abd_config):
    proto = resolve_protocol(abd_config)
    adv = AdversarySpec(schedule="eager", invocations=(Invocation(0, "W", "v", 1),))
    run = simulate(abd_config, proto, adv, 90, seed=0)
    assert audit_chains(run).clean


def test_chain_audit_flags_broken_fixture():
    run, _ = broken_fixture_run()
    report = audit_chains(run)
    rules = {v.rule for v in report.violations}
    assert "pair-chain" in rules
    assert "isolation-chain" in rules


def test_refute_pair_chain_violation_yields_not_linearizable():
    run, proto = broken_fixture_run()
    assert find_linearization(run).linearizable  # the raw run looks fine
    report = audit_chains(run)
    violation = next(v for v in report.violations if v.rule == "pair-chain")
    ref = refute(run, violation, protocol=proto)
    assert not ref.verdict.linearizable
    assert validate_run(ref.run, proto).ok
    assert locally_equivalent(run, ref.run)
    assert ref.verdict.evidence.aba_triples


def test_refute_isolation_chain_violation():
    run, proto = broken_fixture_run()
    violation = next(v for v in audit_chains(run).violations if v.rule == "isolation-chain")
    ref = refute(run, violation, protocol=proto)
    assert not ref.verdict.linearizable
    assert locally_equivalent(run, ref.run)


def test_refute_read_chain_violation_via_clairvoyant_protocol():
    config = SystemConfig(2, 0, frozenset(), "clairvoyant")
    proto = resolve_protocol(config)
    adv = AdversarySpec(
        schedule="eager",
        invocations=(Invocation(0, "W", "c", 1), Invocation(1, "R", None, 5)),
        seek_quiescence=True,
    )
    run = simulate(config, proto, adv, 12, seed=0)
    ops = {o.id: o for o in extract_operations(run)}
    assert ops["1:0"].value == "c"
    report = audit_chains(run)
    violation = next(v for v in report.violations if v.rule == "read-chain")
    assert violation.op_ids == ("0:0", "1:0")
    ref = refute(run, violation, protocol=proto)
    assert not ref.verdict.linearizable
    assert validate_run(ref.run, proto).ok
    assert locally_equivalent(run, ref.run)


def test_refute_quorum_violation_via_crash_extension():
    run, proto = broken_fixture_run()
    report = audit_quorum(run)
    violation = next(v for v in report.violations if v.rule == "witnesses")
    ref = refute(run, violation, protocol=proto)
    assert not ref.verdict.linearizable
    assert ref.extension is not None
    assert validate_run(ref.run, proto).ok
    # the extension itself is a legal run whose crashes stay within budget
    assert validate_run(ref.extension, proto).ok
    assert len(ref.extension.crashes) <= run.config.f


def test_clean_run_has_nothing_to_refute(abd_config):
    proto = resolve_protocol(abd_config)
    adv = AdversarySpec(schedule="eager", max_invocations=3, invoke_prob=0.3)
    run = simulate(abd_config, proto, adv, 150, seed=1)
    assert audit_chains(run).clean
    assert audit_quorum(run).clean
