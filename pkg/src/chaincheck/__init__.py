"""Deterministic message-passing simulation and linearizability tooling."""

from .adversary import AdversarySpec, Invocation, extend_run, simulate
from .analysis import audit_chains, audit_quorum, observers, refute, witnesses
from .causality import (
    CausalIndex,
    PastFrontier,
    build_index,
    corresponding_nodes,
    happens_before,
    locally_equivalent,
    op_chain,
    past_frontier,
)
from .errors import (
    AdversaryExhausted,
    ChaincheckError,
    ConfigError,
    ConfigMismatch,
    ConstraintError,
    HistoryTooLarge,
    MalformedJointAction,
    NotEquivalent,
    ParseError,
    PendingOperation,
    PreconditionFailed,
    ProtocolViolation,
    ValidationFailure,
)
from .linearize import (
    OperationInstance,
    SequentialHistory,
    check_no_aba,
    extract_operations,
    find_linearization,
    is_atomic_history,
    linearize_operations,
)
from .model import (
    GlobalState,
    JointAction,
    LocalHistory,
    MessageRecord,
    Node,
    Run,
    SystemConfig,
    apply_transition,
    lost_messages,
    replay,
    validate_run,
)
from .protocols import ProtocolSpec, abd_protocol, broken_protocol, resolve_protocol
from .scenario import ScenarioSpec, fuzz, load_scenario, run_scenario
from .trace import load_run, run_digest, save_run
from .transform import delay_future, reorder_operations, shift

__version__ = "0.1.0"
