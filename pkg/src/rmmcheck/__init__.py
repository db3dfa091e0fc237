"""Robustness checking for concurrent programs under store-buffered relaxed
memory: a bounded enumeration oracle over the buffered semantics, and a
source-to-source reduction of robustness to SC-reachability."""

__version__ = "0.1.0"

from .syntax import (
    Assert,
    BinOp,
    Const,
    Diagnostic,
    Expr,
    Fence,
    Instruction,
    LabeledInstruction,
    Load,
    LocalAssign,
    Not,
    ParseError,
    Program,
    Reg,
    ScFence,
    Store,
    Thread,
    parse_program,
    pretty_print,
    validate,
)
from .semantics import (
    Action,
    Computation,
    InvalidChoice,
    MachineState,
    PendingFence,
    PendingStore,
    StuckReport,
    Transition,
    apply,
    enabled_transitions,
    initial_state,
    run,
    sc_enabled_transitions,
)
from .traces import (
    CostTriple,
    IncomparableTraces,
    Trace,
    TraceNode,
    build_trace,
    cost,
    hb_through,
    is_cyclic,
    program_order,
    source_function,
    traces_equal,
)
from .oracle import (
    ExplorationConfig,
    NoDecomposition,
    NotFoundWithinBounds,
    PreconditionViolated,
    PropertyVerdict,
    ViolationReport,
    WitnessVerdict,
    check_locality,
    check_singularity,
    enumerate_computations,
    find_minimal_violation,
    find_violation,
    is_witness,
    sc_trace_set,
    schedule_realizing,
)
from .instrument import (
    AddressLayout,
    Attack,
    InstrumentedProgram,
    InvalidAttack,
    enumerate_attacks,
    instrument_attacker_locality,
    instrument_attacker_singularity,
    instrument_helper,
    instrument_program,
)
from .screach import (
    BudgetExhausted,
    ReachLimits,
    ReachQuery,
    ReachResult,
    RobustnessVerdict,
    check_robustness,
    por_reduce,
    reachable,
)
