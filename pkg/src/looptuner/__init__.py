"""looptuner: LLM-in-the-loop auto-scheduling for affine loop nests.

A language model proposes loop-transformation schedules for an annotated C
kernel; this library validates them, checks legality against data
dependences, applies them, measures the result (for real or against a
deterministic cost model), and feeds the outcome back until a stopping
criterion, then reports the best schedule with full evaluation statistics.
"""

from .affine import AffineExpr
from .backend import (
    BackendConfig,
    BackendResult,
    CompilerCrash,
    ExecBackend,
    RuntimeCrash,
    Success,
    Timeout,
    count_instances,
    measure_baseline,
    run_schedule,
    simulate_cost,
)
from .cemit import emit_c
from .deps import (
    Dependence,
    brute_force_dependences,
    compute_dependences,
    format_dependences,
)
from .interp import (
    InterpreterError,
    OutOfBoundsError,
    buffers_equal,
    interpret,
    interpret_with_stats,
    seeded_buffers,
)
from .ir import (
    Access,
    Assignment,
    BufferDecl,
    Computation,
    Kernel,
    Loop,
    NameMap,
    anonymize,
    print_kernel,
    render_for_prompt,
)
from .legality import (
    Counterexample,
    Illegal,
    Legal,
    LegalityResult,
    SolverFailure,
    assert_semantics_preserved,
    check_legal,
)
from .llm import (
    ChatMessage,
    HttpProvider,
    LLMProviderConfig,
    ScriptedProvider,
    ScriptMismatchError,
    TokenUsage,
    TransportError,
)
from .orchestrator import (
    Dialogue,
    DialogueState,
    FeedbackMessage,
    OrchestratorConfig,
    run_dialogue,
)
from .parser import KernelParseError, parse_kernel, parse_kernel_file
from .records import (
    ExchangeRecord,
    LogicalClock,
    RunRecord,
    WallClock,
    load_run_record,
    scripted_provider,
)
from .schedule import (
    Fuse,
    Innermost,
    Interchange,
    LLMResponse,
    LoopLevel,
    Depth,
    Parallelize,
    QuitCommand,
    Reverse,
    Schedule,
    ScheduleParseError,
    Skew,
    Tile2D,
    Tile3D,
    Transformation,
    Unroll,
    canonicalize,
    parse_response,
    parse_schedule,
    print_schedule,
)
from .stats import (
    EstimateWithCI,
    Pool,
    best_of_k_at,
    bootstrap_ci,
    geomean,
    median_at,
    viability_breakdown,
)
from .transform import (
    InvalidReason,
    TransformedKernel,
    apply_schedule,
    identity_transformed,
    prevalidate,
)

__version__ = "0.1.0"
