"""proofloop: an iterative propose/compile/review loop for Lean 4 proofs,
with a mock-first benchmark harness (pass@k, iteration curves, cost)."""

from .core import (
    AttemptRecord,
    BuildFeedback,
    Diagnostic,
    Error,
    Exhausted,
    HistoryN,
    NoMemory,
    PriceTable,
    ProofProposal,
    ProofResult,
    Proved,
    ProverConfig,
    ReviewVerdict,
    SelfManaged,
    ServiceBundle,
    TheoremTask,
    ToolCallRequest,
    run_attempt_loop,
)

__version__ = "0.1.0"

__all__ = [
    "AttemptRecord",
    "BuildFeedback",
    "Diagnostic",
    "Error",
    "Exhausted",
    "HistoryN",
    "NoMemory",
    "PriceTable",
    "ProofProposal",
    "ProofResult",
    "Proved",
    "ProverConfig",
    "ReviewVerdict",
    "SelfManaged",
    "ServiceBundle",
    "TheoremTask",
    "ToolCallRequest",
    "run_attempt_loop",
    "__version__",
]
