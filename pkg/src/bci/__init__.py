"""Biased contribution index for peer-to-peer incentive accounting."""

from .errors import (
    BciError,
    DimensionMismatch,
    InvalidAlpha,
    InvalidConfig,
    LedgerError,
    NegativeAmount,
    NonPositiveInput,
    NonSquare,
    ParseError,
    PeerOutOfRange,
    ReplicationTooLarge,
    SelfTransaction,
)
from .ledger import (
    LedgerSummary,
    ShareMatrix,
    free_riders,
    is_balanced,
    is_irreducible,
    load_ledger,
    record_transaction,
    save_ledger,
    strongly_connected_components,
    summarize,
)
from .solver import (
    BciParams,
    FourDecimalEquality,
    InfNormTol,
    SolveResult,
    SolveWarning,
    UniformCheck,
    Uniformity,
    initial_vector,
    max_bci,
    min_bci,
    neutral_bci,
    phi_step,
    solve,
    sweep_alpha,
    verify_uniform_solution,
)

__version__ = "0.1.0"
