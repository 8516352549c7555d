"""Biased contribution index: the fixed point of the incentive map.

For peer ``i`` with upload mass ``u_i = (s x)_i`` and download mass
``d_i = (s^T x)_i`` the index is::

    x_i = alpha * u_i / (u_i + d_i) + (1 - alpha)     if u_i + d_i != 0
    x_i = 1 - alpha / 2                               otherwise

The fixed point is reached by synchronous (Jacobi) iteration from the
neutral vector ``(1 - alpha/2) e``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from operator import itemgetter, mul
from typing import Sequence, Union

from .errors import DimensionMismatch, InvalidAlpha, NonPositiveInput
from .ledger import ShareMatrix, is_irreducible

BciVector = tuple  # tuple[float, ...], one index per peer

DEFAULT_MAX_ITERATIONS = 10_000
_QUANTUM = Decimal("0.0001")


def check_alpha(alpha) -> float:
    try:
        a = float(alpha)
    except (TypeError, ValueError):
        raise InvalidAlpha(f"alpha must be a number, got {alpha!r}") from None
    if not 0.0 < a < 1.0:
        raise InvalidAlpha(f"alpha must lie in the open interval (0, 1), got {alpha!r}")
    return a


def round4(value: float) -> Decimal:
    """Round half away from zero to 4 decimals, on the exact binary value."""
    return Decimal(value).quantize(_QUANTUM, rounding=ROUND_HALF_UP)


def format4(value: float) -> str:
    return str(round4(value))


# -- stopping rules -------------------------------------------------------

@dataclass(frozen=True)
class FourDecimalEquality:
    """Stop when successive iterates agree once rounded to 4 decimals."""

    name = "four-dp"

    def settled(self, old: float, new: float) -> bool:
        return round4(old) == round4(new)

    def fired(self, prev: Sequence[float], cur: Sequence[float], residual: float) -> bool:
        return all(self.settled(a, b) for a, b in zip(prev, cur))


@dataclass(frozen=True)
class InfNormTol:
    """Stop when the max-norm step falls strictly below ``eps``."""

    eps: float
    name = "inf-norm"

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps!r}")

    def settled(self, old: float, new: float) -> bool:
        return abs(new - old) < self.eps

    def fired(self, prev: Sequence[float], cur: Sequence[float], residual: float) -> bool:
        return residual < self.eps


StoppingRule = Union[FourDecimalEquality, InfNormTol]


@dataclass(frozen=True)
class BciParams:
    alpha: float
    stopping: StoppingRule = field(default_factory=FourDecimalEquality)
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        object.__setattr__(self, "alpha", check_alpha(self.alpha))
        if not isinstance(self.max_iterations, int) or self.max_iterations < 1:
            raise ValueError(f"max_iterations must be a positive integer, got {self.max_iterations!r}")


class SolveWarning(str, enum.Enum):
    REDUCIBLE_MATRIX = "ReducibleMatrix"
    HIT_ITERATION_CAP = "HitIterationCap"


@dataclass
class SolveResult:
    alpha: float
    x: BciVector
    iterations: int
    history: list[BciVector]
    residuals: list[float]
    warnings: set[SolveWarning] = field(default_factory=set)

    @property
    def converged(self) -> bool:
        return SolveWarning.HIT_ITERATION_CAP not in self.warnings

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "iterations": self.iterations,
            "x": list(self.x),
            "history": [list(h) for h in self.history],
            "residuals": list(self.residuals),
            "warnings": sorted(w.value for w in self.warnings),
        }


# -- bounds ---------------------------------------------------------------

def min_bci(alpha: float) -> float:
    return 1.0 - check_alpha(alpha)


def max_bci() -> float:
    return 1.0


def neutral_bci(alpha: float) -> float:
    return 1.0 - check_alpha(alpha) / 2.0


def initial_vector(n: int, alpha: float) -> BciVector:
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    return (neutral_bci(alpha),) * n


# -- the map --------------------------------------------------------------

def _dots(adjacency, x: Sequence[float]) -> list[float]:
    # fsum is correctly rounded, so the result does not depend on platform or order.
    out = []
    for idx, vals in adjacency:
        if not idx:
            out.append(0.0)
        elif len(idx) == 1:
            out.append(vals[0] * x[idx[0]])
        else:
            out.append(math.fsum(map(mul, vals, itemgetter(*idx)(x))))
    return out


def bci_entry(alpha: float, up: float, down: float) -> float:
    """One entry of the map given weighted upload and download masses."""
    total = up + down
    if total == 0.0:
        return 1.0 - alpha / 2.0
    # Same value as alpha*up/total + (1 - alpha); this form makes the floor
    # (up == 0) and the ceiling (down == 0) exact.
    return 1.0 - alpha * (down / total)


def _phi(ledger: ShareMatrix, x: Sequence[float], alpha: float) -> BciVector:
    up = _dots(ledger.rows(), x)
    down = _dots(ledger.cols(), x)
    return tuple(bci_entry(alpha, u, d) for u, d in zip(up, down))


def phi_step(ledger: ShareMatrix, x: Sequence[float], alpha: float) -> BciVector:
    alpha = check_alpha(alpha)
    if len(x) != ledger.n:
        raise DimensionMismatch(f"x has {len(x)} entries, ledger has {ledger.n} peers")
    if not all(v > 0 for v in x):
        raise NonPositiveInput("every entry of x must be strictly positive")
    return _phi(ledger, tuple(float(v) for v in x), alpha)


def _residual(a: Sequence[float], b: Sequence[float]) -> float:
    return max((abs(p - q) for p, q in zip(a, b)), default=0.0)


def solve(ledger: ShareMatrix, params: BciParams) -> SolveResult:
    alpha = params.alpha
    x = initial_vector(ledger.n, alpha)
    history = [x]
    residuals: list[float] = []
    warnings: set[SolveWarning] = set()
    if not is_irreducible(ledger):
        warnings.add(SolveWarning.REDUCIBLE_MATRIX)

    rule = params.stopping
    y = _phi(ledger, x, alpha)
    for k in range(1, params.max_iterations + 1):
        r = _residual(y, x)
        history.append(y)
        residuals.append(r)
        fired = rule.fired(x, y, r)
        x, y = y, _phi(ledger, y, alpha)
        # Residuals can oscillate on reducible ledgers; only stop where the
        # next step does not grow, so |x - phi(x)| <= last residual holds.
        if fired and _residual(y, x) <= r:
            break
    else:
        warnings.add(SolveWarning.HIT_ITERATION_CAP)
    return SolveResult(alpha=alpha, x=x, iterations=len(residuals),
                       history=history, residuals=residuals, warnings=warnings)


def sweep_alpha(ledger: ShareMatrix, alphas: Sequence[float],
                stopping: StoppingRule | None = None,
                max_iterations: int = DEFAULT_MAX_ITERATIONS) -> list[tuple[float, int, BciVector]]:
    stopping = stopping if stopping is not None else FourDecimalEquality()
    out = []
    for a in alphas:
        res = solve(ledger, BciParams(a, stopping, max_iterations))
        out.append((res.alpha, res.iterations, res.x))
    return out


# -- lemma checks ---------------------------------------------------------

class Uniformity(str, enum.Enum):
    UNIFORM_AND_BALANCED = "UniformAndBalanced"
    UNIFORM_ONLY = "UniformOnly"
    NOT_UNIFORM = "NotUniform"


@dataclass(frozen=True)
class UniformCheck:
    status: Uniformity
    violation: float | None = None  # worst |upload - download| when UniformOnly
    deviation: float = 0.0  # max |x_i - (1 - alpha/2)|


def verify_uniform_solution(ledger: ShareMatrix, alpha: float, tol: float = 1e-8,
                            eps: float = 1e-13) -> UniformCheck:
    """Check the pairing between a uniform index vector and a balanced ledger.

    If the converged vector is within ``tol`` of the neutral value everywhere,
    every peer's upload and download totals must agree to within
    ``tol * total / n``.
    """
    res = solve(ledger, BciParams(alpha, InfNormTol(eps)))
    neutral = neutral_bci(alpha)
    deviation = _residual(res.x, (neutral,) * ledger.n)
    if deviation > tol:
        return UniformCheck(Uniformity.NOT_UNIFORM, None, deviation)
    up, down = ledger.upload_totals(), ledger.download_totals()
    worst = max(abs(u - d) for u, d in zip(up, down))
    if worst <= tol * ledger.total() / ledger.n:
        return UniformCheck(Uniformity.UNIFORM_AND_BALANCED, None, deviation)
    return UniformCheck(Uniformity.UNIFORM_ONLY, worst, deviation)
