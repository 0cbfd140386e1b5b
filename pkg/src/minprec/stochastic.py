"""Discrete Stochastic Arithmetic with three randomly rounded samples.

Every operation is carried out three times, each sample on its own random
stream and rounded up or down at random. The spread of the samples gives a
95% confidence estimate of the number of exact significant digits (the
CESTAC estimator with Student's t at two degrees of freedom).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .precision import (
    BINARY64,
    DivideByZeroError,
    PrecisionSpec,
    RandomStream,
    is_exact,
    prec_arith,
    random_updown,
    round_to_precision,
    spawn_streams,
)

# Student t 97.5% quantile, 2 degrees of freedom
TAU_95 = 4.302653
SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class StochasticValue:
    samples: tuple[float, float, float]
    prec: PrecisionSpec

    def __post_init__(self):
        if len(self.samples) != 3:
            raise ValueError(f"a stochastic value has exactly 3 samples, got {len(self.samples)}")
        for s in self.samples:
            if not is_exact(s, self.prec):
                raise ValueError(f"sample {s!r} is not representable at {self.prec}")

    @classmethod
    def const(cls, x: float, prec: PrecisionSpec = BINARY64) -> "StochasticValue":
        v = round_to_precision(float(x), prec)
        return cls((v, v, v), prec)

    @property
    def mean(self) -> float:
        return math.fsum(self.samples) / 3.0


@dataclass(frozen=True)
class DigitEstimate:
    digits: float
    is_computational_zero: bool


@dataclass(frozen=True)
class InstabilityEvent:
    kind: str
    op: str
    statement: int | None = None
    detail: str = ""


class DSAContext:
    """Owns the three rounding streams of one stochastic evaluation."""

    def __init__(self, seed: int, prec: PrecisionSpec = BINARY64):
        self.seed = seed
        self.prec = prec
        self.streams: list[RandomStream] = spawn_streams(seed, 3)
        self._directives = [random_updown(s) for s in self.streams]
        self.events: list[InstabilityEvent] = []
        self.statement: int | None = None

    def const(self, x: float) -> StochasticValue:
        return StochasticValue.const(x, self.prec)

    def record(self, kind: str, op: str, detail: str = "") -> None:
        self.events.append(InstabilityEvent(kind, op, self.statement, detail))


def sto_arith(op: str, operands: Sequence[StochasticValue], ctx: DSAContext) -> StochasticValue:
    """Sample-wise ``prec_arith`` with random rounding, one stream per sample.

    Instabilities (division by a computational zero, product of two
    computational zeros, cancellation down to noise) are recorded on ``ctx``
    rather than raised.
    """
    prec = operands[0].prec
    if any(v.prec != prec for v in operands):
        raise ValueError("operands must share one precision")
    if op == "div":
        divisor = operands[1]
        if any(s == 0.0 for s in divisor.samples):
            ctx.record("unstable-division", op, "divisor has a zero sample")
            raise DivideByZeroError("division by a stochastic zero")
        if estimate_digits(divisor).is_computational_zero:
            ctx.record("unstable-division", op, "divisor is a computational zero")
    elif op == "mul":
        if all(estimate_digits(v).is_computational_zero for v in operands):
            ctx.record("unstable-multiplication", op)
    samples = tuple(
        prec_arith(op, [v.samples[i] for v in operands], prec, ctx._directives[i]) for i in range(3)
    )
    result = StochasticValue(samples, prec)
    if op in ("add", "sub", "fma"):
        est = estimate_digits(result)
        if est.is_computational_zero and any(s != 0.0 for s in samples):
            if not any(estimate_digits(v).is_computational_zero for v in operands):
                ctx.record("cancellation", op, "result lost all significant digits")
    return result


def sto_neg(v: StochasticValue) -> StochasticValue:
    return StochasticValue(tuple(-s for s in v.samples), v.prec)


def sto_abs(v: StochasticValue) -> StochasticValue:
    return StochasticValue(tuple(abs(s) for s in v.samples), v.prec)


def estimate_digits(v: StochasticValue) -> DigitEstimate:
    """Significant decimal digits common to the three samples, at 95% confidence.

    With mean m and sample standard deviation sigma,
    C = log10(|m| * sqrt(3) / (sigma * tau)), tau the Student t quantile.
    """
    cap = v.prec.digits_cap
    xs = v.samples
    if all(s == 0.0 for s in xs):
        return DigitEstimate(0.0, True)
    if xs[0] == xs[1] == xs[2]:
        return DigitEstimate(cap, False)
    # power-of-two scaling is exact and keeps the squares out of underflow
    shift = -math.frexp(max(abs(x) for x in xs))[1]
    a, b, c = (math.ldexp(x, shift) for x in xs)
    m = math.fsum((a, b, c)) / 3.0
    # sample variance from pairwise differences, no cancellation against the mean
    var = math.fsum(((a - b) ** 2, (b - c) ** 2, (a - c) ** 2)) / 6.0
    if m == 0.0:
        return DigitEstimate(0.0, True)
    c = math.log10(abs(m) * SQRT3 / (math.sqrt(var) * TAU_95))
    if c <= 0.0:
        return DigitEstimate(0.0, True)
    return DigitEstimate(min(c, cap), False)


def common_digits(a: float, b: float) -> float:
    """Decimal digits on which a and b agree, log10(|mean| / |a - b|).

    >>> round(common_digits(1.0, 1.001), 3)
    3.0
    """
    cap = BINARY64.digits_cap
    if a == b:
        return cap
    if a == -b or a == 0.0 or b == 0.0:
        return 0.0
    diff = abs(a - b)
    mid = abs(a / 2 + b / 2)
    if diff == 0.0 or math.isinf(diff):
        return 0.0 if math.isinf(diff) else cap
    return min(cap, max(0.0, math.log10(mid / diff)))


def format_significant(x: float, digits: float) -> str:
    """Render x with only its estimated significant digits."""
    if digits <= 0:
        return "@.0"
    n = max(1, int(math.floor(digits)))
    return f"{x:.{n - 1}e}"

