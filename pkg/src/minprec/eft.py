"""Error-free transformations and the compensated dot product (Dot2).

``twosum`` and ``twoprod`` return the rounded result together with its exact
rounding error, so ``result + error`` equals the real-valued operation.
``dot2`` accumulates those pairs to get a dot product that is as accurate as
if it were computed in twice the working precision and rounded once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, NamedTuple, Sequence

import numpy as np

HAVE_HARDWARE_FMA = hasattr(math, "fma")

# Veltkamp splitter for binary64: 2^27 + 1.
_SPLITTER = 134217729.0
# Beyond these magnitudes the split overflows or the error term underflows.
_SPLIT_MAX = 2.0**995
_PROD_MIN = 2.0**-969


class EftPair(NamedTuple):
    result: float
    error: float


def _ratio(x: float) -> tuple[int, int]:
    return x.as_integer_ratio()


def _exact_fma(a: float, b: float, c: float) -> tuple[int, int]:
    """Exact a*b + c as a (numerator, denominator) pair, denominator > 0."""
    na, da = _ratio(a)
    nb, db = _ratio(b)
    nc, dc = _ratio(c)
    return na * nb * dc + nc * da * db, da * db * dc


def fma(a: float, b: float, c: float) -> float:
    """Correctly rounded ``a*b + c`` with a single rounding.

    Uses the hardware instruction when the interpreter exposes it, otherwise
    exact integer arithmetic followed by one correctly rounded division.
    """
    if HAVE_HARDWARE_FMA:
        return math.fma(a, b, c)
    if not (math.isfinite(a) and math.isfinite(b) and math.isfinite(c)):
        return a * b + c
    num, den = _exact_fma(a, b, c)
    if num == 0:
        prod_negative = (math.copysign(1.0, a) * math.copysign(1.0, b)) < 0
        if a * b == 0 and c == 0 and prod_negative and math.copysign(1.0, c) < 0:
            return -0.0
        return 0.0
    try:
        return num / den
    except OverflowError:
        return math.copysign(math.inf, num)


def fma_residual_sign(a: float, b: float, c: float) -> int:
    """Sign (-1, 0, 1) of the exact value ``a*b + c``; never rounds."""
    num, _ = _exact_fma(a, b, c)
    return (num > 0) - (num < 0)


def twosum(a: float, b: float) -> EftPair:
    """Knuth's branch-free TwoSum: six flops, exact for any non-overflowing pair."""
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return EftPair(s, err)


def fast_twosum(a: float, b: float) -> EftPair:
    """Dekker's FastTwoSum; requires |a| >= |b| (or a == 0)."""
    s = a + b
    return EftPair(s, b - (s - a))


def split(a: float) -> tuple[float, float]:
    """Veltkamp split of ``a`` into two non-overlapping 26-bit halves."""
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def _dekker_twoprod(a: float, b: float) -> EftPair:
    p = a * b
    ah, al = split(a)
    bh, bl = split(b)
    err = al * bl - (((p - ah * bh) - al * bh) - ah * bl)
    return EftPair(p, err)


def twoprod(a: float, b: float) -> EftPair:
    """Product with its exact error term, ``error = fma(a, b, -result)``.

    Without a hardware fma the Dekker/Veltkamp split is used; inputs outside
    the split's safe range fall back to the exact fma.
    """
    p = a * b
    if HAVE_HARDWARE_FMA:
        return EftPair(p, math.fma(a, b, -p))
    ap = abs(p)
    if (ap >= _PROD_MIN and abs(a) < _SPLIT_MAX and abs(b) < _SPLIT_MAX) or ap == 0.0:
        if ap == 0.0:
            return EftPair(p, 0.0)
        return _dekker_twoprod(a, b)
    if not math.isfinite(p):
        return EftPair(p, 0.0)
    return EftPair(p, fma(a, b, -p))


def twosum_array(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def twoprod_array(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized split-based TwoProduct; callers keep inputs in the safe range."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    p = a * b
    ca = _SPLITTER * a
    ah = ca - (ca - a)
    al = a - ah
    cb = _SPLITTER * b
    bh = cb - (cb - b)
    bl = b - bh
    return p, al * bl - (((p - ah * bh) - al * bh) - ah * bl)


def naive_dot(x: Sequence[float], y: Sequence[float]) -> float:
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} != {len(y)}")
    s = 0.0
    for xi, yi in zip(x, y):
        s += float(xi) * float(yi)
    return s


def dot2(x: Sequence[float], y: Sequence[float]) -> float:
    """Compensated dot product (Ogita, Rump and Oishi's Dot2).

    Products and partial sums are split into result and error; the errors
    are collected in a separate compensation term that is added at the end.
    Accumulation runs strictly left to right.

    >>> dot2([1.0, 1.0, 1.0], [1.0, 1.0, 1.0])
    3.0
    """
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} != {len(y)}")
    if len(x) == 0:
        return 0.0
    p, s = twoprod(float(x[0]), float(y[0]))
    for i in range(1, len(x)):
        h, r = twoprod(float(x[i]), float(y[i]))
        p, q = twosum(p, h)
        s = s + (q + r)
    return p + s


def exact_dot(x: Sequence[float], y: Sequence[float]) -> Fraction:
    return sum((Fraction(float(a)) * Fraction(float(b)) for a, b in zip(x, y)), Fraction(0))


def dot_condition(x: Sequence[float], y: Sequence[float]) -> float:
    """Condition number 2 |x|^T |y| / |x^T y| of a dot product, computed exactly."""
    num = 2 * sum((abs(Fraction(float(a)) * Fraction(float(b))) for a, b in zip(x, y)), Fraction(0))
    den = abs(exact_dot(x, y))
    if den == 0:
        return math.inf
    return float(num / den)


def gen_ill_dot(n: int, cond: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectors whose dot product has condition number near ``cond``.

    The GenDot construction: the first half carries large exponents, the second
    half is chosen so that its terms cancel the running exact sum down to a
    value of order one.
    """
    if n < 6:
        raise ValueError("gen_ill_dot needs n >= 6")
    b = math.log2(cond)
    n2 = n // 2
    x = np.zeros(n)
    y = np.zeros(n)
    e = np.rint(rng.random(n2) * b / 2).astype(int)
    e[0] = round(b / 2) + 1
    e[n2 - 1] = 0
    x[:n2] = (2 * rng.random(n2) - 1) * np.exp2(e)
    y[:n2] = (2 * rng.random(n2) - 1) * np.exp2(e)
    e2 = np.rint(np.linspace(b / 2, 0, n - n2)).astype(int)
    acc = exact_dot(x[:n2], y[:n2])
    for k, i in enumerate(range(n2, n)):
        x[i] = (2 * rng.random() - 1) * 2.0 ** e2[k]
        target = Fraction((2 * rng.random() - 1) * 2.0 ** e2[k])
        y[i] = float((target - acc) / Fraction(x[i]))
        acc += Fraction(x[i]) * Fraction(y[i])
    perm = rng.permutation(n)
    return x[perm], y[perm]


@dataclass(frozen=True)
class AccuracyCheck:
    name: str
    worst_relative_error: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.worst_relative_error <= self.bound


class SubstitutionRejected(ValueError):
    pass


_SUBSTITUTES: dict[str, Callable[[Sequence[float], Sequence[float]], float]] = {}


def register_dot_substitute(
    name: str,
    kernel: Callable[[Sequence[float], Sequence[float]], float],
    required: "object",
    cases: Sequence[tuple[Sequence[float], Sequence[float]]],
) -> AccuracyCheck:
    """Register ``kernel`` as an accurate replacement for a dot product.

    The kernel is only accepted if, on every case, its error against the exact
    rational result is no worse than a correctly rounded result at the
    ``required`` precision (a PrecisionSpec) would be allowed, i.e. half an ulp
    relative: 2**-significand_bits.
    """
    bound = 2.0 ** -required.significand_bits  # type: ignore[attr-defined]
    worst = 0.0
    for x, y in cases:
        exact = exact_dot(x, y)
        got = Fraction(kernel(x, y))
        if exact == 0:
            rel = 0.0 if got == 0 else math.inf
        else:
            rel = float(abs(got - exact) / abs(exact))
        worst = max(worst, rel)
    check = AccuracyCheck(name, worst, bound)
    if not check.passed:
        raise SubstitutionRejected(
            f"{name}: relative error {worst:.3g} exceeds required-precision bound {bound:.3g}"
        )
    _SUBSTITUTES[name] = kernel
    return check


def dot_substitute(name: str) -> Callable[[Sequence[float], Sequence[float]], float]:
    return _SUBSTITUTES[name]
