"""Reduced-precision floating-point formats emulated on top of binary64.

A value "at precision p" is an ordinary Python float whose significand fits
in ``p`` bits and whose magnitude lies in the range implied by the format's
exponent width. Every operation computes the exact result as an
error-free pair (or an exact residual sign for div/sqrt/fma) and rounds it
once, so there is never any double rounding.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .eft import fma, fma_residual_sign, twoprod, twosum


class PrecisionError(ArithmeticError):
    """Base class for arithmetic failures at emulated precision."""


class RangeOverflowError(PrecisionError, OverflowError):
    pass


class DivideByZeroError(PrecisionError, ZeroDivisionError):
    pass


class DomainError(PrecisionError, ValueError):
    pass


_SPEC_RE = re.compile(r"^s(\d+)e(\d+)$")


@dataclass(frozen=True, order=True)
class PrecisionSpec:
    """Significand width (including the implicit bit) and exponent width."""

    significand_bits: int
    exponent_bits: int

    def __post_init__(self):
        if not 2 <= self.significand_bits <= 53:
            raise ValueError(f"significand_bits must be in 2..53, got {self.significand_bits}")
        if not 2 <= self.exponent_bits <= 11:
            raise ValueError(f"exponent_bits must be in 2..11, got {self.exponent_bits}")

    @classmethod
    def parse(cls, text: str) -> "PrecisionSpec":
        m = _SPEC_RE.match(text.strip())
        if not m:
            raise ValueError(f"bad precision {text!r}, expected sNNeMM (e.g. s24e8)")
        return cls(int(m.group(1)), int(m.group(2)))

    def __str__(self) -> str:
        return f"s{self.significand_bits}e{self.exponent_bits}"

    @property
    def emax(self) -> int:
        return (1 << (self.exponent_bits - 1)) - 1

    @property
    def emin(self) -> int:
        return 1 - self.emax

    @property
    def min_grid_exp(self) -> int:
        """Exponent of the subnormal spacing, 2**(emin - p + 1)."""
        return self.emin - self.significand_bits + 1

    @property
    def max_finite(self) -> float:
        p = self.significand_bits
        return math.ldexp(2.0 - math.ldexp(1.0, 1 - p), self.emax)

    @property
    def digits_cap(self) -> float:
        """Decimal digits carried by the significand, log10(2**p)."""
        return self.significand_bits * math.log10(2.0)


BINARY16 = PrecisionSpec(11, 5)
BINARY32 = PrecisionSpec(24, 8)
BINARY64 = PrecisionSpec(53, 11)

DEFAULT_LATTICE = (BINARY16, BINARY32, BINARY64)


def stepped_lattice(step: int = 8, exponent_bits: int = 11, start: int = 5) -> list[PrecisionSpec]:
    """Uniform significand grid ``start, start+step, ...`` capped by 53."""
    widths = list(range(start, 53, step))
    if not widths or widths[-1] != 53:
        widths.append(53)
    return [PrecisionSpec(w, exponent_bits) for w in widths]


def parse_lattice(text: str) -> list[PrecisionSpec]:
    specs = [PrecisionSpec.parse(t) for t in text.split(",") if t.strip()]
    if not specs:
        raise ValueError("empty lattice")
    return specs


class RandomStream:
    """A stream of fair random bits drawn from its own numpy generator.

    Words are fetched in blocks; ``draws`` counts bits handed out.
    """

    _BLOCK = 64

    def __init__(self, seed_seq: np.random.SeedSequence | int):
        if not isinstance(seed_seq, np.random.SeedSequence):
            seed_seq = np.random.SeedSequence(seed_seq)
        self._bitgen = np.random.PCG64(seed_seq)
        self._word = 0
        self._left = 0
        self._words: list[int] = []
        self.draws = 0

    def bit(self) -> int:
        if self._left == 0:
            if not self._words:
                self._words = self._bitgen.random_raw(self._BLOCK).tolist()
                self._words.reverse()
            self._word = self._words.pop()
            self._left = 64
        b = self._word & 1
        self._word >>= 1
        self._left -= 1
        self.draws += 1
        return b


def spawn_streams(seed: int, n: int = 3) -> list[RandomStream]:
    """``n`` statistically independent streams derived from one master seed."""
    return [RandomStream(s) for s in np.random.SeedSequence(seed).spawn(n)]


class RoundingMode(enum.Enum):
    NEAREST_EVEN = "nearest-even"
    RANDOM_UP_DOWN = "random-up-down"


@dataclass(frozen=True)
class RoundingDirective:
    mode: RoundingMode = RoundingMode.NEAREST_EVEN
    stream: RandomStream | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.mode is RoundingMode.RANDOM_UP_DOWN and self.stream is None:
            raise ValueError("random rounding needs a RandomStream")


NEAREST = RoundingDirective()


def random_updown(stream: RandomStream) -> RoundingDirective:
    return RoundingDirective(RoundingMode.RANDOM_UP_DOWN, stream)


@dataclass
class FPFlags:
    """Sticky status flags."""

    underflow: bool = False
    inexact: bool = False


def _grid(t: float, spec: PrecisionSpec) -> tuple[int, int, float]:
    """Split t as (f + frac) * 2**q on the p-bit grid around t (f = floor)."""
    _, e = math.frexp(t)
    q = max(e - spec.significand_bits, spec.min_grid_exp)
    scaled = math.ldexp(t, -q)
    f = math.floor(scaled)
    return f, q, scaled - f


def _build(f: int, q: int, spec: PrecisionSpec, negative_zero: bool = False) -> float:
    try:
        v = math.ldexp(float(f), q)
    except OverflowError:
        raise RangeOverflowError(f"result exceeds the range of {spec}") from None
    if abs(v) > spec.max_finite:
        raise RangeOverflowError(f"result {v!r} exceeds the range of {spec}")
    if v == 0.0 and negative_zero:
        return -0.0
    return v


def _round_pair(
    hi: float,
    lo_sign: int,
    spec: PrecisionSpec,
    directive: RoundingDirective,
    flags: FPFlags | None,
) -> float:
    """Round the exact value hi + delta, where delta has sign ``lo_sign`` and
    magnitude at most half a binary64 ulp of hi.

    Because delta is smaller than any p-bit spacing, only its sign matters:
    it decides the side when hi sits exactly on a grid point or midpoint.
    """
    if not math.isfinite(hi):
        raise RangeOverflowError(f"result exceeds the range of {spec}")
    f, q, frac = _grid(hi, spec)
    neg_zero = math.copysign(1.0, hi) < 0
    if frac == 0.0:
        if lo_sign == 0:
            if abs(hi) > spec.max_finite:
                raise RangeOverflowError(f"value {hi!r} exceeds the range of {spec}")
            return hi
        # hi is on the grid; the other neighbour lies one grid step toward delta.
        if directive.mode is RoundingMode.NEAREST_EVEN or not directive.stream.bit():
            result = _build(f, q, spec, neg_zero)
        else:
            step = math.nextafter(hi, math.copysign(math.inf, lo_sign))
            f2, q2, frac2 = _grid(step, spec)
            result = _build(f2 + (1 if lo_sign > 0 and frac2 != 0.0 else 0), q2, spec, neg_zero)
    else:
        if directive.mode is RoundingMode.NEAREST_EVEN:
            if frac > 0.5 or (frac == 0.5 and lo_sign > 0):
                up = True
            elif frac < 0.5 or lo_sign < 0:
                up = False
            else:
                up = f % 2 != 0
        else:
            up = bool(directive.stream.bit())
        result = _build(f + 1 if up else f, q, spec, neg_zero)
    if flags is not None:
        flags.inexact = True
        if abs(hi) < math.ldexp(1.0, spec.emin):
            flags.underflow = True
    return result


def round_to_precision(
    x: float,
    spec: PrecisionSpec,
    directive: RoundingDirective = NEAREST,
    flags: FPFlags | None = None,
) -> float:
    """Round a finite binary64 value onto the ``spec`` grid.

    >>> round_to_precision(1.0 + 2.0**-11, BINARY16)
    1.0
    """
    x = float(x)
    if not math.isfinite(x):
        raise RangeOverflowError(f"non-finite value {x!r}")
    return _round_pair(x, 0, spec, directive, flags)


def floor_ceil(x: float, spec: PrecisionSpec) -> tuple[float, float]:
    """The two ``spec`` neighbours of x (equal when x is already exact)."""
    f, q, frac = _grid(float(x), spec)
    if frac == 0.0:
        return x, x
    return _build(f, q, spec), _build(f + 1, q, spec)


def is_exact(x: float, spec: PrecisionSpec) -> bool:
    return _grid(float(x), spec)[2] == 0.0 and abs(x) <= spec.max_finite


OPS = ("add", "sub", "mul", "div", "sqrt", "fma")
_ARITY = {"add": 2, "sub": 2, "mul": 2, "div": 2, "sqrt": 1, "fma": 3}


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


def exact_pair(op: str, operands: Sequence[float]) -> tuple[float, int]:
    """Nearest binary64 value to the exact result plus the sign of the remainder."""
    if op == "add":
        s, e = twosum(operands[0], operands[1])
        return s, _sign(e)
    if op == "sub":
        s, e = twosum(operands[0], -operands[1])
        return s, _sign(e)
    if op == "mul":
        p, e = twoprod(operands[0], operands[1])
        return p, _sign(e)
    if op == "div":
        a, b = operands
        if b == 0.0:
            raise DivideByZeroError("division by zero")
        qt = a / b
        if not math.isfinite(qt):
            return qt, 0
        # residual a - q*b via exact fma; its sign (times sign b) places a/b relative to q
        return qt, fma_residual_sign(-qt, b, a) * _sign(b)
    if op == "sqrt":
        (a,) = operands
        if a < 0:
            raise DomainError(f"sqrt of negative value {a!r}")
        s = math.sqrt(a)
        return s, fma_residual_sign(-s, s, a)
    if op == "fma":
        a, b, c = operands
        r = fma(a, b, c)
        if not math.isfinite(r):
            return r, 0
        # exact a*b + c - r: (a*b + c) + (-r) needs a 3-term exact sum
        na, da = a.as_integer_ratio()
        nb, db = b.as_integer_ratio()
        nc, dc = c.as_integer_ratio()
        nr, dr = r.as_integer_ratio()
        num = (na * nb * dc + nc * da * db) * dr - nr * da * db * dc
        return r, (num > 0) - (num < 0)
    raise ValueError(f"unknown operation {op!r}")


def prec_arith(
    op: str,
    operands: Sequence[float],
    spec: PrecisionSpec,
    directive: RoundingDirective = NEAREST,
    flags: FPFlags | None = None,
) -> float:
    """Apply ``op`` to the operands and round the real result once to ``spec``.

    >>> prec_arith("div", (1.0, 3.0), BINARY32)
    0.3333333432674408
    """
    if op not in _ARITY:
        raise ValueError(f"unknown operation {op!r}")
    if len(operands) != _ARITY[op]:
        raise ValueError(f"{op} takes {_ARITY[op]} operands, got {len(operands)}")
    operands = tuple(float(v) for v in operands)
    hi, lo_sign = exact_pair(op, operands)
    return _round_pair(hi, lo_sign, spec, directive, flags)


def round_array(
    x: np.ndarray,
    spec: PrecisionSpec,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Elementwise rounding of binary64 data to ``spec``.

    Nearest-even by default; with ``rng`` each inexact element goes to its
    lower or upper neighbour with probability 1/2 (one bit is drawn per
    element, exact or not).
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise RangeOverflowError("non-finite value in array")
    if spec.significand_bits == 53 and spec.exponent_bits == 11:
        return x.copy()
    _, e = np.frexp(x)
    q = np.maximum(e - spec.significand_bits, spec.min_grid_exp)
    scaled = np.ldexp(x, -q)
    if rng is None:
        r = np.rint(scaled)
    else:
        f = np.floor(scaled)
        bits = rng.integers(0, 2, size=x.shape)
        r = f + ((scaled != f) & (bits == 1))
    with np.errstate(over="ignore"):
        out = np.ldexp(r, q)
    if np.any(np.abs(out) > spec.max_finite):
        raise RangeOverflowError(f"array value exceeds the range of {spec}")
    return out
