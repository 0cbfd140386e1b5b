"""Exact-rational reference implementations used to check the library.

Nothing here imports from minprec's arithmetic: rounding is done on
``Fraction`` values with integer floor only.
"""

from __future__ import annotations

import math
from fractions import Fraction

TWO = Fraction(2)


def binade(v: Fraction) -> int:
    """e with 2**e <= |v| < 2**(e+1)."""
    a = abs(v)
    e = a.numerator.bit_length() - a.denominator.bit_length()
    if TWO**e > a:
        e -= 1
    elif TWO ** (e + 1) <= a:
        e += 1
    return e


def neighbours(v: Fraction, p: int, ebits: int) -> tuple[Fraction, Fraction]:
    """Largest p-bit value <= v and smallest >= v, with gradual underflow."""
    if v == 0:
        return Fraction(0), Fraction(0)
    emin = 2 - 2 ** (ebits - 1)
    q = max(binade(v), emin) - (p - 1)
    unit = TWO**q
    f = math.floor(v / unit)
    lo = f * unit
    if lo == v:
        return lo, lo
    return lo, (f + 1) * unit


def round_nearest_even(v: Fraction, p: int, ebits: int) -> Fraction:
    lo, hi = neighbours(v, p, ebits)
    if lo == hi:
        return lo
    dlo, dhi = v - lo, hi - v
    if dlo < dhi:
        return lo
    if dhi < dlo:
        return hi
    emin = 2 - 2 ** (ebits - 1)
    q = max(binade(v), emin) - (p - 1)
    return lo if (lo / TWO**q).numerator % 2 == 0 else hi


def exact(op: str, operands) -> Fraction:
    xs = [Fraction(x) for x in operands]
    if op == "add":
        return xs[0] + xs[1]
    if op == "sub":
        return xs[0] - xs[1]
    if op == "mul":
        return xs[0] * xs[1]
    if op == "div":
        return xs[0] / xs[1]
    if op == "fma":
        return xs[0] * xs[1] + xs[2]
    raise ValueError(op)


def sqrt_neighbours(a: float, p: int, ebits: int) -> tuple[Fraction, Fraction]:
    """p-bit neighbours of sqrt(a) found by exact squaring comparisons."""
    v = Fraction(a)
    if v == 0:
        return Fraction(0), Fraction(0)
    # integer square root with ~300 fractional bits below sqrt(v)
    k = 300 - binade(v) // 2
    approx = Fraction(math.isqrt(math.floor(v * TWO ** (2 * k)))) / TWO**k
    lo, _ = neighbours(approx, p, ebits)
    if lo * lo == v:
        return lo, lo
    _, up = neighbours(lo + Fraction(1, 2**2000), p, ebits)
    assert lo * lo < v < up * up
    return lo, up


def sqrt_nearest(a: float, p: int, ebits: int) -> Fraction:
    lo, hi = sqrt_neighbours(a, p, ebits)
    if lo == hi:
        return lo
    mid = (lo + hi) / 2
    v = Fraction(a)
    if mid * mid < v:
        return hi
    if mid * mid > v:
        return lo
    raise AssertionError("sqrt of a float cannot sit exactly on a midpoint")
