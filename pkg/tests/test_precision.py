import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from minprec.eft import fma
from minprec.precision import (
    BINARY16,
    BINARY32,
    BINARY64,
    NEAREST,
    FPFlags,
    PrecisionSpec,
    RandomStream,
    RangeOverflowError,
    DivideByZeroError,
    DomainError,
    floor_ceil,
    is_exact,
    parse_lattice,
    prec_arith,
    random_updown,
    round_array,
    round_to_precision,
    spawn_streams,
    stepped_lattice,
)

finite = st.floats(allow_nan=False, allow_infinity=False, min_value=-1e300, max_value=1e300)
widths = st.integers(min_value=2, max_value=53)


def test_named_formats():
    assert (BINARY16.significand_bits, BINARY16.exponent_bits) == (11, 5)
    assert (BINARY32.significand_bits, BINARY32.exponent_bits) == (24, 8)
    assert (BINARY64.significand_bits, BINARY64.exponent_bits) == (53, 11)
    assert BINARY16.max_finite == 65504.0
    assert BINARY32.max_finite == float(np.finfo(np.float32).max)
    assert BINARY64.max_finite == float(np.finfo(np.float64).max)


@pytest.mark.parametrize("sig, exp", [(1, 8), (54, 11), (24, 1), (24, 12)])
def test_spec_bounds(sig, exp):
    with pytest.raises(ValueError):
        PrecisionSpec(sig, exp)


def test_spec_text_roundtrip():
    assert str(BINARY32) == "s24e8"
    assert PrecisionSpec.parse("s53e11") == BINARY64
    assert parse_lattice("s11e5,s24e8,s53e11") == [BINARY16, BINARY32, BINARY64]
    with pytest.raises(ValueError):
        PrecisionSpec.parse("f32")


def test_stepped_lattice():
    assert [s.significand_bits for s in stepped_lattice(8)] == [5, 13, 21, 29, 37, 45, 53]
    assert [s.significand_bits for s in stepped_lattice(16)] == [5, 21, 37, 53]


def test_round_examples():
    assert round_to_precision(1.0, BINARY16) == 1.0
    # halfway between 1 and 1 + 2**-10: ties to even
    assert round_to_precision(1.0 + 2.0**-11, BINARY16) == 1.0
    assert round_to_precision(math.pi, BINARY32) == 13176795 * 2.0**-22


def test_prec_arith_examples():
    assert prec_arith("add", (1.0, -1.0), BINARY32) == 0.0
    assert prec_arith("div", (1.0, 3.0), BINARY32) == 0.3333333432674407959
    assert prec_arith("add", (1e16, 1.0), BINARY64) == 1e16


def test_single_third_matches_numpy_float32():
    assert prec_arith("div", (1.0, 3.0), BINARY32) == float(np.float32(1) / np.float32(3))


def test_overflow_and_underflow():
    with pytest.raises(RangeOverflowError):
        round_to_precision(70000.0, BINARY16)
    # 65519 rounds down to 65504 (below the overflow threshold)
    assert round_to_precision(65519.0, BINARY16) == 65504.0
    with pytest.raises(RangeOverflowError):
        round_to_precision(65520.0, BINARY16)
    flags = FPFlags()
    tiny = 2.0**-24 * 0.75  # between 0 and the smallest binary16 subnormal
    assert round_to_precision(tiny, BINARY16, flags=flags) == 2.0**-24
    assert flags.underflow and flags.inexact
    flags = FPFlags()
    assert round_to_precision(2.0**-24, BINARY16, flags=flags) == 2.0**-24
    assert not flags.underflow


def test_arith_errors():
    with pytest.raises(DivideByZeroError):
        prec_arith("div", (1.0, 0.0), BINARY32)
    with pytest.raises(DomainError):
        prec_arith("sqrt", (-1.0,), BINARY32)
    with pytest.raises(RangeOverflowError):
        prec_arith("mul", (1e200, 1e200), BINARY64)
    with pytest.raises(RangeOverflowError):
        prec_arith("mul", (300.0, 300.0), BINARY16)
    with pytest.raises(ValueError):
        prec_arith("pow", (1.0, 2.0), BINARY32)


def test_signed_zero_preserved_at_double():
    r = prec_arith("add", (-0.0, -0.0), BINARY64)
    assert r == 0.0 and math.copysign(1.0, r) < 0
    r = prec_arith("mul", (-0.0, 5.0), BINARY32)
    assert math.copysign(1.0, r) < 0


@settings(max_examples=400, deadline=None)
@given(finite, widths)
def test_round_nearest_matches_oracle(x, p):
    spec = PrecisionSpec(p, 11)
    expected = oracle.round_nearest_even(Fraction(x), p, 11)
    if abs(expected) > Fraction(spec.max_finite):
        with pytest.raises(RangeOverflowError):
            round_to_precision(x, spec)
    else:
        assert Fraction(round_to_precision(x, spec)) == expected


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-6e4, max_value=6e4, allow_nan=False), st.sampled_from([BINARY16, BINARY32]))
def test_round_small_exponent_range(x, spec):
    expected = oracle.round_nearest_even(Fraction(x), spec.significand_bits, spec.exponent_bits)
    if abs(expected) > Fraction(spec.max_finite):
        with pytest.raises(RangeOverflowError):
            round_to_precision(x, spec)
    else:
        got = round_to_precision(x, spec)
        assert Fraction(got) == expected
        if spec == BINARY32:
            assert got == float(np.float32(x))


@settings(max_examples=300, deadline=None)
@given(finite, widths, st.integers(0, 2**32))
def test_random_rounding_picks_a_neighbour(x, p, seed):
    spec = PrecisionSpec(p, 11)
    lo, hi = oracle.neighbours(Fraction(x), p, 11)
    if hi > Fraction(spec.max_finite) or lo < -Fraction(spec.max_finite):
        return
    stream = RandomStream(seed)
    got = Fraction(round_to_precision(x, spec, random_updown(stream)))
    assert got in (lo, hi)
    assert stream.draws == (0 if lo == hi else 1)


def test_random_rounding_frequency():
    stream = spawn_streams(2024)[0]
    d = random_updown(stream)
    lo, hi = floor_ceil(math.pi, BINARY32)
    counts = {lo: 0, hi: 0}
    for _ in range(10_000):
        counts[round_to_precision(math.pi, BINARY32, d)] += 1
    assert sum(counts.values()) == 10_000
    assert 0.45 <= counts[lo] / 10_000 <= 0.55
    assert stream.draws == 10_000


def test_exact_results_consume_no_randomness():
    stream = RandomStream(7)
    d = random_updown(stream)
    assert prec_arith("add", (2.0, 2.0), BINARY64, d) == 4.0
    assert prec_arith("mul", (0.5, 3.0), BINARY16, d) == 1.5
    assert stream.draws == 0


@pytest.mark.parametrize("op", ["add", "sub", "mul", "div", "fma"])
@settings(max_examples=150, deadline=None)
@given(data=st.data())
def test_prec_arith_matches_oracle(op, data):
    p = data.draw(widths)
    spec = PrecisionSpec(p, 11)
    arity = 3 if op == "fma" else 2
    xs = [round_to_precision(data.draw(st.floats(-1e100, 1e100)), spec) for _ in range(arity)]
    if op == "div" and xs[1] == 0:
        return
    v = oracle.exact(op, xs)
    expected = oracle.round_nearest_even(v, p, 11)
    if abs(expected) > Fraction(spec.max_finite):
        with pytest.raises(RangeOverflowError):
            prec_arith(op, xs, spec)
    else:
        assert Fraction(prec_arith(op, xs, spec)) == expected


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0, max_value=1e300), widths)
def test_sqrt_matches_oracle(a, p):
    spec = PrecisionSpec(p, 11)
    a = round_to_precision(a, spec)
    assert Fraction(prec_arith("sqrt", (a,), spec)) == oracle.sqrt_nearest(a, p, 11)


def test_fma_fallback_is_correctly_rounded():
    rng = np.random.default_rng(5)
    for _ in range(2000):
        a, b, c = rng.standard_normal(3) * np.exp2(rng.integers(-60, 60, 3))
        expected = oracle.round_nearest_even(oracle.exact("fma", (a, b, c)), 53, 11)
        assert Fraction(fma(float(a), float(b), float(c))) == expected


def test_fma_subnormal_result():
    a = 2.0**-600
    b = 2.0**-500
    assert fma(a, b, 0.0) == 0.0
    assert fma(2.0**-537, 2.0**-537, 0.0) == 2.0**-1074


def test_monotone_in_precision():
    rng = np.random.default_rng(11)
    for _ in range(500):
        a, b = (float(v) for v in rng.uniform(-10, 10, 2))
        for op in ("add", "mul", "div"):
            if op == "div" and b == 0:
                continue
            v = oracle.exact(op, (a, b))
            errs = [abs(Fraction(prec_arith(op, (a, b), s)) - v) for s in (BINARY16, BINARY32, BINARY64)]
            assert errs[0] >= errs[1] >= errs[2]


def test_round_array_matches_scalar():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(5000) * np.exp2(rng.integers(-30, 30, 5000))
    for spec in (BINARY16, BINARY32, PrecisionSpec(37, 11), BINARY64):
        xs = x if spec != BINARY16 else x[np.abs(x) < 6e4]
        got = round_array(xs, spec)
        assert all(g == round_to_precision(float(v), spec) for g, v in zip(got, xs))


def test_round_array_random_and_overflow():
    rng = np.random.default_rng(0)
    x = rng.uniform(1, 2, 4000)
    out = round_array(x, BINARY32, rng=np.random.default_rng(1))
    lo = np.array([floor_ceil(float(v), BINARY32)[0] for v in x])
    hi = np.array([floor_ceil(float(v), BINARY32)[1] for v in x])
    assert np.all((out == lo) | (out == hi))
    frac_up = np.mean(out == hi)
    assert 0.45 < frac_up < 0.55
    with pytest.raises(RangeOverflowError):
        round_array(np.array([1e6]), BINARY16)


def test_is_exact():
    assert is_exact(1.5, BINARY16)
    assert not is_exact(0.1, BINARY16)
    assert is_exact(0.1, BINARY64)
