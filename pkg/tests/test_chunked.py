import math
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from minprec.chunked import ChunkedF64, decode_at_level, encode


def bits(x):
    return struct.unpack(">Q", struct.pack(">d", x))[0]


def test_layout_of_one():
    assert encode(1.0).chunks == (0x3FF0, 0, 0, 0)
    assert encode(0.0).chunks == (0, 0, 0, 0)
    assert encode(-2.0).chunks == (0xC000, 0, 0, 0)


def test_pi_levels():
    c = encode(math.pi)
    assert bits(decode_at_level(c, 4)) == bits(math.pi)
    assert bits(decode_at_level(c, 2)) == 0x400921FB00000000
    assert decode_at_level(encode(1.0), 1) == 1.0


def test_level_range():
    with pytest.raises(ValueError):
        decode_at_level(encode(1.0), 0)
    with pytest.raises(ValueError):
        decode_at_level(encode(1.0), 5)
    with pytest.raises(ValueError):
        ChunkedF64((1, 2, 3))


def test_json_words():
    c = encode(math.pi)
    assert c.to_json() == ["0x4009", "0x21FB", "0x5444", "0x2D18"]
    assert ChunkedF64.from_json(c.to_json()) == c


def test_special_values_roundtrip():
    for x in (math.inf, -math.inf, -0.0, 5e-324):
        assert bits(decode_at_level(encode(x), 4)) == bits(x)
    nan = decode_at_level(encode(math.nan), 4)
    assert math.isnan(nan)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_monotone_refinement(x):
    c = encode(x)
    errs = [abs(x - decode_at_level(c, k)) for k in (1, 2, 3, 4)]
    assert errs[0] >= errs[1] >= errs[2] >= errs[3] == 0.0
    # zero-fill truncates toward zero
    assert all(abs(decode_at_level(c, k)) <= abs(x) for k in (1, 2, 3))


def test_truncation_bound():
    rng = np.random.default_rng(8)
    xs = rng.standard_normal(20000) * np.exp2(rng.integers(-300, 300, 20000))
    for k in (1, 2, 3):
        kept_fraction_bits = 16 * k - 12
        bound = 2.0**-kept_fraction_bits
        for x in xs:
            x = float(x)
            assert abs(x - decode_at_level(encode(x), k)) / abs(x) < bound


def test_truncation_bound_is_tight():
    # all dropped bits set: error approaches one unit of the last kept bit
    x = struct.unpack(">d", struct.pack(">Q", 0x3FF0_FFFF_FFFF_FFFF))[0]
    rel = abs(x - decode_at_level(encode(x), 1)) / x
    assert rel > 2.0 ** -(16 - 12 + 1)
