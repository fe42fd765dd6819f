import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedwagg.fixedpoint import (
    FixedPointCodec,
    FixedPointOverflowError,
    ScaledResidue,
    ScaleRangeError,
    encode_at_scale,
    round_half_even,
    to_signed,
)

from helpers import KEY512_P, KEY512_Q

N = KEY512_P * KEY512_Q
F = 27


@pytest.fixture(scope="module")
def codec():
    return FixedPointCodec(modulus=N)


def test_encode_zero(codec):
    assert codec.encode(0).value == 0
    assert codec.encode(0).scale_exp == F


def test_encode_three_halves(codec):
    assert codec.encode(1.5).value == 201326592  # 1.5 * 2^27


def test_encode_negative_convention(codec):
    assert codec.encode(-1.0).value == N - 2**27


def test_decode_dyadic_roundtrip(codec):
    assert codec.decode(codec.encode(3.25)) == 3.25


def test_decode_zero(codec):
    assert codec.decode(ScaledResidue(0, F)) == 0.0


def test_decode_tenth_against_integer_oracle(codec):
    # independent oracle: round-to-even of 0.1 * 2^27 computed over exact rationals
    tenth = Fraction(1, 10)
    expected = round_half_even((tenth * 2**F).numerator, (tenth * 2**F).denominator)
    got = codec.encode(0.1)
    assert abs(got.value - expected) <= 1  # float 0.1 vs exact 1/10 differ below 2^-27
    assert abs(codec.decode(got) - 0.1) <= 2**-F


def test_rescale_product_scale(codec):
    two_sq_scale = codec.encode(2.0, scale_exp=54)
    down = codec.rescale(two_sq_scale, F)
    assert down == codec.encode(2.0)


def test_rescale_identity(codec):
    x = codec.encode(1.25)
    assert codec.rescale(x, x.scale_exp) is x


def test_rescale_preserves_sign(codec):
    # oracle: -1.5 at scale 54 is N - 1.5*2^54; dividing by 2^27 keeps the sign
    high = codec.encode(-1.5, scale_exp=54)
    assert high.value == N - 3 * 2**53
    down = codec.rescale(high, F)
    assert down.value == N - 3 * 2**26
    assert codec.decode(down) == -1.5


def test_rescale_up_rejected(codec):
    with pytest.raises(ScaleRangeError):
        codec.rescale(codec.encode(1.0), F + 1)


def test_encode_overflow(codec):
    with pytest.raises(FixedPointOverflowError):
        codec.encode(2.0**17)
    codec.encode(2.0**17 - 1)  # strictly inside the range is fine


def test_scale_exp_range(codec):
    with pytest.raises(ScaleRangeError):
        codec.decode(ScaledResidue(1, 2**15))


def test_codec_requires_slack():
    with pytest.raises(ValueError):
        FixedPointCodec(modulus=2**64 - 59)  # far too small for 44-bit payloads
    FixedPointCodec(modulus=2**64 - 59, integer_bits=8, fraction_bits=8,
                    slack_bits=16)


@settings(max_examples=300, deadline=None)
@given(st.floats(min_value=-(2.0**17) + 1, max_value=2.0**17 - 1,
                 allow_nan=False, allow_infinity=False))
def test_roundtrip_within_half_ulp(x):
    codec = FixedPointCodec(modulus=N)
    assert abs(codec.decode(codec.encode(x)) - x) <= 2**-F


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=2.0**-20, max_value=2.0**17 - 1,
                 allow_nan=False, allow_infinity=False))
def test_sign_convention(x):
    codec = FixedPointCodec(modulus=N)
    positive = codec.encode(x)
    mirrored = ScaledResidue((N - positive.value) % N, F)
    assert codec.decode(mirrored) == -codec.decode(positive)


def test_homomorphic_sum_consistency():
    codec = FixedPointCodec(modulus=N)
    values = [math.sin(i) * 3.0 for i in range(500)]
    acc = 0
    for v in values:
        acc = (acc + codec.encode(v).value) % N
    decoded = codec.decode(ScaledResidue(acc, F))
    assert abs(decoded - sum(values)) <= len(values) * 2**-F


def test_encode_at_scale_headroom():
    r = encode_at_scale(Fraction(3, 2), 100, N)
    assert r.scale_exp == 100 and r.value == 3 * 2**99
    with pytest.raises(FixedPointOverflowError):
        encode_at_scale(Fraction(1), 520, N)


def test_to_signed_halves():
    assert to_signed(5, 77) == 5
    assert to_signed(76, 77) == -1
    assert to_signed(38, 77) == 38
    assert to_signed(39, 77) == -38
