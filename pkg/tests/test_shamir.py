from collections import Counter
from itertools import combinations

import pytest

from fedwagg.shamir import (
    FIELD_PRIME,
    InsufficientSharesError,
    ParameterError,
    ShamirShare,
    draw_seed,
    reconstruct,
    share,
)

from helpers import drbg


class StubRng:
    """Feeds preset polynomial coefficients into share()."""

    def __init__(self, values):
        self.values = list(values)

    def randbelow(self, bound):
        return self.values.pop(0)


def test_worked_example_gf97():
    shares = share(5, t=2, n=3, rng=StubRng([3]), field_prime=97)
    assert [(s.index, s.value) for s in shares] == [(1, 8), (2, 11), (3, 14)]


def test_worked_reconstruction_gf97():
    shares = share(5, t=2, n=3, rng=StubRng([3]), field_prime=97)
    assert reconstruct([shares[0], shares[2]]) == 5


def test_constant_polynomial_t1():
    shares = share(42, t=1, n=3, rng=drbg("t1"))
    assert all(s.value == 42 for s in shares)


def test_zero_secret():
    rng = drbg("zero")
    for t in (1, 2, 3):
        shares = share(0, t=t, n=4, rng=rng)
        for subset in combinations(shares, t):
            assert reconstruct(subset) == 0


def test_full_set_reconstructs():
    shares = share(123456, t=3, n=6, rng=drbg("full"))
    assert reconstruct(shares) == 123456


def test_exhaustive_subsets_small_n():
    rng = drbg("exhaustive")
    for n in range(2, 7):
        for t in range(1, n + 1):
            secret = rng.randbelow(FIELD_PRIME)
            shares = share(secret, t=t, n=n, rng=rng)
            for subset in combinations(shares, t):
                assert reconstruct(subset) == secret


def test_below_threshold_rejected():
    shares = share(9, t=3, n=5, rng=drbg("below"))
    with pytest.raises(InsufficientSharesError):
        reconstruct(shares[:2])
    with pytest.raises(InsufficientSharesError):
        reconstruct([])


def test_parameter_errors():
    rng = drbg("params")
    with pytest.raises(ParameterError):
        share(1, t=4, n=3, rng=rng)
    with pytest.raises(ParameterError):
        share(1, t=0, n=3, rng=rng)
    shares = share(1, t=2, n=3, rng=rng)
    with pytest.raises(ParameterError):
        reconstruct([shares[0], shares[0]])


def test_reconstruction_order_invariant():
    shares = share(777, t=3, n=5, rng=drbg("order"))
    subset = [shares[4], shares[1], shares[2]]
    assert reconstruct(subset) == reconstruct(list(reversed(subset))) == 777


def test_share_marginals_identical_gf251():
    """Information-theoretic privacy proxy: over every polynomial choice,
    the below-threshold share marginals are the same for any two secrets."""
    prime = 251
    # t = 2: single-share marginals, exhaustive over the one coefficient
    for index in (1, 2, 3):
        histograms = []
        for secret in (5, 77):
            counts = Counter()
            for a in range(prime):
                values = share(secret, 2, 3, StubRng([a]), field_prime=prime)
                counts[values[index - 1].value] += 1
            histograms.append(counts)
        assert histograms[0] == histograms[1]
    # t = 3: joint marginal of any two shares, exhaustive over (a, b)
    for i, j in ((1, 2), (1, 3), (2, 3)):
        histograms = []
        for secret in (5, 77):
            counts = Counter()
            for a in range(prime):
                for b in range(prime):
                    values = share(secret, 3, 3, StubRng([a, b]), field_prime=prime)
                    counts[(values[i - 1].value, values[j - 1].value)] += 1
            histograms.append(counts)
        assert histograms[0] == histograms[1]


def test_wire_format():
    s = ShamirShare(index=9, value=2**100 + 17, threshold=3)
    raw = s.to_bytes()
    assert len(raw) == 20
    again, off = ShamirShare.from_bytes(raw, threshold=3)
    assert again == s and off == 20


def test_draw_seed_below_prime():
    rng = drbg("seeds")
    for _ in range(100):
        assert 0 <= draw_seed(rng) < FIELD_PRIME
