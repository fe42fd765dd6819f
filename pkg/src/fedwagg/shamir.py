"""t-out-of-n Shamir secret sharing over a prime field.

Shares are evaluations of a random degree-(t-1) polynomial whose constant
term is the secret; any t shares reconstruct via Lagrange interpolation at
zero, and any t-1 shares carry no information.  Used to share the mask
seeds that make aggregation dropout-resilient.
"""

import struct
from dataclasses import dataclass

from ._rng import HashDrbg

# Seeds are 128-bit values reduced into GF(2^127 - 1) by rejection sampling.
FIELD_PRIME = 2**127 - 1


class ParameterError(ValueError):
    """Invalid (t, n) sharing parameters."""


class InsufficientSharesError(ValueError):
    """Fewer than t shares supplied for reconstruction."""


@dataclass(frozen=True)
class ShamirShare:
    index: int
    value: int
    threshold: int
    field_prime: int = FIELD_PRIME

    def to_bytes(self) -> bytes:
        """Wire format: 4-byte big-endian index, 16-byte big-endian value."""
        return struct.pack(">I", self.index) + self.value.to_bytes(16, "big")

    @classmethod
    def from_bytes(cls, buf: bytes, threshold: int,
                   field_prime: int = FIELD_PRIME, off: int = 0) -> tuple["ShamirShare", int]:
        (index,) = struct.unpack_from(">I", buf, off)
        value = int.from_bytes(buf[off + 4 : off + 20], "big")
        return cls(index=index, value=value, threshold=threshold,
                   field_prime=field_prime), off + 20


def draw_seed(rng: HashDrbg, field_prime: int = FIELD_PRIME) -> int:
    """Uniform seed below the field prime (rejection-sampled 128-bit value)."""
    while True:
        s = rng.getrandbits(128)
        if s < field_prime:
            return s


def _poly_eval(coeffs: list[int], x: int, prime: int) -> int:
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * x + c) % prime
    return acc


def share(secret: int, t: int, n: int, rng: HashDrbg,
          field_prime: int = FIELD_PRIME) -> list[ShamirShare]:
    """Split secret into n shares, any t of which reconstruct it."""
    if not 1 <= t <= n:
        raise ParameterError(f"need 1 <= t <= n, got t={t}, n={n}")
    if n >= field_prime:
        raise ParameterError("more shares than field elements")
    coeffs = [secret % field_prime]
    coeffs.extend(rng.randbelow(field_prime) for _ in range(t - 1))
    return [
        ShamirShare(index=i, value=_poly_eval(coeffs, i, field_prime),
                    threshold=t, field_prime=field_prime)
        for i in range(1, n + 1)
    ]


def reconstruct(shares) -> int:
    """Lagrange interpolation at x = 0.

    Requires at least t shares with distinct indices from one sharing.
    Inconsistent shares are not detected (plain Shamir, no verification).
    """
    shares = list(shares)
    if not shares:
        raise InsufficientSharesError("no shares supplied")
    t = shares[0].threshold
    prime = shares[0].field_prime
    for s in shares:
        if s.threshold != t or s.field_prime != prime:
            raise ParameterError("shares from different sharings")
    indices = [s.index for s in shares]
    if len(set(indices)) != len(indices):
        raise ParameterError("duplicate share indices")
    if len(shares) < t:
        raise InsufficientSharesError(f"{len(shares)} shares < threshold {t}")
    secret = 0
    for s in shares:
        num, den = 1, 1
        for other in shares:
            if other.index == s.index:
                continue
            num = num * (-other.index) % prime
            den = den * (s.index - other.index) % prime
        secret = (secret + s.value * num * pow(den, -1, prime)) % prime
    return secret
