"""Fixed-point encoding of reals as ring residues with explicit scale tracking.

A real x is stored as round(x * 2**scale_exp) mod modulus.  Residues in the
upper half of the ring denote negative values (two's-complement style), which
makes homomorphic subtraction free.  Plaintext-ciphertext products double the
scale; :func:`rescale` brings plaintext residues back down after decryption.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

DEFAULT_INTEGER_BITS = 17
DEFAULT_FRACTION_BITS = 27
DEFAULT_KAPPA = 80
# Spare ring bits beyond the payload: statistical masks plus growth of sums.
DEFAULT_MAX_CLIENTS_LOG2 = 10

# scale_exp is serialized as a signed 16-bit integer.
MAX_SCALE_EXP = 2**15 - 1


class FixedPointOverflowError(OverflowError):
    """Value magnitude exceeds the representable integer range."""


class ScaleRangeError(ValueError):
    """scale_exp outside the representable / expected range."""


def round_half_even(num: int, den: int) -> int:
    """Round num/den (den > 0) to the nearest integer, ties to even."""
    q, r = divmod(num, den)
    twice = 2 * r
    if twice > den or (twice == den and q % 2 == 1):
        q += 1
    return q


def to_signed(value: int, modulus: int) -> int:
    """Map a residue to its signed representative in (-modulus/2, modulus/2]."""
    return value - modulus if value > modulus // 2 else value


def encode_at_scale(x, scale_exp: int, modulus: int, margin_bits: int = 20) -> "ScaledResidue":
    """Encode a real at an explicit scale, bounded only by ring headroom.

    Used for protocol intermediates (masked values, polynomial terms) whose
    magnitude legitimately exceeds the payload range; margin_bits of headroom
    are kept free for sums of such terms.
    """
    frac = x if isinstance(x, Rational) else Fraction(x)
    scaled = frac * (1 << scale_exp) if scale_exp >= 0 else frac / (1 << -scale_exp)
    v = round_half_even(scaled.numerator, scaled.denominator)
    if abs(v) << (margin_bits + 1) >= modulus:
        raise FixedPointOverflowError(
            f"scaled magnitude 2^{abs(v).bit_length()} leaves less than "
            f"{margin_bits} headroom bits in a {modulus.bit_length()}-bit ring"
        )
    return ScaledResidue(value=v % modulus, scale_exp=scale_exp)


@dataclass(frozen=True)
class ScaledResidue:
    """A ring residue together with the power-of-two scale applied to it."""

    value: int
    scale_exp: int


@dataclass(frozen=True)
class FixedPointCodec:
    """Bidirectional map between reals and residues mod a Paillier modulus.

    slack_bits is the minimum gap between the payload width and the ring
    width; it must leave room for additive masks (kappa bits) and for sums
    across clients.
    """

    modulus: int
    integer_bits: int = DEFAULT_INTEGER_BITS
    fraction_bits: int = DEFAULT_FRACTION_BITS
    slack_bits: int | None = field(default=None)

    def __post_init__(self):
        if self.integer_bits <= 0 or self.fraction_bits <= 0:
            raise ValueError("integer_bits and fraction_bits must be positive")
        slack = self.slack_bits
        if slack is None:
            slack = DEFAULT_KAPPA + DEFAULT_MAX_CLIENTS_LOG2 + self.fraction_bits
            object.__setattr__(self, "slack_bits", slack)
        if self.integer_bits + self.fraction_bits > self.modulus.bit_length() - slack:
            raise ValueError(
                f"payload {self.integer_bits}+{self.fraction_bits} bits does not "
                f"fit a {self.modulus.bit_length()}-bit ring with {slack} slack bits"
            )

    def encode(self, x, scale_exp: int | None = None) -> ScaledResidue:
        """Encode a real; raises FixedPointOverflowError if |x| >= 2**integer_bits."""
        scale = self.fraction_bits if scale_exp is None else scale_exp
        self._check_scale(scale)
        frac = x if isinstance(x, Rational) else Fraction(x)
        if abs(frac) >= (1 << self.integer_bits):
            raise FixedPointOverflowError(
                f"|{float(frac):g}| >= 2^{self.integer_bits}"
            )
        scaled = frac * (1 << scale) if scale >= 0 else frac / (1 << -scale)
        v = round_half_even(scaled.numerator, scaled.denominator)
        return ScaledResidue(value=v % self.modulus, scale_exp=scale)

    def decode(self, r: ScaledResidue) -> float:
        return float(self.decode_exact(r))

    def decode_exact(self, r: ScaledResidue) -> Fraction:
        """Exact rational decode; residues above modulus/2 come out negative."""
        self._check_scale(r.scale_exp)
        signed = to_signed(r.value, self.modulus)
        if r.scale_exp >= 0:
            return Fraction(signed, 1 << r.scale_exp)
        return Fraction(signed * (1 << -r.scale_exp))

    def rescale(self, r: ScaledResidue, target_scale: int) -> ScaledResidue:
        """Divide (with rounding) a plaintext residue down to target_scale.

        Works on plaintext residues only: ciphertexts cannot be rescaled.
        """
        self._check_scale(target_scale)
        if r.scale_exp < target_scale:
            raise ScaleRangeError(
                f"cannot rescale up: {r.scale_exp} < {target_scale}"
            )
        if r.scale_exp == target_scale:
            return r
        signed = to_signed(r.value, self.modulus)
        shifted = round_half_even(signed, 1 << (r.scale_exp - target_scale))
        return ScaledResidue(value=shifted % self.modulus, scale_exp=target_scale)

    def _check_scale(self, scale_exp: int) -> None:
        if abs(scale_exp) > MAX_SCALE_EXP:
            raise ScaleRangeError(f"scale_exp {scale_exp} outside representable range")


def encode(x, codec: FixedPointCodec, scale_exp: int | None = None) -> ScaledResidue:
    return codec.encode(x, scale_exp)


def decode(r: ScaledResidue, codec: FixedPointCodec) -> float:
    return codec.decode(r)


def rescale(r: ScaledResidue, target_scale: int, codec: FixedPointCodec) -> ScaledResidue:
    return codec.rescale(r, target_scale)
