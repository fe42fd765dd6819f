"""Paillier additively homomorphic cryptosystem.

KeyGen/Enc/Dec plus the two homomorphisms used throughout:

* ciphertext addition: Enc(m1) * Enc(m2) mod n^2  = Enc(m1 + m2 mod n)
* plaintext multiplication: Enc(m1) ** m2 mod n^2 = Enc(m1 * m2 mod n)

Ciphertexts carry a fixed-point scale_exp so scale errors surface as typed
exceptions instead of silently corrupted decodes.  Decryption is
CRT-accelerated by default and bit-identical to the textbook formula.
"""

from dataclasses import dataclass
from math import gcd, lcm

from ._rng import HashDrbg
from ._wire import pack_i16, pack_uint, unpack_i16, unpack_uint

try:  # pragma: no cover - exercised implicitly when gmpy2 is installed
    from gmpy2 import invert as _g_invert
    from gmpy2 import powmod as _g_powmod

    def powmod(base: int, exp: int, mod: int) -> int:
        return int(_g_powmod(base, exp, mod))

    def invert(a: int, m: int) -> int:
        return int(_g_invert(a, m))

except ImportError:  # pragma: no cover

    def powmod(base: int, exp: int, mod: int) -> int:
        return pow(base, exp, mod)

    def invert(a: int, m: int) -> int:
        return pow(a, -1, m)


MILLER_RABIN_ROUNDS = 64
DEFAULT_KEY_BITS = 1024  # production modulus size; benchmarks usually pass 512

_SMALL_PRIMES = [3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59,
                 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127,
                 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
                 193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251]


class InvalidPrimeError(ValueError):
    """Key generation inputs violate the Paillier prime conditions."""


class RandomnessNotUnitError(ValueError):
    """Encryption randomness r is not a unit mod n."""


class InvalidCiphertextError(ValueError):
    """Ciphertext outside Z_{n^2} or not prime to n."""


class ScaleMismatchError(ValueError):
    """Homomorphic addition of ciphertexts at different scales."""


class LengthMismatchError(ValueError):
    """Elementwise vector operation on vectors of unequal length."""


def is_probable_prime(n: int, rng: HashDrbg, rounds: int = MILLER_RABIN_ROUNDS) -> bool:
    """Miller-Rabin primality test with a small-prime prefilter."""
    if n < 2:
        return False
    if n == 2:
        return True
    if n % 2 == 0:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = powmod(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def generate_prime(bits: int, rng: HashDrbg) -> int:
    """Random probable prime with the top bit set."""
    if bits < 3:
        raise ValueError("prime size too small")
    while True:
        candidate = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if is_probable_prime(candidate, rng):
            return candidate


@dataclass(frozen=True)
class PaillierPublicKey:
    n: int
    g: int
    n_squared: int

    def __repr__(self):
        return f"PaillierPublicKey(n~2^{self.n.bit_length()})"


@dataclass(frozen=True)
class PaillierSecretKey:
    p: int
    q: int
    lam: int          # lcm(p-1, q-1)
    mu: int           # L(g^lam mod n^2)^-1 mod n
    d: int            # n^-1 mod phi(n), witness-recovery exponent
    # cached CRT terms; reproduce c^lam mod n^2 exactly
    _lam_p: int
    _lam_q: int
    _p2: int
    _q2: int
    _p2_inv_q2: int

    def __repr__(self):
        return f"PaillierSecretKey(n~2^{(self.p * self.q).bit_length()})"


@dataclass(frozen=True)
class Ciphertext:
    value: int
    scale_exp: int = 0


def _L(x: int, n: int) -> int:
    return (x - 1) // n


def keygen(p: int, q: int, g: int | None = None,
           rng: HashDrbg | None = None) -> tuple[PaillierPublicKey, PaillierSecretKey]:
    """Build a keypair from primes p, q.  Defaults to g = n + 1."""
    rng = rng or HashDrbg(b"keygen-check")
    if p == q:
        raise InvalidPrimeError("p and q must differ")
    for prime in (p, q):
        if not is_probable_prime(prime, rng, rounds=16):
            raise InvalidPrimeError(f"{prime} is not prime")
    n = p * q
    phi = (p - 1) * (q - 1)
    if gcd(n, phi) != 1:
        raise InvalidPrimeError("gcd(pq, (p-1)(q-1)) must be 1")
    n2 = n * n
    if g is None:
        g = n + 1
    if not 0 < g < n2 or gcd(g, n) != 1:
        raise InvalidPrimeError("g must be a unit of Z_{n^2}")
    lam = lcm(p - 1, q - 1)
    lg = _L(powmod(g, lam, n2), n)
    if gcd(lg, n) != 1:
        raise InvalidPrimeError("L(g^lam mod n^2) must be invertible mod n")
    mu = invert(lg, n)
    d = invert(n, phi)
    pk = PaillierPublicKey(n=n, g=g, n_squared=n2)
    p2, q2 = p * p, q * q
    sk = PaillierSecretKey(
        p=p, q=q, lam=lam, mu=mu, d=d,
        _lam_p=lam % (p * (p - 1)), _lam_q=lam % (q * (q - 1)),
        _p2=p2, _q2=q2, _p2_inv_q2=invert(p2, q2),
    )
    return pk, sk


def generate_keypair(bits: int = DEFAULT_KEY_BITS,
                     rng: HashDrbg | None = None) -> tuple[PaillierPublicKey, PaillierSecretKey]:
    """Fresh keypair with an exactly bits-long modulus n."""
    if rng is None:
        raise ValueError("provide an rng; key material must come from an injected source")
    while True:
        p = generate_prime(bits // 2, rng)
        q = generate_prime(bits - bits // 2, rng)
        if p == q:
            continue
        n = p * q
        if n.bit_length() != bits:
            continue
        if gcd(n, (p - 1) * (q - 1)) != 1:
            continue
        return keygen(p, q, rng=rng)


def encrypt(pk: PaillierPublicKey, m: int, r: int | None = None, *,
            rng: HashDrbg | None = None, scale_exp: int = 0) -> Ciphertext:
    """Enc(m) = g^m * r^n mod n^2 with fresh randomness r."""
    if not 0 <= m < pk.n:
        raise ValueError(f"plaintext {m} outside [0, n)")
    if r is None:
        if rng is None:
            raise ValueError("provide r or an rng to draw it from")
        r = rng.unit_mod(pk.n)
    if not 0 < r < pk.n or gcd(r, pk.n) != 1:
        raise RandomnessNotUnitError("randomness must be a unit mod n")
    n2 = pk.n_squared
    if pk.g == pk.n + 1:
        gm = (1 + pk.n * m) % n2
    else:
        gm = powmod(pk.g, m, n2)
    value = gm * powmod(r, pk.n, n2) % n2
    return Ciphertext(value=value, scale_exp=scale_exp)


def _check_ciphertext(pk: PaillierPublicKey, c: Ciphertext) -> None:
    if not 0 < c.value < pk.n_squared or gcd(c.value, pk.n) != 1:
        raise InvalidCiphertextError("ciphertext not a unit of Z_{n^2}")


def decrypt(sk: PaillierSecretKey, pk: PaillierPublicKey, c: Ciphertext,
            use_crt: bool = True) -> int:
    """Dec(c) = L(c^lam mod n^2) * mu mod n."""
    _check_ciphertext(pk, c)
    if use_crt:
        xp = powmod(c.value % sk._p2, sk._lam_p, sk._p2)
        xq = powmod(c.value % sk._q2, sk._lam_q, sk._q2)
        x = (xp + sk._p2 * ((xq - xp) * sk._p2_inv_q2 % sk._q2)) % pk.n_squared
    else:
        x = powmod(c.value, sk.lam, pk.n_squared)
    return _L(x, pk.n) * sk.mu % pk.n


def decrypt_textbook(sk: PaillierSecretKey, pk: PaillierPublicKey, c: Ciphertext) -> int:
    return decrypt(sk, pk, c, use_crt=False)


def he_add(pk: PaillierPublicKey, a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Homomorphic addition; operands must share a scale."""
    if a.scale_exp != b.scale_exp:
        raise ScaleMismatchError(f"scales differ: {a.scale_exp} vs {b.scale_exp}")
    return Ciphertext(value=a.value * b.value % pk.n_squared, scale_exp=a.scale_exp)


def he_scalar_mul(pk: PaillierPublicKey, c: Ciphertext, k: int,
                  k_scale: int = 0) -> Ciphertext:
    """Homomorphic plaintext multiplication; scales add."""
    if not 0 <= k < pk.n:
        raise ValueError(f"scalar {k} outside [0, n)")
    return Ciphertext(value=powmod(c.value, k, pk.n_squared),
                      scale_exp=c.scale_exp + k_scale)


def he_neg(pk: PaillierPublicKey, c: Ciphertext) -> Ciphertext:
    """Encryption of the additive inverse, same scale."""
    return Ciphertext(value=powmod(c.value, pk.n - 1, pk.n_squared),
                      scale_exp=c.scale_exp)


def he_sub(pk: PaillierPublicKey, a: Ciphertext, b: Ciphertext) -> Ciphertext:
    return he_add(pk, a, he_neg(pk, b))


def lift_scale(pk: PaillierPublicKey, c: Ciphertext, delta: int) -> Ciphertext:
    """Exact scale lift: multiply the plaintext by 2**delta and retag."""
    if delta < 0:
        raise ValueError("ciphertexts cannot be rescaled downwards")
    if delta == 0:
        return c
    return Ciphertext(value=powmod(c.value, 1 << delta, pk.n_squared),
                      scale_exp=c.scale_exp + delta)


def encrypt_vector(pk, ms, *, rng, scale_exp=0):
    return [encrypt(pk, m, rng=rng, scale_exp=scale_exp) for m in ms]


def decrypt_vector(sk, pk, cs):
    return [decrypt(sk, pk, c) for c in cs]


def he_add_vector(pk, a, b):
    if len(a) != len(b):
        raise LengthMismatchError(f"lengths differ: {len(a)} vs {len(b)}")
    return [he_add(pk, x, y) for x, y in zip(a, b)]


def he_scalar_mul_vector(pk, cs, k, k_scale=0):
    return [he_scalar_mul(pk, c, k, k_scale) for c in cs]


# --- serialization: length-prefixed big-endian magnitudes ------------------

def ciphertext_to_bytes(c: Ciphertext) -> bytes:
    return pack_uint(c.value) + pack_i16(c.scale_exp)


def ciphertext_from_bytes(buf: bytes, off: int = 0) -> tuple[Ciphertext, int]:
    value, off = unpack_uint(buf, off)
    scale, off = unpack_i16(buf, off)
    return Ciphertext(value=value, scale_exp=scale), off


def public_key_to_bytes(pk: PaillierPublicKey) -> bytes:
    return pack_uint(pk.n) + pack_uint(pk.g)


def public_key_from_bytes(buf: bytes, off: int = 0) -> tuple[PaillierPublicKey, int]:
    n, off = unpack_uint(buf, off)
    g, off = unpack_uint(buf, off)
    return PaillierPublicKey(n=n, g=g, n_squared=n * n), off


def secret_key_to_bytes(sk: PaillierSecretKey) -> bytes:
    return pack_uint(sk.p) + pack_uint(sk.q)


def secret_key_from_bytes(buf: bytes, off: int = 0) -> tuple[PaillierSecretKey, int]:
    p, off = unpack_uint(buf, off)
    q, off = unpack_uint(buf, off)
    _, sk = keygen(p, q)
    return sk, off
