"""Sigma-protocol proofs over Paillier ciphertexts.

Two interactive proofs, run as explicit prover/verifier state machines:

* proof of knowledge that a ciphertext u encrypts zero (witness: the
  encryption randomness v with u = Enc(0, v));
* proof that a published plaintext m is the honest decryption of a
  ciphertext c, reduced to the zero proof on c' = c - Enc(m) where the
  prover recovers the witness as r' = c'^d mod n, d = n^-1 mod phi(n).

The verifier accepts iff u, a, z are units mod n and Enc(0, z) = a * u^e
mod n^2.  A prover without a valid witness is caught except with
probability ~ 2^-k/2 in the modulus bit length k, so fraudulent
decryptions are rejected essentially always at production key sizes.
"""

import hashlib
from dataclasses import dataclass, field
from math import gcd

from ._rng import HashDrbg
from ._wire import pack_uint
from .paillier import (
    Ciphertext,
    PaillierPublicKey,
    PaillierSecretKey,
    encrypt,
    invert,
    powmod,
)

DEFAULT_CHALLENGE_BITS = 80

PHASE_COMMIT = "commit"
PHASE_CHALLENGE = "challenge"
PHASE_RESPOND = "respond"
PHASE_DONE = "done"


class ProtocolOrderError(RuntimeError):
    """A proof message arrived out of phase."""


@dataclass(frozen=True)
class PopkVerdict:
    beta: int

    def __post_init__(self):
        if self.beta not in (0, 1):
            raise ValueError("verdict must be a bit")


def _enc_zero(pk: PaillierPublicKey, r: int) -> int:
    # g^0 * r^n = r^n for every valid g
    return powmod(r, pk.n, pk.n_squared)


def _derive_challenge(pk: PaillierPublicKey, u: int, a: int, kappa_e: int) -> int:
    digest = hashlib.sha256(pack_uint(pk.n) + pack_uint(u) + pack_uint(a)).digest()
    return int.from_bytes(digest, "big") % (1 << kappa_e)


@dataclass
class ZeroProofSession:
    """One run of the zero-encryption proof, from either role.

    The phase field names the next expected message (commit -> challenge ->
    respond -> done); acting out of order raises ProtocolOrderError.
    """

    role: str  # "prover" | "verifier"
    pk: PaillierPublicKey
    u: int
    rng: HashDrbg
    kappa_e: int = DEFAULT_CHALLENGE_BITS
    fiat_shamir: bool = False
    witness: int | None = None  # prover-only: v with u = Enc(0, v)
    phase: str = field(default=PHASE_COMMIT, init=False)
    a: int | None = field(default=None, init=False)
    e: int | None = field(default=None, init=False)
    z: int | None = field(default=None, init=False)
    _commit_r: int | None = field(default=None, init=False, repr=False)

    def _expect(self, role: str, phase: str) -> None:
        if self.role != role:
            raise ProtocolOrderError(f"{self.role} session cannot act as {role}")
        if self.phase != phase:
            raise ProtocolOrderError(f"expected phase {phase}, in {self.phase}")

    # prover side -----------------------------------------------------------

    def prover_commit(self) -> int:
        self._expect("prover", PHASE_COMMIT)
        self._commit_r = self.rng.unit_mod(self.pk.n)
        self.a = _enc_zero(self.pk, self._commit_r)
        self.phase = PHASE_CHALLENGE
        return self.a

    def prover_respond(self, e: int) -> int:
        self._expect("prover", PHASE_CHALLENGE)
        if self.witness is None:
            raise ProtocolOrderError("prover session has no witness")
        self.e = e
        self.z = self._commit_r * powmod(self.witness, e, self.pk.n) % self.pk.n
        self.phase = PHASE_DONE
        return self.z

    # verifier side ---------------------------------------------------------

    def verifier_challenge(self, a: int) -> int:
        self._expect("verifier", PHASE_COMMIT)
        self.a = a
        if self.fiat_shamir:
            self.e = _derive_challenge(self.pk, self.u, a, self.kappa_e)
        else:
            self.e = self.rng.getrandbits(self.kappa_e)
        self.phase = PHASE_RESPOND
        return self.e

    def verifier_finish(self, z: int) -> PopkVerdict:
        self._expect("verifier", PHASE_RESPOND)
        self.z = z
        self.phase = PHASE_DONE
        return PopkVerdict(beta=int(self._check(z)))

    def _check(self, z: int) -> bool:
        pk = self.pk
        if not 0 < self.u < pk.n_squared or not 0 < self.a < pk.n_squared:
            return False
        if not 0 < z < pk.n:
            return False
        for value in (self.u, self.a, z):
            if gcd(value, pk.n) != 1:
                return False
        lhs = _enc_zero(pk, z)
        rhs = self.a * powmod(self.u, self.e, pk.n_squared) % pk.n_squared
        return lhs == rhs


def prover_session(pk, u, witness, rng, kappa_e=DEFAULT_CHALLENGE_BITS,
                   fiat_shamir=False) -> ZeroProofSession:
    return ZeroProofSession(role="prover", pk=pk, u=u, rng=rng,
                            kappa_e=kappa_e, fiat_shamir=fiat_shamir,
                            witness=witness)


def verifier_session(pk, u, rng, kappa_e=DEFAULT_CHALLENGE_BITS,
                     fiat_shamir=False) -> ZeroProofSession:
    return ZeroProofSession(role="verifier", pk=pk, u=u, rng=rng,
                            kappa_e=kappa_e, fiat_shamir=fiat_shamir)


def zkpopk_zero(pk: PaillierPublicKey, u: int, witness: int,
                prover_rng: HashDrbg, verifier_rng: HashDrbg,
                kappa_e: int = DEFAULT_CHALLENGE_BITS,
                fiat_shamir: bool = False) -> int:
    """Run both roles in-process; returns the verifier's bit."""
    prover = prover_session(pk, u, witness, prover_rng, kappa_e, fiat_shamir)
    verifier = verifier_session(pk, u, verifier_rng, kappa_e, fiat_shamir)
    a = prover.prover_commit()
    e = verifier.verifier_challenge(a)
    z = prover.prover_respond(e)
    return verifier.verifier_finish(z).beta


def prepare_decryption_claim(pk: PaillierPublicKey, c: Ciphertext | int,
                             m: int, rng: HashDrbg) -> int:
    """Verifier side: c' = c - Enc(m, r_s), i.e. c * Enc(m, r_s)^-1 mod n^2."""
    c_value = c.value if isinstance(c, Ciphertext) else c
    masked = encrypt(pk, m % pk.n, rng=rng)
    return c_value * invert(masked.value, pk.n_squared) % pk.n_squared


def recover_zero_witness(sk: PaillierSecretKey, pk: PaillierPublicKey,
                         c_prime: int) -> int:
    """Prover side: r' = c'^d mod n.

    Valid (c' = Enc(0, r')) only when c' really encrypts zero; the prover
    proceeds regardless and relies on the verifier rejecting otherwise.
    """
    return powmod(c_prime % pk.n, sk.d, pk.n)


def ppopk(c: Ciphertext | int, m: int, pk: PaillierPublicKey,
          sk: PaillierSecretKey, verifier_rng: HashDrbg, prover_rng: HashDrbg,
          kappa_e: int = DEFAULT_CHALLENGE_BITS,
          fiat_shamir: bool = False) -> int:
    """Prove that m is the decryption of c; 1 iff the verifier accepts."""
    c_prime = prepare_decryption_claim(pk, c, m, verifier_rng)
    witness = recover_zero_witness(sk, pk, c_prime)
    return zkpopk_zero(pk, c_prime, witness, prover_rng, verifier_rng,
                       kappa_e, fiat_shamir)


def ppopk_vector(cs, ms, pk, sk, verifier_rng, prover_rng,
                 kappa_e: int = DEFAULT_CHALLENGE_BITS,
                 fiat_shamir: bool = False) -> int:
    """AND-composition of elementwise decryption proofs; empty vector accepts."""
    if len(cs) != len(ms):
        raise ValueError(f"lengths differ: {len(cs)} vs {len(ms)}")
    for c, m in zip(cs, ms):
        if ppopk(c, m, pk, sk, verifier_rng, prover_rng, kappa_e, fiat_shamir) == 0:
            return 0
    return 1


def simulate_accepting_transcript(pk: PaillierPublicKey, u: int, rng: HashDrbg,
                                  kappa_e: int = DEFAULT_CHALLENGE_BITS) -> tuple[int, int, int]:
    """Zero-knowledge simulator: draw (e, z) first and solve for a.

    The resulting (a, e, z) passes the verifier's equation without any
    witness, which is what makes honest transcripts non-revealing.
    """
    e = rng.getrandbits(kappa_e)
    z = rng.unit_mod(pk.n)
    a = _enc_zero(pk, z) * invert(powmod(u, e, pk.n_squared), pk.n_squared) % pk.n_squared
    return a, e, z


def verify_transcript(pk: PaillierPublicKey, u: int, a: int, e: int, z: int) -> bool:
    """Stateless check of a finished transcript (used for replay)."""
    session = ZeroProofSession(role="verifier", pk=pk, u=u, rng=HashDrbg(b"replay"))
    session.a = a
    session.e = e
    session.phase = PHASE_RESPOND
    return session.verifier_finish(z).beta == 1
