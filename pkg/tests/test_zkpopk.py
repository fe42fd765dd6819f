import pytest

from fedwagg.paillier import encrypt, invert, keygen, powmod
from fedwagg.zkpopk import (
    ProtocolOrderError,
    ppopk,
    ppopk_vector,
    prepare_decryption_claim,
    prover_session,
    recover_zero_witness,
    simulate_accepting_transcript,
    verifier_session,
    verify_transcript,
    zkpopk_zero,
)

from helpers import drbg, keypair_512


@pytest.fixture(scope="module")
def keys():
    return keypair_512()


def test_zero_proof_trivial_witness(toy_keys):
    pk, _ = toy_keys
    u = encrypt(pk, 0, r=1)  # ciphertext value 1
    assert zkpopk_zero(pk, u.value, 1, drbg("p0"), drbg("v0")) == 1


def test_zero_proof_honest_random_witness(toy_keys):
    pk, _ = toy_keys
    rng = drbg("honest-zero")
    for i in range(20):
        v = rng.unit_mod(pk.n)
        u = encrypt(pk, 0, r=v)
        assert zkpopk_zero(pk, u.value, v, rng.child(f"p{i}"), rng.child(f"v{i}")) == 1


def test_zero_proof_soundness_monte_carlo(keys):
    """A ciphertext of a nonzero value has no accepting strategy: the
    canonical wrong witness is rejected on every of 1000 challenges."""
    pk, sk = keys
    rng = drbg("soundness")
    u = encrypt(pk, 5, rng=rng)
    wrong_witness = recover_zero_witness(sk, pk, u.value)
    accepts = sum(
        zkpopk_zero(pk, u.value, wrong_witness, rng.child(f"p{i}"), rng.child(f"v{i}"))
        for i in range(1000)
    )
    assert accepts == 0


def test_ppopk_honest(keys):
    pk, sk = keys
    rng = drbg("ppopk-honest")
    c = encrypt(pk, 42, rng=rng)
    assert ppopk(c, 42, pk, sk, rng.child("v"), rng.child("p")) == 1


def test_ppopk_fraudulent(keys):
    pk, sk = keys
    rng = drbg("ppopk-fraud")
    c = encrypt(pk, 42, rng=rng)
    assert ppopk(c, 43, pk, sk, rng.child("v"), rng.child("p")) == 0


def test_ppopk_zero_plaintext(keys):
    pk, sk = keys
    rng = drbg("ppopk-zero")
    c = encrypt(pk, 0, rng=rng)
    assert ppopk(c, 0, pk, sk, rng.child("v"), rng.child("p")) == 1


def test_ppopk_completeness_100_instances(keys):
    pk, sk = keys
    rng = drbg("completeness")
    for i in range(100):
        m = rng.randbelow(pk.n)
        c = encrypt(pk, m, rng=rng)
        assert ppopk(c, m, pk, sk, rng.child(f"v{i}"), rng.child(f"p{i}")) == 1


def test_ppopk_vector_conjunction(keys):
    pk, sk = keys
    rng = drbg("vector")
    ms = [rng.randbelow(pk.n) for _ in range(10)]
    cs = [encrypt(pk, m, rng=rng) for m in ms]
    assert ppopk_vector(cs, ms, pk, sk, rng.child("v"), rng.child("p")) == 1
    flipped = list(ms)
    flipped[7] = (flipped[7] + 1) % pk.n
    assert ppopk_vector(cs, flipped, pk, sk, rng.child("v2"), rng.child("p2")) == 0
    assert ppopk_vector([], [], pk, sk, rng.child("v3"), rng.child("p3")) == 1


def test_simulated_transcript_verifies(keys):
    """Zero-knowledge smoke: transcripts built backwards (draw e, z, solve
    for a) satisfy the same verification equation, witness-free."""
    pk, sk = keys
    rng = drbg("simulate")
    c = encrypt(pk, 31337, rng=rng)
    c_prime = prepare_decryption_claim(pk, c, 31337, rng)
    a, e, z = simulate_accepting_transcript(pk, c_prime, rng)
    assert verify_transcript(pk, c_prime, a, e, z)
    # an honest transcript has the same (a, e, z) structure and also verifies
    witness = recover_zero_witness(sk, pk, c_prime)
    prover = prover_session(pk, c_prime, witness, rng.child("p"))
    verifier = verifier_session(pk, c_prime, rng.child("v"))
    a2 = prover.prover_commit()
    e2 = verifier.verifier_challenge(a2)
    z2 = prover.prover_respond(e2)
    assert verify_transcript(pk, c_prime, a2, e2, z2)


def test_challenge_freshness(keys):
    pk, _ = keys
    rng = drbg("fresh")
    u = encrypt(pk, 0, rng=rng).value
    v1 = verifier_session(pk, u, rng.child("s1"))
    v2 = verifier_session(pk, u, rng.child("s2"))
    a = encrypt(pk, 0, rng=rng).value
    assert v1.verifier_challenge(a) != v2.verifier_challenge(a)


def test_fiat_shamir_challenge_is_transcript_bound(keys):
    pk, sk = keys
    rng = drbg("fs")
    u = encrypt(pk, 0, rng=rng)
    witness = recover_zero_witness(sk, pk, u.value)
    assert zkpopk_zero(pk, u.value, witness, rng.child("p"), rng.child("v"),
                       fiat_shamir=True) == 1
    v1 = verifier_session(pk, u.value, rng.child("x"), fiat_shamir=True)
    v2 = verifier_session(pk, u.value, rng.child("y"), fiat_shamir=True)
    a = encrypt(pk, 0, rng=rng).value
    assert v1.verifier_challenge(a) == v2.verifier_challenge(a)


def test_protocol_order_enforced(keys):
    pk, _ = keys
    rng = drbg("order")
    u = encrypt(pk, 0, rng=rng).value
    prover = prover_session(pk, u, 1, rng.child("p"))
    with pytest.raises(ProtocolOrderError):
        prover.prover_respond(3)
    prover.prover_commit()
    with pytest.raises(ProtocolOrderError):
        prover.prover_commit()
    verifier = verifier_session(pk, u, rng.child("v"))
    with pytest.raises(ProtocolOrderError):
        verifier.verifier_finish(5)
    with pytest.raises(ProtocolOrderError):
        verifier.prover_commit()


def test_verifier_rejects_non_units(toy_keys):
    pk, _ = toy_keys
    rng = drbg("units")
    verifier = verifier_session(pk, 7, rng)  # gcd(7, 77) != 1
    verifier.verifier_challenge(encrypt(pk, 0, rng=rng).value)
    assert verifier.verifier_finish(2).beta == 0


def test_witness_recovery_formula(keys):
    # r' = c'^d mod n reproduces the randomness of an encryption of zero
    pk, sk = keys
    rng = drbg("witness")
    v = rng.unit_mod(pk.n)
    u = encrypt(pk, 0, r=v)
    assert recover_zero_witness(sk, pk, u.value) == v
