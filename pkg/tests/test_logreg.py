import math
from fractions import Fraction

import numpy as np
import pytest

from fedwagg.fixedpoint import FixedPointCodec, ScaledResidue, to_signed
from fedwagg.logreg import (
    NEG_LOG_ONE_MINUS_SIGMOID_POLY,
    NEG_LOG_SIGMOID_POLY,
    SIGMOID_POLY,
    CubicPoly,
    LogRegModel,
    MaskedOpenVerificationError,
    TrainConfig,
    cost,
    fit_cubic,
    gradient,
    mask_input,
    masked_linear_open,
    masked_sigmoid_open,
    neg_log_one_minus_sigmoid,
    neg_log_sigmoid,
    sigmoid,
    train,
    user_linear_response,
    user_poly_response,
)
from fedwagg.paillier import decrypt, encrypt

from helpers import drbg, keypair_512

F = 27


@pytest.fixture(scope="module")
def keys():
    return keypair_512()


@pytest.fixture(scope="module")
def codec(keys):
    return FixedPointCodec(modulus=keys[0].n)


# --- plaintext model ----------------------------------------------------------

def test_sigmoid_midpoint():
    assert sigmoid(0.0) == 0.5


def test_sigmoid_symmetry():
    for x in (-7.5, -1.0, 0.3, 2.0, 11.0):
        assert sigmoid(x) + sigmoid(-x) == pytest.approx(1.0, abs=1e-12)


def test_sigmoid_known_value():
    assert sigmoid(2.0) == pytest.approx(0.8807970779778823, abs=1e-12)


def test_sigmoid_range_extremes():
    # open-interval bound, checked inside float64 resolution
    assert 0.0 < sigmoid(-30.0) < sigmoid(30.0) < 1.0
    assert sigmoid(-500.0) == 0.0 or sigmoid(-500.0) > 0.0  # no overflow either way
    sigmoid(500.0)  # stable on the positive branch too


def test_neg_log_sigmoid_identities():
    assert neg_log_sigmoid(0.0) == pytest.approx(math.log(2.0))
    for x in (-4.0, -0.5, 1.0, 3.0):
        assert neg_log_sigmoid(x) == pytest.approx(-math.log(sigmoid(x)), rel=1e-12)
        assert neg_log_one_minus_sigmoid(x) == pytest.approx(
            -math.log(1 - sigmoid(x)), rel=1e-9)


def test_train_linearly_separable():
    features = np.array([[0.0], [1.0]])
    labels = np.array([0, 1])
    model = train((features, labels), TrainConfig(learning_rate=0.5, epochs=200))
    predictions = (model.predict_proba(features) >= 0.5).astype(int)
    assert (predictions == labels).all()


def test_train_zero_epochs_returns_zeros():
    model = train((np.array([[1.0, 2.0]]), np.array([1])),
                  TrainConfig(learning_rate=0.5, epochs=0))
    assert (model.theta == 0).all()


def test_train_single_class():
    features = np.array([[0.2], [0.8], [0.5]])
    labels = np.array([1, 1, 1])
    model = train((features, labels), TrainConfig(learning_rate=0.5, epochs=100))
    assert (model.predict_proba(features) >= 0.5).all()


def test_train_validates_labels():
    with pytest.raises(ValueError):
        train((np.array([[1.0]]), np.array([2])), TrainConfig())


def test_train_config_validates_learning_rate():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)


def test_minibatch_training_runs():
    rng = np.random.default_rng(3)
    features = rng.uniform(0, 1, (20, 2))
    labels = (features @ np.array([2.0, -1.0]) > 0.5).astype(int)
    full = train((features, labels), TrainConfig(learning_rate=0.2, epochs=30))
    batched = train((features, labels),
                    TrainConfig(learning_rate=0.2, epochs=30, batch=5))
    assert batched.theta.shape == full.theta.shape
    # batched descent still learns the separator direction
    assert np.sign(batched.theta[1]) == np.sign(full.theta[1])


def test_train_dimension_mismatch():
    model = LogRegModel(theta=np.zeros(3))
    with pytest.raises(ValueError):
        model.raw_scores(np.ones((2, 5)))


def test_cost_non_increasing_full_batch():
    rng = np.random.default_rng(5)
    features = rng.uniform(0, 1, (30, 3))
    labels = (features @ np.array([1.0, -2.0, 0.5]) > 0.0).astype(int)
    config = TrainConfig(learning_rate=0.1, epochs=1)
    model = LogRegModel(theta=np.zeros(4))
    costs = [cost(model, features, labels)]
    for _ in range(25):
        model = train((features, labels), config, initial=model)
        costs.append(cost(model, features, labels))
    assert all(b <= a + 1e-12 for a, b in zip(costs, costs[1:]))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(9)
    for _ in range(5):
        features = rng.uniform(-1, 1, (12, 4))
        labels = rng.integers(0, 2, 12)
        theta = rng.normal(0, 0.5, 5)
        model = LogRegModel(theta=theta)
        analytic = gradient(model, features, labels)
        eps = 1e-6
        for k in range(5):
            bump = np.zeros(5)
            bump[k] = eps
            numeric = (cost(LogRegModel(theta + bump), features, labels)
                       - cost(LogRegModel(theta - bump), features, labels)) / (2 * eps)
            assert abs(analytic[k] - numeric) <= 1e-5 * max(1.0, abs(numeric))


# --- cubic surrogates -----------------------------------------------------------

def test_fit_cubic_sigmoid_structure():
    poly = fit_cubic("sigmoid", (-6.0, 6.0))
    assert poly.s0 == pytest.approx(0.5, abs=1e-6)
    assert poly.s2 == 0.0


@pytest.mark.xfail(
    strict=True,
    reason="no cubic reaches max error 0.05 for sigmoid on [-6,6]: the "
    "minimax cubic already errs by ~0.0561 (uniform-node least squares "
    "by ~0.081); the declared-bound invariant below is the attainable check",
)
def test_fit_cubic_sigmoid_error_at_most_5_percent():
    poly = fit_cubic("sigmoid", (-6.0, 6.0))
    assert poly.max_error <= 0.05


def test_fit_cubic_declared_bounds_hold():
    xs = np.linspace(-6.0, 6.0, 10_000)
    for poly, fn in ((SIGMOID_POLY, sigmoid),
                     (NEG_LOG_SIGMOID_POLY, neg_log_sigmoid),
                     (NEG_LOG_ONE_MINUS_SIGMOID_POLY, neg_log_one_minus_sigmoid)):
        worst = max(abs(poly(x) - fn(x)) for x in xs)
        assert worst <= poly.max_error + 1e-9
    assert SIGMOID_POLY.max_error <= 0.09


def test_frozen_constants_match_refit():
    for poly, name in ((SIGMOID_POLY, "sigmoid"),
                       (NEG_LOG_SIGMOID_POLY, "neg_log_sigmoid"),
                       (NEG_LOG_ONE_MINUS_SIGMOID_POLY, "neg_log_one_minus_sigmoid")):
        refit = fit_cubic(name, (poly.lo, poly.hi))
        for frozen_c, fresh_c in zip(poly.coefficients, refit.coefficients):
            assert frozen_c == pytest.approx(fresh_c, abs=1e-9)


def test_fit_cubic_rejects_degenerate_interval():
    with pytest.raises(ValueError):
        fit_cubic("sigmoid", (2.0, 2.0))
    with pytest.raises(ValueError):
        fit_cubic("tanh", (-1.0, 1.0))


def test_quantize_exact_dyadics():
    poly = CubicPoly(s0=0.5, s1=0.25, s2=0.0, s3=-0.125, lo=-1, hi=1, max_error=0.0)
    q = poly.quantize(4)
    assert q.coefficients == (8, 4, 0, -2)
    assert q.eval_exact(Fraction(1, 2)) == Fraction(0.5 + 0.125 - 0.015625)


# --- masked encrypted evaluation --------------------------------------------------

def _respond(sk, pk, qpolys, label):
    def inner(enc_z):
        return user_poly_response(sk, pk, enc_z, qpolys, rng=drbg(label))
    return inner


def test_masked_open_degenerate_identity(keys, codec):
    pk, sk = keys
    qp = SIGMOID_POLY.quantize(F)
    enc_l = encrypt(pk, codec.encode(0.0).value, rng=drbg("l0"), scale_exp=F)
    enc_y = masked_sigmoid_open(pk, enc_l, 0, _respond(sk, pk, [qp], "r0"),
                                rng=drbg("s0"), qpoly=qp)
    value = codec.decode(ScaledResidue(decrypt(sk, pk, enc_y), enc_y.scale_exp))
    assert value == pytest.approx(0.5, abs=2**-F)


def test_masked_open_worked_example(keys, codec):
    pk, sk = keys
    poly = CubicPoly(s0=0.5, s1=0.197, s2=0.0, s3=-0.004, lo=-6, hi=6,
                     max_error=1.0)
    qp = poly.quantize(F)
    enc_l = encrypt(pk, codec.encode(1.0).value, rng=drbg("l1"), scale_exp=F)
    enc_y = masked_sigmoid_open(pk, enc_l, 2 << F, _respond(sk, pk, [qp], "r1"),
                                rng=drbg("s1"), qpoly=qp)
    decoded = codec.decode_exact(ScaledResidue(decrypt(sk, pk, enc_y),
                                               enc_y.scale_exp))
    # the assembly and the direct evaluation agree exactly on the
    # represented input, and both land on sigma_poly(1) = 0.693
    direct = qp.eval_exact(Fraction(codec.encode(1.0).value, 1 << F))
    assert decoded == direct
    assert float(decoded) == pytest.approx(0.693, abs=2**-20)


def _fraction_assembly_oracle(qp, l_frac, r_frac):
    """The masking identity evaluated in exact rational arithmetic."""
    g = qp.eval_exact
    z = l_frac + r_frac
    c0, c1, c2, c3 = (Fraction(c, 1 << qp.fraction_bits) for c in qp.coefficients)
    return (g(z) - g(r_frac) + (c0 + 3 * c3 * r_frac**3)
            - 3 * c3 * r_frac * z * z - (2 * c2 * r_frac - 3 * c3 * r_frac**2) * l_frac)


def test_masking_identity_exact_in_rationals():
    qp = SIGMOID_POLY.quantize(F)
    rng = drbg("identity")
    for _ in range(50):
        l = Fraction(rng.randrange(-6 << F, 6 << F), 1 << F)
        r = Fraction(rng.getrandbits(40), 1 << F)
        assert _fraction_assembly_oracle(qp, l, r) == qp.eval_exact(l)


def test_masked_open_random_pairs_match_direct(keys, codec):
    pk, sk = keys
    qp = SIGMOID_POLY.quantize(F)
    rng = drbg("pairs")
    for i in range(10):
        l_resid = codec.encode(rng.randrange(-6 * 2**10, 6 * 2**10) / 2**10)
        enc_l = encrypt(pk, l_resid.value, rng=rng, scale_exp=F)
        r = rng.getrandbits(60)
        enc_y = masked_sigmoid_open(pk, enc_l, r,
                                    _respond(sk, pk, [qp], f"rr{i}"),
                                    rng=rng, qpoly=qp)
        decoded = codec.decode_exact(ScaledResidue(decrypt(sk, pk, enc_y),
                                                   enc_y.scale_exp))
        expected = qp.eval_exact(Fraction(to_signed(l_resid.value, pk.n), 1 << F))
        assert decoded == expected


def test_mask_hiding_uniform_at_toy_kappa():
    """z = l + r with a 16-bit uniform mask: the masked residue is uniform
    mod 2^16 (checked on the top byte of that window, chi-square)."""
    scipy_stats = pytest.importorskip("scipy.stats")
    kappa = 16
    l_resid = 0x3A7  # arbitrary fixed payload
    rng = drbg("hiding")
    counts = [0] * 256
    for _ in range(100_000):
        r = rng.getrandbits(kappa)
        z = (l_resid + r) % (1 << kappa)
        counts[z >> 8] += 1
    _, p_value = scipy_stats.chisquare(counts)
    assert p_value > 0.001


def test_masked_linear_open_worked_example(keys, codec):
    pk, sk = keys
    rng = drbg("linear")
    enc_h = encrypt(pk, codec.encode(3.0).value, rng=rng, scale_exp=F)
    enc_y1 = encrypt(pk, codec.encode(1).value, rng=rng, scale_exp=F)

    def respond_with_r5(enc_h_seen):
        h = to_signed(decrypt(sk, pk, enc_h_seen), pk.n)
        r = 5 << F
        enc_y_r = encrypt(pk, (1 * r << F) % pk.n, rng=rng, scale_exp=2 * F)
        return h + r, enc_y_r, None

    out = masked_linear_open(pk, enc_h, enc_y1, respond_with_r5)
    assert codec.decode(ScaledResidue(decrypt(sk, pk, out), out.scale_exp)) == 3.0


def test_masked_linear_open_zero_label_absorbs(keys, codec):
    pk, sk = keys
    rng = drbg("linear0")
    enc_h = encrypt(pk, codec.encode(3.0).value, rng=rng, scale_exp=F)
    enc_y0 = encrypt(pk, 0, rng=rng, scale_exp=F)

    def respond(enc_h_seen):
        return user_linear_response(sk, pk, enc_h_seen, 0, F, mask_bits=60, rng=rng)

    out = masked_linear_open(pk, enc_h, enc_y0, respond)
    assert decrypt(sk, pk, out) == 0


def test_masked_linear_open_degenerate_r_zero(keys, codec):
    pk, sk = keys
    rng = drbg("linearz")
    enc_h = encrypt(pk, codec.encode(2.5).value, rng=rng, scale_exp=F)
    enc_y1 = encrypt(pk, codec.encode(1).value, rng=rng, scale_exp=F)

    def respond(enc_h_seen):
        h = to_signed(decrypt(sk, pk, enc_h_seen), pk.n)
        return h, encrypt(pk, 0, rng=rng, scale_exp=2 * F), None

    out = masked_linear_open(pk, enc_h, enc_y1, respond)
    assert codec.decode(ScaledResidue(decrypt(sk, pk, out), out.scale_exp)) == 2.5


def test_masked_linear_open_verification(keys, codec):
    from fedwagg.zkpopk import ppopk

    pk, sk = keys
    rng = drbg("linear-verify")
    enc_h = encrypt(pk, codec.encode(1.5).value, rng=rng, scale_exp=F)
    enc_y1 = encrypt(pk, codec.encode(1).value, rng=rng, scale_exp=F)

    def verifier(c_check, claimed):
        return ppopk(c_check, claimed, pk, sk, rng.child("v"), rng.child("p")) == 1

    def honest(enc_h_seen):
        return user_linear_response(sk, pk, enc_h_seen, 1, F, mask_bits=60, rng=rng)

    out = masked_linear_open(pk, enc_h, enc_y1, honest, verifier=verifier)
    assert codec.decode(ScaledResidue(decrypt(sk, pk, out), out.scale_exp)) == 1.5

    def fraudulent(enc_h_seen):
        h_plus_r, enc_y_r, enc_r = user_linear_response(
            sk, pk, enc_h_seen, 1, F, mask_bits=60, rng=rng)
        return h_plus_r + 3, enc_y_r, enc_r

    with pytest.raises(MaskedOpenVerificationError):
        masked_linear_open(pk, enc_h, enc_y1, fraudulent, verifier=verifier)

    def withholds_enc_r(enc_h_seen):
        h_plus_r, enc_y_r, _ = user_linear_response(
            sk, pk, enc_h_seen, 1, F, mask_bits=60, rng=rng, include_enc_r=False)
        return h_plus_r, enc_y_r, None

    with pytest.raises(MaskedOpenVerificationError):
        masked_linear_open(pk, enc_h, enc_y1, withholds_enc_r, verifier=verifier)


def test_mask_input_adds_at_scale(keys, codec):
    pk, sk = keys
    rng = drbg("mask-input")
    enc_l = encrypt(pk, codec.encode(0.75).value, rng=rng, scale_exp=F)
    enc_z = mask_input(pk, enc_l, 4 << F, rng=rng)
    z = codec.decode(ScaledResidue(decrypt(sk, pk, enc_z), enc_z.scale_exp))
    assert z == pytest.approx(4.75, abs=2**-F)
