"""Logistic regression, cubic surrogates, and masked encrypted evaluation.

Plaintext training is ordinary full-batch gradient descent on the logistic
cost.  The encrypted path cannot evaluate sigmoid/log directly, so those
nonlinearities are replaced by cubic polynomials (coefficients frozen in
``_poly_constants``) and evaluated through a one-round masking trick:

1. the server holds Enc(l) and sends Enc(z) = Enc(l + r) for a fresh mask r;
2. the user decrypts z and returns Enc(z^2) and Enc(g(z)) for the cubic g;
3. the server assembles Enc(g(l)) homomorphically from
   Enc(g(z)), Enc(-g(r)), Enc(g0 + 3 g3 r^3), (-3 g3 r) * Enc(z^2) and
   (-(2 g2 r - 3 g3 r^2)) * Enc(l).

With coefficients quantized to ``fraction_bits`` and the fixed scale
schedule below, the assembly is *exact* ring arithmetic: the user encodes
z^2 at twice the scale of l and g(z) at the assembly scale, every
correction coefficient is an exact dyadic, and the big cross terms cancel
identically.  The same trick drives the label-weighted round where the
plaintext side of the product is itself encrypted: the user publishes a
masked decryption h + r together with Enc(y * r), and the server computes
Enc(y * h) = (h + r) * Enc(y) - Enc(y * r).
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _poly_constants
from ._rng import HashDrbg
from .fixedpoint import round_half_even, to_signed
from .paillier import (
    Ciphertext,
    PaillierPublicKey,
    PaillierSecretKey,
    decrypt,
    encrypt,
    he_add,
    he_neg,
    he_scalar_mul,
)

FIT_NODES = 1000
_DENSE_GRID = 10001

TARGET_FUNCTIONS = ("sigmoid", "neg_log_sigmoid", "neg_log_one_minus_sigmoid")


class MaskedOpenVerificationError(RuntimeError):
    """A user's masked decryption failed its proof of correctness."""


# --- plaintext model ---------------------------------------------------------

def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


def neg_log_sigmoid(x: float) -> float:
    # log(1 + e^-x), computed on the stable branch
    if x >= 0:
        return math.log1p(math.exp(-x))
    return -x + math.log1p(math.exp(x))


def neg_log_one_minus_sigmoid(x: float) -> float:
    return neg_log_sigmoid(-x)


@dataclass
class LogRegModel:
    """Parameter vector with the bias first: prediction is sigmoid(theta . [1, x])."""

    theta: np.ndarray

    def raw_scores(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features[None, :]
        if features.shape[1] != self.theta.shape[0] - 1:
            raise ValueError(
                f"feature dimension {features.shape[1]} does not match model "
                f"dimension {self.theta.shape[0] - 1}"
            )
        return self.theta[0] + features @ self.theta[1:]

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        scores = self.raw_scores(features)
        return 1.0 / (1.0 + np.exp(-scores))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 100
    batch: int | None = None  # None = full batch

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


def cost(model: LogRegModel, features: np.ndarray, labels: np.ndarray) -> float:
    scores = model.raw_scores(features)
    labels = np.asarray(labels, dtype=float)
    return float(np.mean(np.logaddexp(0.0, scores) - labels * scores))


def gradient(model: LogRegModel, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=float)
    scores = model.raw_scores(features)
    residual = 1.0 / (1.0 + np.exp(-scores)) - labels
    m = features.shape[0]
    grad = np.empty(model.theta.shape)
    grad[0] = residual.mean()
    grad[1:] = features.T @ residual / m
    return grad


def train(dataset: tuple[np.ndarray, np.ndarray], config: TrainConfig,
          initial: LogRegModel | None = None) -> LogRegModel:
    """Gradient descent on the logistic cost; labels must be 0/1."""
    features, labels = dataset
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if features.ndim != 2 or features.shape[0] != labels.shape[0]:
        raise ValueError("features and labels disagree on sample count")
    if not np.all(np.isfinite(features)):
        raise ValueError("features must be finite")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0 or 1")
    if initial is None:
        theta = np.zeros(features.shape[1] + 1)
    else:
        theta = initial.theta.astype(float).copy()
        if theta.shape[0] != features.shape[1] + 1:
            raise ValueError("initial model dimension mismatch")
    model = LogRegModel(theta=theta)
    m = features.shape[0]
    for _ in range(config.epochs):
        if config.batch is None or config.batch >= m:
            model.theta = model.theta - config.learning_rate * gradient(model, features, labels)
        else:
            for start in range(0, m, config.batch):
                sl = slice(start, start + config.batch)
                model.theta = model.theta - config.learning_rate * gradient(
                    model, features[sl], labels[sl]
                )
    return model


# --- cubic surrogates --------------------------------------------------------

@dataclass(frozen=True)
class CubicPoly:
    """s0 + s1 x + s2 x^2 + s3 x^3 with a declared error bound on [lo, hi]."""

    s0: float
    s1: float
    s2: float
    s3: float
    lo: float
    hi: float
    max_error: float

    @property
    def coefficients(self):
        return (self.s0, self.s1, self.s2, self.s3)

    def __call__(self, x):
        return self.s0 + self.s1 * x + self.s2 * x * x + self.s3 * x * x * x

    def quantize(self, fraction_bits: int) -> "QuantizedCubic":
        scale = 1 << fraction_bits
        ints = tuple(
            round_half_even(Fraction(c).numerator * scale, Fraction(c).denominator)
            for c in self.coefficients
        )
        return QuantizedCubic(*ints, fraction_bits=fraction_bits)


@dataclass(frozen=True)
class QuantizedCubic:
    """Cubic with dyadic coefficients c_j / 2^fraction_bits (exact integers)."""

    c0: int
    c1: int
    c2: int
    c3: int
    fraction_bits: int

    @property
    def coefficients(self):
        return (self.c0, self.c1, self.c2, self.c3)

    def eval_exact(self, x) -> Fraction:
        x = Fraction(x)
        num = self.c0 + self.c1 * x + self.c2 * x * x + self.c3 * x * x * x
        return num / (1 << self.fraction_bits)

    def __call__(self, x: float) -> float:
        return float(self.eval_exact(Fraction(x)))


def _target_callable(name: str):
    if name == "sigmoid":
        return sigmoid
    if name == "neg_log_sigmoid":
        return neg_log_sigmoid
    if name == "neg_log_one_minus_sigmoid":
        return neg_log_one_minus_sigmoid
    raise ValueError(f"unknown target {name!r}; expected one of {TARGET_FUNCTIONS}")


def fit_cubic(target: str, interval: tuple[float, float] = (-6.0, 6.0),
              nodes: int = FIT_NODES) -> CubicPoly:
    """Least-squares cubic on uniform nodes.

    For sigmoid the x^2 term is pinned to zero (the function is odd about
    1/2 on a symmetric interval).  The measured dense-grid error is stored
    as the declared bound.
    """
    lo, hi = interval
    if not lo < hi:
        raise ValueError("interval must be nondegenerate")
    fn = _target_callable(target)
    xs = np.linspace(lo, hi, nodes)
    ys = np.array([fn(x) for x in xs])
    if target == "sigmoid":
        basis = np.stack([np.ones_like(xs), xs, xs**3], axis=1)
        c, *_ = np.linalg.lstsq(basis, ys, rcond=None)
        s = (float(c[0]), float(c[1]), 0.0, float(c[2]))
    else:
        basis = np.stack([np.ones_like(xs), xs, xs**2, xs**3], axis=1)
        c, *_ = np.linalg.lstsq(basis, ys, rcond=None)
        s = tuple(float(v) for v in c)
    dense = np.linspace(lo, hi, _DENSE_GRID)
    approx = s[0] + s[1] * dense + s[2] * dense**2 + s[3] * dense**3
    exact = np.array([fn(x) for x in dense])
    return CubicPoly(*s, lo=lo, hi=hi, max_error=float(np.max(np.abs(approx - exact))))


def _frozen(entry) -> CubicPoly:
    s0, s1, s2, s3, lo, hi, err = entry
    return CubicPoly(s0=s0, s1=s1, s2=s2, s3=s3, lo=lo, hi=hi, max_error=err)


SIGMOID_POLY = _frozen(_poly_constants.SIGMOID_CUBIC)
NEG_LOG_SIGMOID_POLY = _frozen(_poly_constants.NEG_LOG_SIGMOID_CUBIC)
NEG_LOG_ONE_MINUS_SIGMOID_POLY = _frozen(_poly_constants.NEG_LOG_ONE_MINUS_SIGMOID_CUBIC)


# --- masked encrypted evaluation ---------------------------------------------

def draw_mask_residue(rng: HashDrbg, kappa: int) -> int:
    """Additive mask for a ciphertext residue: uniform in [0, 2^kappa)."""
    return rng.getrandbits(kappa)


def mask_input(pk: PaillierPublicKey, enc_l: Ciphertext, r_resid: int, *,
               rng: HashDrbg) -> Ciphertext:
    """Server side: Enc(z) = Enc(l) + Enc(r) at l's scale."""
    enc_r = encrypt(pk, r_resid % pk.n, rng=rng, scale_exp=enc_l.scale_exp)
    return he_add(pk, enc_l, enc_r)


def user_poly_response(sk: PaillierSecretKey, pk: PaillierPublicKey,
                       enc_z: Ciphertext, qpolys, *,
                       rng: HashDrbg) -> tuple[Ciphertext, list[Ciphertext]]:
    """User side of the masked round: decrypt z, return Enc(z^2) and Enc(g(z)).

    All values are exact ring integers: z^2 is encoded at twice z's scale
    and each cubic at fraction_bits + 3 * scale(z), so the server-side
    assembly cancels without rounding.
    """
    s = enc_z.scale_exp
    z = to_signed(decrypt(sk, pk, enc_z), pk.n)
    enc_z2 = encrypt(pk, (z * z) % pk.n, rng=rng, scale_exp=2 * s)
    encs = []
    for qp in qpolys:
        value = (
            qp.c0 * (1 << (3 * s))
            + qp.c1 * z * (1 << (2 * s))
            + qp.c2 * z * z * (1 << s)
            + qp.c3 * z * z * z
        )
        encs.append(encrypt(pk, value % pk.n, rng=rng,
                            scale_exp=qp.fraction_bits + 3 * s))
    return enc_z2, encs


def assemble_masked_poly(pk: PaillierPublicKey, enc_l: Ciphertext,
                         enc_z2: Ciphertext, enc_gz: Ciphertext,
                         qpoly: QuantizedCubic, r_resid: int, *,
                         rng: HashDrbg) -> Ciphertext:
    """Server side: recombine the round's ciphertexts into Enc(g(l)).

    Exact for honest responses; the output sits at fraction_bits plus three
    times the scale of l.
    """
    n = pk.n
    s = enc_l.scale_exp
    f = qpoly.fraction_bits
    out_scale = f + 3 * s
    if enc_z2.scale_exp != 2 * s:
        raise ValueError("Enc(z^2) at unexpected scale")
    if enc_gz.scale_exp != out_scale:
        raise ValueError("Enc(g(z)) at unexpected scale")
    r = r_resid
    c0, c1, c2, c3 = qpoly.coefficients
    neg_g_r = -(c0 * (1 << (3 * s)) + c1 * r * (1 << (2 * s))
                + c2 * r * r * (1 << s) + c3 * r * r * r)
    const_term = c0 * (1 << (3 * s)) + 3 * c3 * r * r * r
    k_z2 = (-3 * c3 * r) % n
    k_l = (-(2 * c2 * r * (1 << s) - 3 * c3 * r * r)) % n

    acc = enc_gz
    acc = he_add(pk, acc, encrypt(pk, neg_g_r % n, rng=rng, scale_exp=out_scale))
    acc = he_add(pk, acc, encrypt(pk, const_term % n, rng=rng, scale_exp=out_scale))
    acc = he_add(pk, acc, he_scalar_mul(pk, enc_z2, k_z2, k_scale=f + s))
    acc = he_add(pk, acc, he_scalar_mul(pk, enc_l, k_l, k_scale=f + 2 * s))
    return acc


def masked_sigmoid_open(pk: PaillierPublicKey, enc_l: Ciphertext, r_resid: int,
                        user_decrypt_callback, *, rng: HashDrbg,
                        qpoly: QuantizedCubic | None = None) -> Ciphertext:
    """One full masked-evaluation round for a single cubic (default: sigmoid).

    user_decrypt_callback receives Enc(z) and must return
    (Enc(z^2), [Enc(g(z))]); honest users implement it with
    :func:`user_poly_response`.
    """
    if qpoly is None:
        qpoly = SIGMOID_POLY.quantize(27)
    enc_z = mask_input(pk, enc_l, r_resid, rng=rng)
    enc_z2, encs = user_decrypt_callback(enc_z)
    return assemble_masked_poly(pk, enc_l, enc_z2, encs[0], qpoly, r_resid, rng=rng)


def poly_magnitude_bound_bits(qpoly: QuantizedCubic, input_bits: int,
                              scale: int) -> int:
    """Bit bound on |g(x)| * 2^(fraction_bits + 3*scale) for |x| < 2^input_bits.

    Used to size the additive mask that hides a decrypted poly output.
    """
    m = 1 << input_bits
    bound = (abs(qpoly.c0) + abs(qpoly.c1) * m + abs(qpoly.c2) * m * m
             + abs(qpoly.c3) * m * m * m)
    return (bound << (3 * scale)).bit_length() + 1


def user_linear_response(sk: PaillierSecretKey, pk: PaillierPublicKey,
                         enc_h: Ciphertext, y_bit: int, label_scale: int,
                         mask_bits: int, *, rng: HashDrbg,
                         include_enc_r: bool = True):
    """User side of the label-weighted round.

    Publishes h + r (a signed integer at h's scale) and Enc(y * r) at the
    scale the server's product will carry; Enc(r) rides along so the server
    can demand a proof that h + r is an honest masked decryption.
    """
    h = to_signed(decrypt(sk, pk, enc_h), pk.n)
    scale = enc_h.scale_exp
    r = rng.getrandbits(mask_bits)
    h_plus_r = h + r
    enc_y_r = encrypt(pk, (y_bit * r << label_scale) % pk.n, rng=rng,
                      scale_exp=scale + label_scale)
    enc_r = None
    if include_enc_r:
        enc_r = encrypt(pk, r % pk.n, rng=rng, scale_exp=scale)
    return h_plus_r, enc_y_r, enc_r


def masked_linear_open(pk: PaillierPublicKey, enc_h: Ciphertext,
                       enc_y: Ciphertext, user_respond,
                       verifier=None) -> Ciphertext:
    """Server side: Enc(y * h) from a user-published masked decryption of h.

    user_respond(enc_h) -> (h_plus_r, Enc(y*r), Enc(r) | None).  When a
    verifier callback is supplied it receives (Enc(h) + Enc(r), claimed
    residue) and must return 1 to accept; rejection raises
    MaskedOpenVerificationError.
    """
    h_plus_r, enc_y_r, enc_r = user_respond(enc_h)
    if verifier is not None:
        if enc_r is None:
            raise MaskedOpenVerificationError("no Enc(r) supplied for verification")
        c_check = he_add(pk, enc_h, enc_r)
        if not verifier(c_check, h_plus_r % pk.n):
            raise MaskedOpenVerificationError("masked decryption rejected")
    weighted = he_scalar_mul(pk, enc_y, h_plus_r % pk.n, k_scale=enc_h.scale_exp)
    if enc_y_r.scale_exp != weighted.scale_exp:
        raise ValueError("Enc(y*r) at unexpected scale")
    return he_add(pk, weighted, he_neg(pk, enc_y_r))
