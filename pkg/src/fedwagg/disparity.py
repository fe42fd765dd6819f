"""Privacy-preserving data-disparity evaluation and the weight chain.

The server scores each user's data quality by a mutual cross-entropy
E = LS + LL computed entirely over ciphertexts:

* LS: the user's encrypted model evaluated on the server's plaintext
  benchmark (plaintext features multiply encrypted parameters);
* LL: the server's plaintext model evaluated on the user's encrypted
  dataset (encrypted features, and the label weighting needs one extra
  masked round because both factors are ciphertexts).

Log-probabilities come from frozen cubic surrogates of -log(sigmoid)
evaluated through the masked-open rounds in :mod:`fedwagg.logreg`.  Both
sides later turn the published E values into credibilities and normalized
weights; dropout is handled by renormalizing the unnormalized weights over
the surviving set.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

from ._rng import HashDrbg
from .fixedpoint import round_half_even
from .logreg import (
    NEG_LOG_ONE_MINUS_SIGMOID_POLY,
    NEG_LOG_SIGMOID_POLY,
    QuantizedCubic,
    assemble_masked_poly,
    mask_input,
    masked_linear_open,
    neg_log_one_minus_sigmoid,
    neg_log_sigmoid,
)
from .paillier import (
    Ciphertext,
    PaillierPublicKey,
    encrypt,
    he_add,
    he_scalar_mul,
    he_sub,
    lift_scale,
)


class DegenerateEntropyError(ValueError):
    """Non-positive mutual cross-entropy cannot be inverted into a weight."""


class EmptyAliveSetError(ValueError):
    """Weight renormalization over an empty surviving set."""


RE_EPSILON = 1e-6  # E values at or below this clamp RE to 1/RE_EPSILON


@dataclass
class WeightRecord:
    """Per-user weight chain: E -> RE = 1/E -> credibility -> weight."""

    user: int
    E: float
    RE: float
    C: float
    omega: float
    w: float
    n_samples: int
    alpha: float
    warned: bool = False
    verified: bool = True

    @property
    def log_omega(self) -> float:
        """log(n * e^(alpha RE)); finite even when omega overflows a float."""
        if self.n_samples <= 0:
            return -math.inf
        return math.log(self.n_samples) + self.alpha * self.RE

    def as_dict(self) -> dict:
        return {
            "user": self.user, "E": self.E, "RE": self.RE, "C": self.C,
            "omega": self.omega, "w": self.w, "n_samples": self.n_samples,
            "alpha": self.alpha, "warned": self.warned, "verified": self.verified,
        }


def dyadic_residue(value, fraction_bits: int) -> int:
    """Signed integer round(value * 2^fraction_bits), ties to even."""
    frac = Fraction(value)
    return round_half_even(frac.numerator << fraction_bits, frac.denominator)


def quantized_polys(fraction_bits: int) -> tuple[QuantizedCubic, QuantizedCubic]:
    return (NEG_LOG_SIGMOID_POLY.quantize(fraction_bits),
            NEG_LOG_ONE_MINUS_SIGMOID_POLY.quantize(fraction_bits))


def encrypted_score_plain_features(pk: PaillierPublicKey, enc_model,
                                   feature_resids) -> Ciphertext:
    """Enc(theta . [1, x]) from encrypted parameters and plaintext features.

    Model ciphertexts sit at the payload scale f; the result sits at 2f.
    """
    f = enc_model[0].scale_exp
    if len(enc_model) != len(feature_resids) + 1:
        raise ValueError("model/feature dimension mismatch")
    acc = lift_scale(pk, enc_model[0], f)
    for ct, xr in zip(enc_model[1:], feature_resids):
        acc = he_add(pk, acc, he_scalar_mul(pk, ct, xr % pk.n, k_scale=f))
    return acc


def encrypted_score_enc_features(pk: PaillierPublicKey, theta_resids,
                                 enc_features, *, rng: HashDrbg) -> Ciphertext:
    """Enc(theta . [1, x]) from plaintext parameters and encrypted features."""
    if len(theta_resids) != len(enc_features) + 1:
        raise ValueError("model/feature dimension mismatch")
    f = enc_features[0].scale_exp if enc_features else 0
    acc = encrypt(pk, (theta_resids[0] << f) % pk.n, rng=rng, scale_exp=2 * f)
    for tr, ct in zip(theta_resids[1:], enc_features):
        acc = he_add(pk, acc, he_scalar_mul(pk, ct, tr % pk.n, k_scale=f))
    return acc


def compute_ls(pk: PaillierPublicKey, enc_model, bench_features, bench_labels,
               *, fraction_bits: int, kappa: int, rng: HashDrbg,
               poly_respond, binary_ce: bool = False) -> Ciphertext:
    """Encrypted benchmark loss of the user's model (one user).

    poly_respond(enc_z, qpolys) is the user's side of each masked round.
    Returns a ciphertext at scale 7 * fraction_bits; the zero ciphertext
    when no sample contributes.
    """
    f = fraction_bits
    out_scale = 7 * f
    nls_q, nls1m_q = quantized_polys(f)
    acc = encrypt(pk, 0, r=1, scale_exp=out_scale)
    for features, label in zip(bench_features, bench_labels):
        y = int(label)
        if y == 0 and not binary_ce:
            continue
        qpoly = nls_q if y == 1 else nls1m_q
        feature_resids = [dyadic_residue(x, f) for x in features]
        enc_l = encrypted_score_plain_features(pk, enc_model, feature_resids)
        r = rng.getrandbits(kappa)
        enc_z = mask_input(pk, enc_l, r, rng=rng)
        enc_z2, encs = poly_respond(enc_z, [qpoly])
        term = assemble_masked_poly(pk, enc_l, enc_z2, encs[0], qpoly, r, rng=rng)
        acc = he_add(pk, acc, term)
    return acc


def compute_ll(pk: PaillierPublicKey, enc_dataset, server_model, *,
               fraction_bits: int, kappa: int, rng: HashDrbg,
               poly_respond, linear_respond, verifier_for=None,
               binary_ce: bool = False) -> Ciphertext:
    """Encrypted local loss of the server's model on the user's dataset.

    enc_dataset is a list of (enc_features, enc_label) pairs.  The label is
    a ciphertext, so each per-sample log-probability h goes through the
    masked linear round: linear_respond(idx, enc_h) publishes h + r and
    Enc(y * r).  verifier_for(idx), when given, returns the callback that
    checks the published masked decryption.  Output scale: 8 * fraction_bits.
    """
    f = fraction_bits
    out_scale = 8 * f
    nls_q, nls1m_q = quantized_polys(f)
    delta_q = QuantizedCubic(
        nls_q.c0 - nls1m_q.c0, nls_q.c1 - nls1m_q.c1,
        nls_q.c2 - nls1m_q.c2, nls_q.c3 - nls1m_q.c3, fraction_bits=f,
    )
    theta_resids = [dyadic_residue(t, f) for t in server_model]
    acc = encrypt(pk, 0, r=1, scale_exp=out_scale)
    for idx, (enc_features, enc_label) in enumerate(enc_dataset):
        enc_l = encrypted_score_enc_features(pk, theta_resids, enc_features, rng=rng)
        r = rng.getrandbits(kappa)
        enc_z = mask_input(pk, enc_l, r, rng=rng)
        wanted = [nls_q, nls1m_q] if binary_ce else [nls_q]
        enc_z2, encs = poly_respond(enc_z, wanted)
        verifier = verifier_for(idx) if verifier_for is not None else None
        if binary_ce:
            enc_nls = assemble_masked_poly(pk, enc_l, enc_z2, encs[0], nls_q, r, rng=rng)
            enc_nls1m = assemble_masked_poly(pk, enc_l, enc_z2, encs[1], nls1m_q, r, rng=rng)
            enc_delta = he_sub(pk, enc_nls, enc_nls1m)
            weighted = masked_linear_open(
                pk, enc_delta, enc_label,
                lambda c, i=idx: linear_respond(i, c), verifier=verifier,
            )
            term = he_add(pk, lift_scale(pk, enc_nls1m, f), weighted)
        else:
            enc_h = assemble_masked_poly(pk, enc_l, enc_z2, encs[0], nls_q, r, rng=rng)
            term = masked_linear_open(
                pk, enc_h, enc_label,
                lambda c, i=idx: linear_respond(i, c), verifier=verifier,
            )
        acc = he_add(pk, acc, term)
    return acc


def compute_e(pk: PaillierPublicKey, enc_ls: Ciphertext,
              enc_ll: Ciphertext) -> Ciphertext:
    """Enc(E) = Enc(LS) + Enc(LL); operands must already share a scale."""
    return he_add(pk, enc_ls, enc_ll)


# --- plaintext reference pipeline -------------------------------------------

def plaintext_disparity(user_model, server_model, bench_features, bench_labels,
                        local_features, local_labels,
                        nls_poly=NEG_LOG_SIGMOID_POLY,
                        nls1m_poly=NEG_LOG_ONE_MINUS_SIGMOID_POLY,
                        binary_ce: bool = False,
                        use_cubics: bool = True) -> tuple[float, float, float]:
    """The same mutual cross-entropy without encryption (same cubics).

    With use_cubics=False the exact log-sigmoid replaces the surrogates,
    which quantifies the polynomial approximation error itself.
    """
    nls = nls_poly if use_cubics else neg_log_sigmoid
    nls1m = nls1m_poly if use_cubics else neg_log_one_minus_sigmoid

    def loss(theta, features, labels):
        total = 0.0
        for x, y in zip(features, labels):
            l = theta[0] + sum(t * v for t, v in zip(theta[1:], x))
            y = int(y)
            if binary_ce:
                total += nls(l) if y == 1 else nls1m(l)
            elif y == 1:
                total += nls(l)
        return total

    ls = loss(list(user_model), bench_features, bench_labels)
    ll = loss(list(server_model), local_features, local_labels)
    return ls, ll, ls + ll


# --- weight chain ------------------------------------------------------------

def compute_weights(entries, alpha: float,
                    epsilon: float = RE_EPSILON) -> list[WeightRecord]:
    """Fill the RE/C/omega/w chain for (user, E, n_samples) entries.

    E <= 0 raises; 0 < E <= epsilon clamps RE at 1/epsilon and marks the
    record.  Weights are normalized over exactly the supplied set.
    """
    entries = list(entries)
    if not entries:
        return []
    res = []
    for user, e_value, n_samples in entries:
        if not math.isfinite(e_value) or e_value <= 0:
            raise DegenerateEntropyError(f"user {user}: E = {e_value!r} must be positive")
        warned = e_value <= epsilon
        re_value = 1.0 / epsilon if warned else 1.0 / e_value
        res.append((user, float(e_value), re_value, int(n_samples), warned))

    shift = max(alpha * re for _, _, re, _, _ in res)
    c_norm = sum(math.exp(alpha * re - shift) for _, _, re, _, _ in res)
    log_omegas = [math.log(n) + alpha * re if n > 0 else -math.inf
                  for _, _, re, n, _ in res]
    log_omega_shift = max(log_omegas)
    w_norm = sum(math.exp(lo - log_omega_shift) for lo in log_omegas)

    records = []
    for (user, e_value, re_value, n_samples, warned), log_omega in zip(res, log_omegas):
        c_value = math.exp(alpha * re_value - shift) / c_norm
        if log_omega == -math.inf:
            omega = 0.0
        else:
            # a clamped RE can push omega past float range; keep it as inf,
            # w and the log-space renormalization stay finite
            omega = math.exp(log_omega) if log_omega < 709.0 else math.inf
        w = math.exp(log_omega - log_omega_shift) / w_norm
        records.append(WeightRecord(user=user, E=e_value, RE=re_value, C=c_value,
                                    omega=omega, w=w, n_samples=n_samples,
                                    alpha=alpha, warned=warned))
    return records


def renormalize_for_dropout(records, alive_set) -> dict[int, float]:
    """Restrict the weights to the surviving users: w'_i = omega_i / sum omega_j.

    Computed in log space so a clamped RE (omega overflowing a float) still
    renormalizes cleanly.
    """
    by_user = {r.user: r for r in records}
    alive = sorted(alive_set)
    if not alive:
        raise EmptyAliveSetError("no surviving users to renormalize over")
    missing = [u for u in alive if u not in by_user]
    if missing:
        raise ValueError(f"alive users without weight records: {missing}")
    logs = {u: by_user[u].log_omega for u in alive}
    shift = max(logs.values())
    if shift == -math.inf:
        raise EmptyAliveSetError("all surviving users have zero-size datasets")
    norm = sum(math.exp(v - shift) for v in logs.values())
    return {u: math.exp(logs[u] - shift) / norm for u in alive}
