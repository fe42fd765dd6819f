"""Dropout-resilient secure aggregation of masked vectors.

Three sub-protocols over a common residue ring:

* mask generation: each alive user derives a self mask PRG(b_u) plus
  antisymmetric pairwise masks (+PRG(s_uv) for u < v, -PRG(s_uv) for u > v),
  and Shamir-shares both seeds among all users;
* masked model aggregation: the server sums the masked uploads of the users
  still alive, aborting below the threshold t;
* aggregation recovery: the server reconstructs b_u for users whose upload
  is in the sum and s_uv for users whose pairwise masks linger, and peels
  all masks off, leaving exactly the sum of the included vectors.

Pairwise masks of two surviving users cancel each other in the full sum, so
no recovery is needed for them.  A consistency check (signatures over the
published alive list) prevents the server from showing different dropout
views to different users.
"""

import hashlib
import struct
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from ._rng import HashDrbg
from .shamir import FIELD_PRIME, InsufficientSharesError, ShamirShare, draw_seed, share


class AggregationAbort(RuntimeError):
    """Common base for protocol-level aborts."""


class ThresholdAbortError(AggregationAbort):
    """Fewer than t users left alive."""


class ConsistencyAbortError(AggregationAbort):
    """A user's view check failed; carries the failing check name."""

    def __init__(self, user: int, check: str):
        super().__init__(f"user {user}: consistency check failed ({check})")
        self.user = user
        self.check = check


# --- PRG -------------------------------------------------------------------

def prg_expand(seed: int, length: int, modulus: int) -> list[int]:
    """Deterministic expansion of a 128-bit seed into ring residues.

    SHA-256 in counter mode; 16 bytes of slack beyond the modulus width make
    the mod-reduction bias negligible.
    """
    if length < 0:
        raise ValueError("length must be non-negative")
    if modulus <= 1:
        raise ValueError("modulus must exceed 1")
    nbytes = (modulus.bit_length() + 7) // 8 + 16
    seed_bytes = seed.to_bytes(16, "big")
    out = []
    for i in range(length):
        stream = b""
        ctr = 0
        while len(stream) < nbytes:
            stream += hashlib.sha256(
                seed_bytes + struct.pack(">QI", i, ctr)
            ).digest()
            ctr += 1
        out.append(int.from_bytes(stream[:nbytes], "big") % modulus)
    return out


def signed_pair_mask(u: int, v: int, seed: int, length: int, modulus: int) -> list[int]:
    """Pairwise mask as seen from user u towards peer v.

    Positive for u < v and negated for u > v, so the pair's contributions
    cancel when both uploads enter the sum.
    """
    base = prg_expand(seed, length, modulus)
    if u < v:
        return base
    return [(modulus - x) % modulus for x in base]


@dataclass
class MaskState:
    """Per-user masking material for one aggregation round."""

    uid: int
    self_seed: int
    pairwise_seeds: dict[int, int]  # peer -> agreed seed (canonical per pair)
    self_mask: list[int]
    pairwise_mask: list[int]
    combined: list[int]
    modulus: int


def build_mask_state(uid: int, self_seed: int, pairwise_seeds: dict[int, int],
                     length: int, modulus: int) -> MaskState:
    self_mask = prg_expand(self_seed, length, modulus)
    pairwise = [0] * length
    for peer in sorted(pairwise_seeds):
        part = signed_pair_mask(uid, peer, pairwise_seeds[peer], length, modulus)
        pairwise = [(a + b) % modulus for a, b in zip(pairwise, part)]
    combined = [(a + b) % modulus for a, b in zip(self_mask, pairwise)]
    return MaskState(uid=uid, self_seed=self_seed, pairwise_seeds=dict(pairwise_seeds),
                     self_mask=self_mask, pairwise_mask=pairwise,
                     combined=combined, modulus=modulus)


def _pair_key(u: int, v: int) -> tuple[str, int, int]:
    return ("s", min(u, v), max(u, v))


def mask_generation(users, t: int, length: int, modulus: int, rng: HashDrbg,
                    drop_before_share=()):
    """Module-level run of the mask-generation sub-protocol.

    Returns (mask states of alive users, alive set U1, share store).  The
    share store maps holder uid -> {key -> ShamirShare}; shares of every
    seed go to all users including the owner.  Aborts if fewer than t users
    survive mask generation.
    """
    users = sorted(users)
    dropped = set(drop_before_share)
    u1 = [u for u in users if u not in dropped]
    if len(u1) < t:
        raise ThresholdAbortError(f"{len(u1)} alive users < threshold {t}")

    index_of = {u: i + 1 for i, u in enumerate(users)}
    pair_seeds: dict[tuple[str, int, int], int] = {}
    for i, u in enumerate(u1):
        for v in u1[i + 1:]:
            pair_seeds[_pair_key(u, v)] = draw_seed(rng)

    states: dict[int, MaskState] = {}
    share_store: dict[int, dict[tuple, ShamirShare]] = {u: {} for u in u1}

    def distribute(key, secret):
        shares = share(secret, t, len(users), rng)
        for holder in u1:
            share_store[holder][key] = shares[index_of[holder] - 1]

    for u in u1:
        b_u = draw_seed(rng)
        peers = {v: pair_seeds[_pair_key(u, v)] for v in u1 if v != u}
        states[u] = build_mask_state(u, b_u, peers, length, modulus)
        distribute(("b", u), b_u)
    for key, seed in sorted(pair_seeds.items()):
        distribute(key, seed)
    return states, u1, share_store


def masked_model_aggregation(models: dict[int, list[int]],
                             mask_states: dict[int, MaskState],
                             u1, t: int, modulus: int):
    """Sum the masked uploads of the users that delivered one.

    The alive set U2 is exactly the key set of the delivered models; aborts
    when it falls below the threshold.
    """
    u2 = sorted(models)
    if any(u not in set(u1) for u in u2):
        raise ValueError("upload from a user outside U1")
    if len(u2) < t:
        raise ThresholdAbortError(f"{len(u2)} uploads < threshold {t}")
    lengths = {len(m) for m in models.values()}
    if len(lengths) > 1:
        raise ValueError("model vectors must share one length")
    length = lengths.pop() if lengths else 0
    y = [0] * length
    for u in u2:
        state = mask_states[u]
        for k in range(length):
            y[k] = (y[k] + models[u][k] + state.combined[k]) % modulus
    return y, u2


def collect_shares(share_store: dict[int, dict], holders, keys):
    """Gather each holder's share for every requested seed."""
    rows: dict[tuple, list[ShamirShare]] = {key: [] for key in keys}
    for holder in sorted(holders):
        held = share_store.get(holder, {})
        for key in keys:
            if key in held:
                rows[key].append(held[key])
    return rows


def model_aggregation_recovery(y: list[int], u1, u2, t: int,
                               share_rows: dict[tuple, list[ShamirShare]],
                               modulus: int) -> list[int]:
    """Peel all masks off the aggregate y.

    Needs >= t shares of b_u for every u in U2 and of s_uv for every
    dropped u in U1 \\ U2 paired with every alive v in U2.
    """
    from .shamir import reconstruct

    u1, u2 = sorted(u1), sorted(u2)
    dropped = [u for u in u1 if u not in set(u2)]
    length = len(y)
    z = list(y)

    def reconstruct_checked(key):
        rows = share_rows.get(key, [])
        if len(rows) < t:
            raise InsufficientSharesError(
                f"{len(rows)} shares < threshold {t} for {key}"
            )
        return reconstruct(rows[:t])

    for u in u2:
        b_u = reconstruct_checked(("b", u))
        mask = prg_expand(b_u, length, modulus)
        for k in range(length):
            z[k] = (z[k] - mask[k]) % modulus
    for u in dropped:
        for v in u2:
            seed = reconstruct_checked(_pair_key(u, v))
            part = signed_pair_mask(u, v, seed, length, modulus)
            for k in range(length):
                z[k] = (z[k] + part[k]) % modulus
    return z


# --- signatures and the dropout-view consistency check ----------------------

class Ed25519KeyPair:
    """Thin wrapper; deterministic when built from a DRBG-derived seed."""

    def __init__(self, seed: bytes):
        if len(seed) != 32:
            raise ValueError("need a 32-byte seed")
        self._sk = Ed25519PrivateKey.from_private_bytes(seed)
        self.public_bytes = self._sk.public_key().public_bytes_raw()

    @classmethod
    def from_rng(cls, rng: HashDrbg) -> "Ed25519KeyPair":
        return cls(rng.bytes(32))

    def sign(self, message: bytes) -> bytes:
        return self._sk.sign(message)

    @staticmethod
    def verify(public_bytes: bytes, message: bytes, signature: bytes) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(public_bytes).verify(signature, message)
            return True
        except (InvalidSignature, ValueError):
            return False


class TransparentKeyPair:
    """Test double: forgery-proof by construction inside one process."""

    _registry: dict[bytes, bytes] = {}

    def __init__(self, seed: bytes):
        self._secret = hashlib.sha256(b"secret" + seed).digest()
        self.public_bytes = hashlib.sha256(b"public" + seed).digest()
        TransparentKeyPair._registry[self.public_bytes] = self._secret

    @classmethod
    def from_rng(cls, rng: HashDrbg) -> "TransparentKeyPair":
        return cls(rng.bytes(32))

    def sign(self, message: bytes) -> bytes:
        return hashlib.sha256(self._secret + message).digest()

    @staticmethod
    def verify(public_bytes: bytes, message: bytes, signature: bytes) -> bool:
        secret = TransparentKeyPair._registry.get(public_bytes)
        if secret is None:
            return False
        return hashlib.sha256(secret + message).digest() == signature


def pack_view(view) -> bytes:
    """Canonical bytes of an alive-user view (sorted ids)."""
    ids = sorted(view)
    return struct.pack(">I", len(ids)) + b"".join(struct.pack(">I", u) for u in ids)


@dataclass(frozen=True)
class SignedView:
    view: tuple[int, ...]
    signer: int
    signature: bytes


@dataclass
class UserSetView:
    """A user's fetched view plus the signature bundle it must validate."""

    view: tuple[int, ...]
    bundle: list[SignedView] = field(default_factory=list)


def check_view_bundle(user: int, fetched_view, bundle, public_keys,
                      t: int, verify=Ed25519KeyPair.verify) -> UserSetView:
    """The per-user acceptance test on the forwarded signature bundle.

    Pass iff the bundle holds >= t valid signatures on one single list and
    every signer is inside the user's own fetched view.  Raises
    ConsistencyAbortError naming the failing check otherwise; returns the
    validated view (the one safe to use for recovery).
    """
    if len(bundle) < t:
        raise ConsistencyAbortError(user, "bundle cardinality below threshold")
    views = {sv.view for sv in bundle}
    if len(views) != 1:
        raise ConsistencyAbortError(user, "signatures span multiple lists")
    agreed = next(iter(views))
    view_bytes = pack_view(agreed)
    signers = set()
    for sv in bundle:
        if not verify(public_keys[sv.signer], view_bytes, sv.signature):
            raise ConsistencyAbortError(user, "invalid signature")
        signers.add(sv.signer)
    if len(signers) < t:
        raise ConsistencyAbortError(user, "fewer than t distinct signers")
    if not signers <= set(fetched_view):
        raise ConsistencyAbortError(user, "signer set not inside fetched view")
    return UserSetView(view=agreed, bundle=list(bundle))


def run_consistency_check(views_by_user: dict[int, tuple[int, ...]],
                          keypairs: dict, t: int,
                          keypair_cls=Ed25519KeyPair) -> tuple[int, ...]:
    """Full consistency check among the users of views_by_user.

    views_by_user maps each alive user to the view the server showed it; an
    equivocating server simply supplies differing views.  Returns the agreed
    view or raises ConsistencyAbortError.
    """
    users = sorted(views_by_user)
    signed = [
        SignedView(view=tuple(sorted(views_by_user[u])), signer=u,
                   signature=keypairs[u].sign(pack_view(views_by_user[u])))
        for u in users
    ]
    # The server bundles the largest group of signatures on one single list.
    groups: dict[tuple[int, ...], list[SignedView]] = {}
    for sv in signed:
        groups.setdefault(sv.view, []).append(sv)
    bundle = max(groups.values(), key=len)
    if len(bundle) < t:
        raise ConsistencyAbortError(0, "server gathered fewer than t signatures")
    public_keys = {u: kp.public_bytes for u, kp in keypairs.items()}
    for u in users:
        check_view_bundle(u, views_by_user[u], bundle, public_keys, t,
                          verify=keypair_cls.verify)
    return bundle[0].view
