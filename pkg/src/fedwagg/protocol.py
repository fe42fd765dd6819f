"""One-round orchestration of the secure weighted aggregation protocol.

Simulates a server and n clients exchanging real serialized messages over
the in-process bus.  Per round:

* Init: mask generation (pairwise + self seeds, Shamir-shared), followed by
  each client uploading the encryption of its combined mask, before any
  weight or model information exists;
* CompE: clients upload encrypted local models; the server evaluates each
  user's mutual cross-entropy over ciphertexts and returns Enc(E_i);
* PoKE: clients publish their decryption of E_i and prove it; provable
  frauds are removed and both sides derive the unnormalized weights;
* PoKM: clients upload masked weighted models; the server rebuilds the
  reference ciphertext homomorphically and demands a proof of plaintext
  knowledge per coordinate; failures are removed;
* WAgg: signature-based consistency check on the surviving set, mask
  recovery from Shamir shares, and the weighted average of the survivors.

Scripted adversaries cover the three tolerated malicious behaviors
(fraudulent weight decryption, fraudulent weighted model, inconsistent
dropout views from the server); dropout schedules realize worst-case
timing (after the expensive server work).  All randomness flows from one
seed, so runs replay byte-identically.

Time accounting mirrors the benchmark convention: the server column is the
wall time of the whole step (the server drives the round), the user column
is each client's own compute, averaged in the report.
"""

import math
import struct
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from ._rng import HashDrbg
from ._wire import (
    pack_int,
    pack_int_list,
    pack_uint,
    pack_uint_list,
    unpack_int,
    unpack_int_list,
    unpack_uint,
    unpack_uint_list,
)
from .bus import SERVER_ID, MessageBus, MsgType, StepTag, Transcript
from .disparity import (
    WeightRecord,
    compute_e,
    compute_ll,
    compute_ls,
    compute_weights,
    dyadic_residue,
    quantized_polys,
)
from .fixedpoint import FixedPointCodec, ScaledResidue, to_signed
from .logreg import (
    LogRegModel,
    TrainConfig,
    poly_magnitude_bound_bits,
    train,
    user_linear_response,
    user_poly_response,
)
from .paillier import (
    Ciphertext,
    ciphertext_from_bytes,
    ciphertext_to_bytes,
    decrypt,
    encrypt,
    generate_keypair,
    he_add,
    he_scalar_mul,
    lift_scale,
)
from .secagg import (
    AggregationAbort,
    ConsistencyAbortError,
    Ed25519KeyPair,
    MaskState,
    SignedView,
    build_mask_state,
    check_view_bundle,
    model_aggregation_recovery,
    pack_view,
)
from .shamir import ShamirShare, draw_seed, share
from .zkpopk import (
    prepare_decryption_claim,
    prover_session,
    recover_zero_witness,
    verifier_session,
)

BEHAVIOR_FRAUDULENT_E = "fraudulent_E_decryption"
BEHAVIOR_FRAUDULENT_MODEL = "fraudulent_weighted_model"
BEHAVIOR_INCONSISTENT_VIEW = "inconsistent_dropout_view"
ADVERSARY_BEHAVIORS = (
    BEHAVIOR_FRAUDULENT_E,
    BEHAVIOR_FRAUDULENT_MODEL,
    BEHAVIOR_INCONSISTENT_VIEW,
)


class ToleranceError(ValueError):
    """A threat-model bound is violated; carries the bound's name."""

    def __init__(self, bound: str, message: str):
        super().__init__(message)
        self.bound = bound


class ProtocolAbort(RuntimeError):
    """The round cannot continue; carries the failing step label."""

    def __init__(self, step: str, reason: str):
        super().__init__(f"{step}: {reason}")
        self.step = step
        self.reason = reason


class DuplicateSetupError(RuntimeError):
    """Encrypted datasets may only be uploaded once."""


def tolerance_bounds(n: int) -> tuple[int, int]:
    """(minimum threshold, maximum scripted malicious clients) for n users."""
    if n < 1:
        raise ToleranceError("population", "need at least one client")
    t_min = (2 * n) // 3 + 1
    adv_max = -(-n // 3) - 1
    return t_min, adv_max


def validate_tolerance(n: int, t: int, n_adversaries: int) -> tuple[int, int]:
    """Check (n, t, #malicious) against the tolerance bounds.

    Returns (t_min, adv_max) when acceptable, raises ToleranceError naming
    the violated bound otherwise.
    """
    t_min, adv_max = tolerance_bounds(n)
    if t > n:
        raise ToleranceError("threshold-upper-bound", f"t={t} exceeds n={n}")
    if t < t_min:
        raise ToleranceError(
            "threshold-lower-bound",
            f"t={t} below the lower bound floor(2n/3)+1 = {t_min}",
        )
    if n_adversaries > adv_max:
        raise ToleranceError(
            "adversary-count",
            f"{n_adversaries} malicious clients exceed ceil(n/3)-1 = {adv_max}",
        )
    return t_min, adv_max


@dataclass(frozen=True)
class AdversaryScript:
    """One scripted deviation.

    For the two client behaviors `target` is the cheating client; for the
    inconsistent-view behavior it is the honest client shown the false view.
    """

    behavior: str
    target: int
    trigger_round: int = 0

    def __post_init__(self):
        if self.behavior not in ADVERSARY_BEHAVIORS:
            raise ValueError(f"unknown behavior {self.behavior!r}")

    def active(self, round_no: int) -> bool:
        return round_no == self.trigger_round


@dataclass(frozen=True)
class DropoutSchedule:
    """Worst-case dropout: fractions realized during PoKE and after the PoKM
    upload.  `explicit` pins arbitrary placements, e.g. (("Init", (3,)),)."""

    phase1_fraction: float = 0.0
    phase2_fraction: float = 0.0
    explicit: tuple[tuple[str, tuple[int, ...]], ...] = ()

    def explicit_for(self, step_label: str) -> tuple[int, ...]:
        for label, uids in self.explicit:
            if label == step_label:
                return uids
        return ()


@dataclass
class ProtocolConfig:
    n_clients: int
    threshold: int | None = None
    paillier_bits: int = 512
    kappa: int = 80
    alpha: float = 1.0
    fraction_bits: int = 27
    integer_bits: int = 17
    seed: int = 0
    rounds: int = 1
    epochs: int = 40
    learning_rate: float = 0.25
    binary_cross_entropy: bool = False
    verify_ll_decryption: bool = True
    baseline: bool = False
    dropout: DropoutSchedule = field(default_factory=DropoutSchedule)
    adversaries: tuple[AdversaryScript, ...] = ()
    mask_bits: int | None = None

    def __post_init__(self):
        if self.mask_bits is None:
            self.mask_bits = (2 * self.integer_bits + 2 * self.fraction_bits
                              + self.kappa)
        self.adversaries = tuple(self.adversaries)

    @property
    def resolved_threshold(self) -> int:
        if self.threshold is not None:
            return self.threshold
        return tolerance_bounds(self.n_clients)[0]

    @property
    def mask_modulus(self) -> int:
        return 1 << self.mask_bits

    def scripted_malicious_clients(self) -> tuple[int, ...]:
        return tuple(sorted({
            a.target for a in self.adversaries
            if a.behavior in (BEHAVIOR_FRAUDULENT_E, BEHAVIOR_FRAUDULENT_MODEL)
        }))

    def validate(self) -> None:
        validate_tolerance(self.n_clients, self.resolved_threshold,
                           len(self.scripted_malicious_clients()))
        if self.mask_bits + 2 > self.paillier_bits:
            raise ValueError(
                f"mask ring 2^{self.mask_bits} does not fit {self.paillier_bits}-bit "
                "Paillier plaintexts"
            )


@dataclass
class RoundState:
    """Alive-set chain and per-round artifacts."""

    round_no: int
    u: tuple[int, ...] = ()
    u1: tuple[int, ...] = ()
    u2: tuple[int, ...] = ()
    u3: tuple[int, ...] = ()
    u4: tuple[int, ...] = ()
    u5: tuple[int, ...] = ()
    u6: tuple[int, ...] = ()
    beta_e: dict[int, int] = field(default_factory=dict)
    beta_m: dict[int, int] = field(default_factory=dict)
    dropped_phase1: tuple[int, ...] = ()
    dropped_phase2: tuple[int, ...] = ()
    excluded: tuple[int, ...] = ()
    weight_records: list[WeightRecord] = field(default_factory=list)
    final_model: list[float] | None = None
    realized_r1: float = 0.0
    realized_r2: float = 0.0

    @property
    def chain(self):
        return (self.u, self.u1, self.u2, self.u3, self.u4, self.u5, self.u6)


class Metrics:
    """Per-step wall clock: whole-step time on the server row, per-client
    compute on the user row."""

    def __init__(self):
        self.server_seconds: dict[StepTag, float] = {}
        self.user_seconds: dict[tuple[StepTag, int], float] = {}

    @contextmanager
    def timed(self, step: StepTag, party: str, uid: int = SERVER_ID):
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            if party == "server":
                self.server_seconds[step] = self.server_seconds.get(step, 0.0) + elapsed
            else:
                key = (step, uid)
                self.user_seconds[key] = self.user_seconds.get(key, 0.0) + elapsed

    def mean_user_seconds(self, step: StepTag) -> float:
        values = [v for (s, _), v in self.user_seconds.items() if s == step]
        return sum(values) / len(values) if values else 0.0


@dataclass
class ClientState:
    uid: int
    features: np.ndarray
    labels: np.ndarray
    pk: object
    sk: object
    codec: FixedPointCodec
    sig: Ed25519KeyPair
    rng: HashDrbg
    model: LogRegModel | None = None
    mask_state: MaskState | None = None
    held_shares: dict = field(default_factory=dict)
    enc_e: Ciphertext | None = None
    published_e: int | None = None
    omega_resid: int | None = None
    fetched_view: tuple[int, ...] = ()


@dataclass
class ServerState:
    bench_features: np.ndarray
    bench_labels: np.ndarray
    global_model: LogRegModel
    rng: HashDrbg
    enc_datasets: dict[int, list] = field(default_factory=dict)
    enc_masks: dict[int, list] = field(default_factory=dict)
    enc_models: dict[int, list] = field(default_factory=dict)
    enc_e: dict[int, Ciphertext] = field(default_factory=dict)
    published_e: dict[int, int] = field(default_factory=dict)
    uploads: dict[int, list[int]] = field(default_factory=dict)
    setup_done: bool = False


_KEYPAIR_CACHE: dict[tuple[int, bytes], tuple] = {}


def _cached_keypair(bits: int, rng: HashDrbg):
    key = (bits, rng.bytes(32))
    if key not in _KEYPAIR_CACHE:
        _KEYPAIR_CACHE[key] = generate_keypair(bits, rng)
    return _KEYPAIR_CACHE[key]


def _pack_ct_list(cts) -> bytes:
    out = [struct.pack(">I", len(cts))]
    out.extend(ciphertext_to_bytes(c) for c in cts)
    return b"".join(out)


def _unpack_ct_list(buf: bytes, off: int = 0):
    (count,) = struct.unpack_from(">I", buf, off)
    off += 4
    cts = []
    for _ in range(count):
        ct, off = ciphertext_from_bytes(buf, off)
        cts.append(ct)
    return cts, off


def _pack_share_entries(entries) -> bytes:
    # entry: (key, ShamirShare); key = ("b", owner) | ("s", u, v) with u < v
    out = [struct.pack(">I", len(entries))]
    for key, sh in entries:
        if key[0] == "b":
            out.append(struct.pack(">BII", 0, key[1], 0))
        else:
            out.append(struct.pack(">BII", 1, key[1], key[2]))
        out.append(sh.to_bytes())
    return b"".join(out)


def _unpack_share_entries(buf: bytes, threshold: int, off: int = 0):
    (count,) = struct.unpack_from(">I", buf, off)
    off += 4
    entries = []
    for _ in range(count):
        kind, a, b = struct.unpack_from(">BII", buf, off)
        off += 9
        sh, off = ShamirShare.from_bytes(buf, threshold, off=off)
        key = ("b", a) if kind == 0 else ("s", a, b)
        entries.append((key, sh))
    return entries, off


def _unpack_view(buf: bytes, off: int = 0):
    (count,) = struct.unpack_from(">I", buf, off)
    view = tuple(struct.unpack_from(f">{count}I", buf, off + 4))
    return view, off + 4 + 4 * count


class ProtocolRunner:
    """Drives Setup plus rounds of Init/CompE/PoKE/PoKM/WAgg over the bus."""

    def __init__(self, config: ProtocolConfig, client_datasets,
                 benchmark, bus: MessageBus | None = None,
                 metrics: Metrics | None = None):
        config.validate()
        if len(client_datasets) != config.n_clients:
            raise ValueError("one dataset per client required")
        self.config = config
        self.bus = bus if bus is not None else MessageBus(Transcript())
        self.metrics = metrics if metrics is not None else Metrics()
        self.t = config.resolved_threshold

        bench_features, bench_labels = benchmark
        self.dim = int(np.asarray(bench_features).shape[1]) + 1
        root = HashDrbg(struct.pack(">Q", config.seed), "fedwagg-run")
        self._dropout_rng = root.child("dropout")
        self.server = ServerState(
            bench_features=np.asarray(bench_features, dtype=float),
            bench_labels=np.asarray(bench_labels, dtype=int),
            global_model=LogRegModel(theta=np.zeros(self.dim)),
            rng=root.child("server"),
        )
        self.clients: dict[int, ClientState] = {}
        slack = config.kappa + 10 + config.fraction_bits
        for idx, (features, labels) in enumerate(client_datasets):
            uid = idx + 1
            features = np.asarray(features, dtype=float)
            if features.shape[1] != self.dim - 1:
                raise ValueError(f"client {uid} feature dimension mismatch")
            pk, sk = _cached_keypair(config.paillier_bits, root.child(f"paillier-{uid}"))
            codec = FixedPointCodec(
                modulus=pk.n, integer_bits=config.integer_bits,
                fraction_bits=config.fraction_bits, slack_bits=slack,
            )
            self.clients[uid] = ClientState(
                uid=uid, features=features,
                labels=np.asarray(labels, dtype=int), pk=pk, sk=sk, codec=codec,
                sig=Ed25519KeyPair.from_rng(root.child(f"sig-{uid}")),
                rng=root.child(f"client-{uid}"),
            )
        self._validate_ring_capacity()
        self.rounds: list[RoundState] = []
        self._aggregate_y: list[int] = []

    # -- configuration checks --------------------------------------------------

    def _score_bits(self) -> int:
        # |theta . [1, x]| < 2^integer_bits * (dim) for normalized features
        return self.config.integer_bits + max(1, math.ceil(math.log2(self.dim + 1)))

    def _z_bits(self) -> int:
        cfg = self.config
        return max(self._score_bits(), cfg.kappa - 2 * cfg.fraction_bits) + 2

    def _h_mask_bits(self) -> int:
        cfg = self.config
        nls_q, _ = quantized_polys(cfg.fraction_bits)
        bound = poly_magnitude_bound_bits(nls_q, self._z_bits(),
                                          2 * cfg.fraction_bits)
        return bound + 2 + cfg.kappa

    def _validate_ring_capacity(self) -> None:
        cfg = self.config
        f = cfg.fraction_bits
        nls_q, _ = quantized_polys(f)
        term_bits = poly_magnitude_bound_bits(nls_q, self._z_bits(), 2 * f)
        n_local = max((len(c.labels) for c in self.clients.values()), default=1)
        n_bench = len(self.server.bench_labels)
        budgets = {
            "poly-assembly": term_bits + 4 + math.ceil(math.log2(n_bench + 2)),
            "local-loss-sum": self._h_mask_bits() + f + 2
                              + math.ceil(math.log2(n_local + 2)),
            "masked-upload": cfg.mask_bits + 2,
        }
        limit = cfg.paillier_bits - 1
        for name, bits in budgets.items():
            if bits > limit:
                raise ValueError(
                    f"ring capacity: {name} needs ~{bits} bits but the plaintext "
                    f"ring has only {limit}; raise paillier_bits or shrink the "
                    "fixed-point/kappa parameters"
                )

    # -- helpers -----------------------------------------------------------------

    def _send(self, sender: int, receiver: int, step: StepTag,
              msg_type: MsgType, payload: bytes) -> bytes:
        return self.bus.send(sender, receiver, step, msg_type, payload)

    def _alive_after_explicit(self, step_label: str, alive: list[int]) -> list[int]:
        victims = set(self.config.dropout.explicit_for(step_label))
        return [u for u in alive if u not in victims]

    def _scheduled_dropouts(self, fraction: float, eligible: list[int]) -> list[int]:
        count = int(fraction * self.config.n_clients)
        protected = {a.target for a in self.config.adversaries}
        pool = [u for u in eligible if u not in protected]
        count = min(count, len(pool))
        return sorted(self._dropout_rng.choice_subset(pool, count))

    def _adversary(self, behavior: str, round_no: int) -> AdversaryScript | None:
        for script in self.config.adversaries:
            if script.behavior == behavior and script.active(round_no):
                return script
        return None

    def _bus_ppopk_vector(self, step: StepTag, uid: int, cts, claims) -> int:
        """Decryption proofs for a ciphertext vector, messages over the bus.

        Server verifies, client uid proves; returns the AND of the verdicts.
        """
        client = self.clients[uid]
        pk = client.pk
        cfg = self.config
        if len(cts) != len(claims):
            raise ValueError("claim count mismatch")
        if not cts:
            return 1
        c_primes = [prepare_decryption_claim(pk, ct, claim, self.server.rng)
                    for ct, claim in zip(cts, claims)]
        delivered = self._send(SERVER_ID, uid, step, MsgType.POPK_CPRIME,
                               pack_uint_list(c_primes))
        with self.metrics.timed(step, "user", uid):
            received, _ = unpack_uint_list(delivered)
            provers = []
            commits = []
            for c_prime in received:
                witness = recover_zero_witness(client.sk, pk, c_prime)
                session = prover_session(pk, c_prime, witness, client.rng,
                                         kappa_e=cfg.kappa)
                provers.append(session)
                commits.append(session.prover_commit())
        delivered = self._send(uid, SERVER_ID, step, MsgType.COMMIT_A,
                               pack_uint_list(commits))
        commits_seen, _ = unpack_uint_list(delivered)
        verifiers = [verifier_session(pk, c_prime, self.server.rng,
                                      kappa_e=cfg.kappa)
                     for c_prime in c_primes]
        challenges = [v.verifier_challenge(a)
                      for v, a in zip(verifiers, commits_seen)]
        delivered = self._send(SERVER_ID, uid, step, MsgType.CHALLENGE_E,
                               pack_uint_list(challenges))
        with self.metrics.timed(step, "user", uid):
            challenges_seen, _ = unpack_uint_list(delivered)
            responses = [p.prover_respond(e)
                         for p, e in zip(provers, challenges_seen)]
        delivered = self._send(uid, SERVER_ID, step, MsgType.RESPONSE_Z,
                               pack_uint_list(responses))
        responses_seen, _ = unpack_uint_list(delivered)
        beta = 1
        for v, z in zip(verifiers, responses_seen):
            if v.verifier_finish(z).beta == 0:
                beta = 0
        return beta

    # -- Setup ---------------------------------------------------------------------

    def setup_phase(self) -> None:
        """Each client uploads its encrypted dataset; runs exactly once."""
        if self.server.setup_done:
            raise DuplicateSetupError("encrypted datasets already uploaded")
        if self.config.baseline:
            self.server.setup_done = True
            return
        f = self.config.fraction_bits
        with self.metrics.timed(StepTag.SETUP, "server"):
            for uid in sorted(self.clients):
                client = self.clients[uid]
                with self.metrics.timed(StepTag.SETUP, "user", uid):
                    parts = [struct.pack(">I", len(client.labels))]
                    for x, y in zip(client.features, client.labels):
                        enc_x = [encrypt(client.pk, client.codec.encode(v).value,
                                         rng=client.rng, scale_exp=f) for v in x]
                        enc_y = encrypt(client.pk, client.codec.encode(int(y)).value,
                                        rng=client.rng, scale_exp=f)
                        parts.append(_pack_ct_list(enc_x))
                        parts.append(ciphertext_to_bytes(enc_y))
                    payload = b"".join(parts)
                delivered = self._send(uid, SERVER_ID, StepTag.SETUP,
                                       MsgType.ENC_DATASET, payload)
                (count,) = struct.unpack_from(">I", delivered, 0)
                off = 4
                samples = []
                for _ in range(count):
                    enc_x, off = _unpack_ct_list(delivered, off)
                    enc_y, off = ciphertext_from_bytes(delivered, off)
                    samples.append((enc_x, enc_y))
                self.server.enc_datasets[uid] = samples
            self.server.setup_done = True

    # -- Step 0: Init -----------------------------------------------------------------

    def step0_init(self, state: RoundState) -> None:
        cfg = self.config
        step = StepTag.INIT
        participants = sorted(self.clients)
        state.u = tuple(participants)
        for client in self.clients.values():
            client.held_shares = {}
            client.mask_state = None
        alive = self._alive_after_explicit("Init", participants)
        if len(alive) < self.t:
            raise ProtocolAbort("Init", f"{len(alive)} alive users < t={self.t}")
        state.u1 = tuple(alive)
        q = cfg.mask_modulus

        # pairwise seed agreement over the authenticated bus: lower id draws
        pair_seeds: dict[int, dict[int, int]] = {u: {} for u in alive}
        for i, u in enumerate(alive):
            client = self.clients[u]
            for v in alive[i + 1:]:
                with self.metrics.timed(step, "user", u):
                    seed = draw_seed(client.rng)
                    payload = seed.to_bytes(16, "big")
                delivered = self._send(u, v, step, MsgType.PAIR_SEED, payload)
                with self.metrics.timed(step, "user", v):
                    received = int.from_bytes(delivered, "big")
                pair_seeds[u][v] = seed
                pair_seeds[v][u] = received

        # self seeds, Shamir sharing (t-of-|U|, indexed over the round set),
        # mask construction; shares go to every alive user including self
        index_of = {u: i + 1 for i, u in enumerate(participants)}
        outgoing: dict[int, dict[int, list]] = {u: {v: [] for v in alive} for u in alive}
        for u in alive:
            client = self.clients[u]
            with self.metrics.timed(step, "user", u):
                b_u = draw_seed(client.rng)
                owned = [(("b", u), b_u)]
                for v in alive:
                    if u < v:
                        owned.append((("s", u, v), pair_seeds[u][v]))
                for key, secret in owned:
                    shares = share(secret, self.t, len(participants), client.rng)
                    for v in alive:
                        outgoing[u][v].append((key, shares[index_of[v] - 1]))
                client.mask_state = build_mask_state(u, b_u, pair_seeds[u],
                                                     self.dim, q)
        for u in alive:
            for v in alive:
                entries = outgoing[u][v]
                if u == v:
                    self.clients[v].held_shares.update(dict(entries))
                    continue
                delivered = self._send(u, v, step, MsgType.MASK_SHARE,
                                       _pack_share_entries(entries))
                with self.metrics.timed(step, "user", v):
                    parsed, _ = _unpack_share_entries(delivered, self.t)
                    self.clients[v].held_shares.update(dict(parsed))

        if cfg.baseline:
            state.u2 = tuple(alive)
            return

        # encrypted masks, uploaded before any weight/model information exists
        f = cfg.fraction_bits
        for u in alive:
            client = self.clients[u]
            with self.metrics.timed(step, "user", u):
                cts = [encrypt(client.pk, r_val, rng=client.rng, scale_exp=2 * f)
                       for r_val in client.mask_state.combined]
                payload = _pack_ct_list(cts)
            delivered = self._send(u, SERVER_ID, step, MsgType.ENC_MASK, payload)
            cts_seen, _ = _unpack_ct_list(delivered)
            self.server.enc_masks[u] = cts_seen
        state.u2 = tuple(alive)

    # -- Step 1: CompE ------------------------------------------------------------------

    def _train_local_models(self, alive, step: StepTag) -> None:
        cfg = self.config
        train_cfg = TrainConfig(learning_rate=cfg.learning_rate, epochs=cfg.epochs)
        for u in alive:
            client = self.clients[u]
            with self.metrics.timed(step, "user", u):
                client.model = train((client.features, client.labels), train_cfg,
                                     initial=self.server.global_model)

    def step1_compe(self, state: RoundState) -> None:
        cfg = self.config
        step = StepTag.COMPE
        if cfg.baseline:
            state.u3 = state.u2
            return
        alive = self._alive_after_explicit("CompE", list(state.u2))
        self._train_local_models(alive, step)
        f = cfg.fraction_bits

        for u in alive:
            client = self.clients[u]
            with self.metrics.timed(step, "user", u):
                cts = [encrypt(client.pk, client.codec.encode(t).value,
                               rng=client.rng, scale_exp=f)
                       for t in client.model.theta]
                payload = _pack_ct_list(cts)
            delivered = self._send(u, SERVER_ID, step, MsgType.ENC_MODEL, payload)
            cts_seen, _ = _unpack_ct_list(delivered)
            self.server.enc_models[u] = cts_seen
        state.u3 = tuple(alive)
        h_mask_bits = self._h_mask_bits()

        for u in state.u3:
            client = self.clients[u]
            pk = client.pk

            def poly_respond(enc_z, qpolys, uid=u):
                cl = self.clients[uid]
                payload = ciphertext_to_bytes(enc_z) + bytes([len(qpolys)])
                delivered = self._send(SERVER_ID, uid, step, MsgType.ENC_Z, payload)
                with self.metrics.timed(step, "user", uid):
                    ct, _ = ciphertext_from_bytes(delivered)
                    enc_z2, encs = user_poly_response(cl.sk, cl.pk, ct, qpolys,
                                                      rng=cl.rng)
                    reply = ciphertext_to_bytes(enc_z2) + _pack_ct_list(encs)
                raw = self._send(uid, SERVER_ID, step, MsgType.ENC_Z2_SIGMA, reply)
                z2_seen, off = ciphertext_from_bytes(raw)
                encs_seen, _ = _unpack_ct_list(raw, off)
                return z2_seen, encs_seen

            def linear_respond(idx, enc_h, uid=u):
                cl = self.clients[uid]
                payload = struct.pack(">I", idx) + ciphertext_to_bytes(enc_h)
                delivered = self._send(SERVER_ID, uid, step, MsgType.ENC_H, payload)
                with self.metrics.timed(step, "user", uid):
                    (sample_idx,) = struct.unpack_from(">I", delivered, 0)
                    ct, _ = ciphertext_from_bytes(delivered, 4)
                    y_bit = int(cl.labels[sample_idx])
                    h_plus_r, enc_y_r, enc_r = user_linear_response(
                        cl.sk, cl.pk, ct, y_bit, cfg.fraction_bits,
                        mask_bits=h_mask_bits, rng=cl.rng,
                        include_enc_r=cfg.verify_ll_decryption,
                    )
                    reply = pack_int(h_plus_r) + ciphertext_to_bytes(enc_y_r)
                    reply += b"\x01" + ciphertext_to_bytes(enc_r) if enc_r else b"\x00"
                raw = self._send(uid, SERVER_ID, step, MsgType.H_PLUS_R, reply)
                value, off = unpack_int(raw)
                y_r_seen, off = ciphertext_from_bytes(raw, off)
                r_seen = None
                if raw[off] == 1:
                    r_seen, _ = ciphertext_from_bytes(raw, off + 1)
                return value, y_r_seen, r_seen

            verifier_for = None
            if cfg.verify_ll_decryption:
                def verifier_for(idx, uid=u):
                    def check(c_check, claimed):
                        return self._bus_ppopk_vector(step, uid, [c_check],
                                                      [claimed]) == 1
                    return check

            enc_ls = compute_ls(
                pk, self.server.enc_models[u], self.server.bench_features,
                self.server.bench_labels, fraction_bits=f, kappa=cfg.kappa,
                rng=self.server.rng, poly_respond=poly_respond,
                binary_ce=cfg.binary_cross_entropy,
            )
            enc_ll = compute_ll(
                pk, self.server.enc_datasets[u],
                list(self.server.global_model.theta), fraction_bits=f,
                kappa=cfg.kappa, rng=self.server.rng,
                poly_respond=poly_respond, linear_respond=linear_respond,
                verifier_for=verifier_for,
                binary_ce=cfg.binary_cross_entropy,
            )
            enc_e = compute_e(pk, lift_scale(pk, enc_ls, f), enc_ll)
            self.server.enc_e[u] = enc_e
            delivered = self._send(SERVER_ID, u, step, MsgType.ENC_E,
                                   ciphertext_to_bytes(enc_e))
            with self.metrics.timed(step, "user", u):
                client.enc_e, _ = ciphertext_from_bytes(delivered)

    # -- Step 2: PoKE --------------------------------------------------------------------

    def step2_poke(self, state: RoundState) -> None:
        cfg = self.config
        step = StepTag.POKE
        dropped = self._scheduled_dropouts(cfg.dropout.phase1_fraction,
                                           list(state.u3))
        state.dropped_phase1 = tuple(dropped)
        state.realized_r1 = len(dropped) / cfg.n_clients
        survivors = [u for u in state.u3 if u not in set(dropped)]
        if cfg.baseline:
            state.u4 = tuple(survivors)
            return
        fraud = self._adversary(BEHAVIOR_FRAUDULENT_E, state.round_no)

        passed = []
        excluded = []
        for u in survivors:
            client = self.clients[u]
            with self.metrics.timed(step, "user", u):
                true_resid = decrypt(client.sk, client.pk, client.enc_e)
                published = true_resid
                if fraud is not None and fraud.target == u:
                    offset = 1 << (client.enc_e.scale_exp - 1)  # 0.5 at scale
                    published = (true_resid - offset) % client.pk.n
                client.published_e = published
            delivered = self._send(u, SERVER_ID, step, MsgType.E_PUBLISH,
                                   pack_uint(published))
            seen, _ = unpack_uint(delivered)
            self.server.published_e[u] = seen
            beta = self._bus_ppopk_vector(step, u, [self.server.enc_e[u]], [seen])
            state.beta_e[u] = beta
            (passed if beta == 1 else excluded).append(u)
        state.u4 = tuple(passed)
        state.excluded = tuple(sorted(set(state.excluded) | set(excluded)))

        # both sides turn the published E into the unnormalized weights
        entries = []
        for u in state.u4:
            client = self.clients[u]
            resid = ScaledResidue(self.server.published_e[u],
                                  self.server.enc_e[u].scale_exp)
            e_value = client.codec.decode(resid)
            entries.append((u, e_value, len(client.labels)))
        state.weight_records = compute_weights(entries, cfg.alpha)
        for record in state.weight_records:
            record.verified = state.beta_e.get(record.user, 0) == 1
            client = self.clients[record.user]
            with self.metrics.timed(step, "user", record.user):
                client.omega_resid = dyadic_residue(record.omega, cfg.fraction_bits)

    # -- Step 3: PoKM ---------------------------------------------------------------------

    def step3_pokm(self, state: RoundState) -> None:
        cfg = self.config
        step = StepTag.POKM
        f = cfg.fraction_bits
        q = cfg.mask_modulus
        if cfg.baseline:
            self._train_local_models(list(state.u4), step)

        fraud = self._adversary(BEHAVIOR_FRAUDULENT_MODEL, state.round_no)
        uploads: dict[int, list[int]] = {}
        for u in state.u4:
            client = self.clients[u]
            with self.metrics.timed(step, "user", u):
                theta_resids = [
                    to_signed(client.codec.encode(t).value, client.pk.n)
                    for t in client.model.theta
                ]
                if cfg.baseline:
                    payload_ints = theta_resids
                else:
                    payload_ints = [client.omega_resid * tr for tr in theta_resids]
                masked = [p + r for p, r in
                          zip(payload_ints, client.mask_state.combined)]
                if fraud is not None and fraud.target == u:
                    masked[0] += 1
            delivered = self._send(u, SERVER_ID, step, MsgType.MASKED_MODEL,
                                   pack_int_list(masked))
            seen, _ = unpack_int_list(delivered)
            uploads[u] = seen
        state.u5 = tuple(sorted(uploads))
        self.server.uploads = uploads

        dropped = self._scheduled_dropouts(cfg.dropout.phase2_fraction,
                                           list(state.u5))
        state.dropped_phase2 = tuple(dropped)
        state.realized_r2 = len(dropped) / cfg.n_clients
        responsive = [u for u in state.u5 if u not in set(dropped)]

        passed = []
        excluded = []
        for u in responsive:
            if cfg.baseline:
                state.beta_m[u] = 1
                passed.append(u)
                continue
            client = self.clients[u]
            refs = [
                he_add(client.pk,
                       he_scalar_mul(client.pk, ct,
                                     client.omega_resid % client.pk.n,
                                     k_scale=f),
                       enc_r)
                for ct, enc_r in zip(self.server.enc_models[u],
                                     self.server.enc_masks[u])
            ]
            claims = [v % client.pk.n for v in uploads[u]]
            beta = self._bus_ppopk_vector(step, u, refs, claims)
            state.beta_m[u] = beta
            (passed if beta == 1 else excluded).append(u)
        state.u6 = tuple(passed)
        state.excluded = tuple(sorted(set(state.excluded) | set(excluded)))
        if len(state.u6) < self.t:
            raise ProtocolAbort("PoKM", f"{len(state.u6)} alive users < t={self.t}")

        y = [0] * self.dim
        for u in state.u6:
            for k in range(self.dim):
                y[k] = (y[k] + uploads[u][k]) % q
        self._aggregate_y = y

    # -- Step 4: WAgg ------------------------------------------------------------------------

    def step4_wagg(self, state: RoundState) -> None:
        cfg = self.config
        step = StepTag.WAGG
        q = cfg.mask_modulus
        f = cfg.fraction_bits
        alive = list(state.u6)
        inconsistent = self._adversary(BEHAVIOR_INCONSISTENT_VIEW, state.round_no)

        # the server publishes the alive set; per-user views may be equivocated
        views: dict[int, tuple[int, ...]] = {}
        for u in alive:
            view = tuple(alive)
            if inconsistent is not None and inconsistent.target == u:
                honest_alive = [v for v in alive if v != u]
                if honest_alive:
                    view = tuple(v for v in alive if v != honest_alive[0])
            delivered = self._send(SERVER_ID, u, step, MsgType.ALIVE_VIEW,
                                   pack_view(view))
            with self.metrics.timed(step, "user", u):
                fetched, _ = _unpack_view(delivered)
                self.clients[u].fetched_view = fetched
                views[u] = fetched

        signed: list[SignedView] = []
        for u in alive:
            client = self.clients[u]
            with self.metrics.timed(step, "user", u):
                view_bytes = pack_view(client.fetched_view)
                signature = client.sig.sign(view_bytes)
                payload = (struct.pack(">I", len(view_bytes)) + view_bytes
                           + struct.pack(">I", len(signature)) + signature)
            delivered = self._send(u, SERVER_ID, step, MsgType.SIGNED_VIEW, payload)
            (vlen,) = struct.unpack_from(">I", delivered, 0)
            vbytes = delivered[4 : 4 + vlen]
            (slen,) = struct.unpack_from(">I", delivered, 4 + vlen)
            sig = delivered[8 + vlen : 8 + vlen + slen]
            view, _ = _unpack_view(vbytes)
            signed.append(SignedView(view=view, signer=u, signature=sig))

        groups: dict[tuple[int, ...], list[SignedView]] = {}
        for sv in signed:
            groups.setdefault(sv.view, []).append(sv)
        bundle = max(groups.values(), key=len)
        if len(bundle) < self.t:
            raise ProtocolAbort(
                "WAgg", f"server gathered {len(bundle)} signed views < t={self.t}"
            )
        bundle_parts = [struct.pack(">I", len(bundle))]
        for sv in bundle:
            vbytes = pack_view(sv.view)
            bundle_parts.append(struct.pack(">I", sv.signer))
            bundle_parts.append(struct.pack(">I", len(vbytes)) + vbytes)
            bundle_parts.append(struct.pack(">I", len(sv.signature)) + sv.signature)
        bundle_bytes = b"".join(bundle_parts)
        public_keys = {u: self.clients[u].sig.public_bytes for u in alive}
        for u in alive:
            delivered = self._send(SERVER_ID, u, step, MsgType.VIEW_BUNDLE,
                                   bundle_bytes)
            with self.metrics.timed(step, "user", u):
                (count,) = struct.unpack_from(">I", delivered, 0)
                off = 4
                received = []
                for _ in range(count):
                    (signer,) = struct.unpack_from(">I", delivered, off)
                    off += 4
                    (vlen,) = struct.unpack_from(">I", delivered, off)
                    view, _ = _unpack_view(delivered[off + 4 : off + 4 + vlen])
                    off += 4 + vlen
                    (slen,) = struct.unpack_from(">I", delivered, off)
                    sig = delivered[off + 4 : off + 4 + slen]
                    off += 4 + slen
                    received.append(SignedView(view=view, signer=signer,
                                               signature=sig))
                try:
                    check_view_bundle(u, self.clients[u].fetched_view, received,
                                      public_keys, self.t)
                except ConsistencyAbortError as exc:
                    raise ProtocolAbort("WAgg", str(exc)) from exc

        # share reveal and mask recovery
        needed_keys = [("b", v) for v in state.u6]
        dropped_needed = [u for u in state.u1 if u not in set(state.u6)]
        for du in dropped_needed:
            for v in state.u6:
                needed_keys.append(("s", min(du, v), max(du, v)))
        rows: dict[tuple, list[ShamirShare]] = {key: [] for key in needed_keys}
        for u in alive:
            client = self.clients[u]
            with self.metrics.timed(step, "user", u):
                entries = [(key, client.held_shares[key]) for key in needed_keys
                           if key in client.held_shares]
                payload = _pack_share_entries(entries)
            delivered = self._send(u, SERVER_ID, step, MsgType.SEED_SHARE_REVEAL,
                                   payload)
            parsed, _ = _unpack_share_entries(delivered, self.t)
            for key, sh in parsed:
                rows[key].append(sh)

        try:
            z = model_aggregation_recovery(self._aggregate_y, state.u1,
                                           state.u6, self.t, rows, q)
        except AggregationAbort as exc:
            raise ProtocolAbort("WAgg", str(exc)) from exc
        signed_z = [to_signed(v, q) for v in z]
        if cfg.baseline:
            denom = float(len(state.u6)) * (1 << f)
        else:
            # z decodes at scale 2f; dividing by sum(omega) * 2^f lands on
            # the weighted average in real units
            denom = float(sum(self.clients[u].omega_resid for u in state.u6)) * (1 << f)
        final = [v / denom for v in signed_z]
        state.final_model = final
        self.server.global_model = LogRegModel(theta=np.array(final))
        payload = pack_int_list([dyadic_residue(v, f) for v in final])
        for u in alive:
            self._send(SERVER_ID, u, step, MsgType.GLOBAL_MODEL, payload)

    # -- round driver ---------------------------------------------------------------------

    def run_round(self, round_no: int) -> RoundState:
        state = RoundState(round_no=round_no)
        self.rounds.append(state)
        steps = (
            (StepTag.INIT, self.step0_init),
            (StepTag.COMPE, self.step1_compe),
            (StepTag.POKE, self.step2_poke),
            (StepTag.POKM, self.step3_pokm),
            (StepTag.WAGG, self.step4_wagg),
        )
        for tag, fn in steps:
            with self.metrics.timed(tag, "server"):
                fn(state)
        return state

    def run(self) -> list[RoundState]:
        if not self.server.setup_done:
            self.setup_phase()
        for round_no in range(self.config.rounds):
            self.run_round(round_no)
        return self.rounds
